//! Synthetic test energies `F_f(Aρ(u)) + Σ r(u_i − u*_i)` with a planted
//! global minimizer, and the restart protocol that scores methods on them.

mod error;
mod families;
mod instance;
mod seed;
mod spline;
mod suite;

pub use error::{BenchError, Result};
pub use families::{make_nonlinearity, make_outer, InnerFamily, OuterFamily, OuterSetup};
pub use instance::{make_case, normalized_gap, sampled_median_energy, CaseInstance, CaseSpec};
pub use seed::{derive_seed, splitmix64};
pub use spline::CubicSpline;
pub use suite::{
    heatmap_svg, run_suite, write_runs_csv, write_summary_csv, Profile, RunRow, SuiteResult,
    SuiteSpec, SummaryRow,
};
