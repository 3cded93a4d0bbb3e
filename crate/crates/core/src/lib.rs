//! Nonconvex majorization-minimization for composite energies
//!
//! Minimizes energies of the form `E(u) = G(ρ(u)) + R(u)` where `G` is smooth
//! relative to a Bregman generator `h`, `ρ` is a separable (or sum-separable)
//! nonlinearity and `R` is either separable or a total-variation penalty.
//! Every iteration minimizes the nonconvex majorizer
//!
//! ```text
//! E_k(u) = (1/τ) D_h(ρ(u), ρ(u_k)) + G(ρ(u_k)) + <∇G(ρ(u_k)), ρ(u) - ρ(u_k)> + R(u)
//! ```
//!
//! globally: by exhaustive 1D search when the majorizer decouples over
//! coordinates ([`scalar`]), or by functional lifting when `R` is a total
//! variation ([`lifting`]).
//!
//! All numerical code is generic over the scalar type through [`Real`]; the
//! aliases at the crate root fix the common `f64` instantiations.

pub mod error;
pub mod geometry;
pub mod lifting;
pub mod linalg;
pub mod problem;
pub mod scalar;
pub mod solver;

mod real;

pub use error::{Error, Result};
pub use real::Real;

/// `f64` instantiations used by the benchmark and ToF crates.
pub type Problem = problem::CompositeProblem<f64>;
pub type Geometry = geometry::Geometry<f64>;
pub type ScalarFn = problem::ScalarFn<f64>;
pub type SmoothOuter = problem::SmoothOuter<f64>;
pub type Regularizer = problem::Regularizer<f64>;
pub type Matrix = linalg::Matrix<f64>;
pub type Operator = linalg::Operator<f64>;
pub type SolverConfig = solver::SolverConfig<f64>;
pub type SolverRun = solver::SolverRun<f64>;
pub type LabelGrid = lifting::LabelGrid<f64>;

/// Single precision variants, mostly useful for the search kernels.
pub type ProblemF32 = problem::CompositeProblem<f32>;
pub type GeometryF32 = geometry::Geometry<f32>;
