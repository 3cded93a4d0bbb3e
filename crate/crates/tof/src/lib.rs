//! Time-of-flight depth from phase-stepped multi-frequency correlation
//! measurements: simulation, the per-frequency closed form and
//! reconstruction with lifted majorizers.

mod autocorr;
mod error;
mod model;
mod pgm;
mod recon;

pub use autocorr::Autocorr;
pub use error::{Result, ToFError};
pub use model::{
    closed_form_depth, forward, tof_energy, tof_problem, ClosedForm, ToFMeasurements, ToFModel, ToFScene,
    SPEED_OF_LIGHT,
};
pub use pgm::Gray16;
pub use recon::{reconstruct, reconstruct_from, rmse, unwrap_rate, upsample, ReconConfig, Reconstruction};
