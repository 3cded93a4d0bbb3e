//! Depth reconstruction by majorization-minimization with lifted
//! subproblems, and the error measures used to judge it.

use nmm_core::geometry::smoothness_constant;
use nmm_core::lifting::LiftingConfig;
use nmm_core::problem::OuterKind;
use nmm_core::solver::{self, Method, Termination};
use nmm_core::{Geometry, SolverConfig, SolverRun};

use crate::model::{tof_problem, ToFMeasurements, ToFModel};
use crate::{Result, ToFError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconConfig {
    /// TV weight.
    pub alpha: f64,
    pub labels: usize,
    pub depth_range: (f64, f64),
    /// Constant starting depth.
    pub init_depth: f64,
    pub max_iter: usize,
    /// PDHG iteration cap per subproblem.
    pub pd_max_iter: usize,
}

impl Default for ReconConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            labels: 128,
            depth_range: (0.5, 6.0),
            init_depth: 1.0,
            max_iter: 40,
            pd_max_iter: 2000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub depth: Vec<f64>,
    pub run: SolverRun,
    /// Set when the guard stopped the run.
    pub guard_stopped: bool,
}

/// Runs the proposed method from `init` (or the constant start depth).
pub fn reconstruct_from(
    meas: &ToFMeasurements,
    model: &ToFModel,
    cfg: &ReconConfig,
    init: Option<&[f64]>,
) -> Result<Reconstruction> {
    let problem = tof_problem(meas, model, cfg.alpha, cfg.depth_range)?;
    let OuterKind::LeastSquares { op, .. } = problem.outer().kind() else {
        unreachable!("the ToF data term is least squares");
    };
    let geom = Geometry::diag_quadratic(op.abs_gram_row_sums())?;
    let l = smoothness_constant(problem.outer(), &geom)?.l;
    let mut scfg = SolverConfig::new(Method::Proposed, l)?;
    scfg.max_iter = cfg.max_iter;
    scfg.lifting = LiftingConfig {
        labels: cfg.labels,
        max_iter: cfg.pd_max_iter,
        ..LiftingConfig::default()
    };
    let n = meas.height * meas.width;
    let u0 = match init {
        Some(u) if u.len() == n => u.to_vec(),
        Some(_) => return Err(ToFError::Config("initial depth has the wrong size".into())),
        None => vec![cfg.init_depth; n],
    };
    let run = solver::run(&problem, &geom, &scfg, &u0)?;
    Ok(Reconstruction {
        depth: run.u_final.clone(),
        guard_stopped: run.termination == Termination::GuardViolation,
        run,
    })
}

/// [`reconstruct_from`] with the constant start.
pub fn reconstruct(meas: &ToFMeasurements, model: &ToFModel, cfg: &ReconConfig) -> Result<Reconstruction> {
    reconstruct_from(meas, model, cfg, None)
}

/// Root mean square difference.
pub fn rmse(a: &[f64], b: &[f64]) -> f64 {
    let ss: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (ss / a.len() as f64).sqrt()
}

/// Nearest-neighbour upsampling of a row-major `h × w` image.
pub fn upsample(img: &[f64], h: usize, w: usize, factor: usize) -> Vec<f64> {
    let wf = w * factor;
    (0..h * factor * wf)
        .map(|k| img[(k / wf / factor) * w + (k % wf) / factor])
        .collect()
}

/// Fraction of pixels whose estimate lies in the right period for every
/// frequency: the period index `round((û − (u mod P_i))/P_i)` must equal
/// `⌊u/P_i⌋`, i.e. no whole-period jump relative to the truth.
pub fn unwrap_rate(estimate: &[f64], truth: &[f64], model: &ToFModel) -> f64 {
    let ok = estimate
        .iter()
        .zip(truth)
        .filter(|&(&e, &t)| {
            (0..model.frequencies.len()).all(|i| {
                let p = model.unambiguous_range(i);
                let k_true = (t / p).floor();
                let k_est = ((e - t.rem_euclid(p)) / p).round();
                k_est == k_true
            })
        })
        .count();
    ok as f64 / truth.len() as f64
}
