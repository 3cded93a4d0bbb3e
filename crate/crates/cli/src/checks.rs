//! Invariant checks shared by `nmm selftest` and the acceptance suite. Each
//! returns the measured quantities; the caller decides the scale.

use nmm_bench::{derive_seed, make_case, CaseInstance, CaseSpec, InnerFamily, OuterFamily};
use nmm_core::geometry::{relative_smoothness_spotcheck, smoothness_constant, Geometry, SpotCheck};
use nmm_core::lifting::{convex_reference, enumerate_optimum, solve_lifted, LabelGrid, LiftingConfig};
use nmm_core::linalg::{Matrix, Operator};
use nmm_core::problem::{
    BoxDomain, CompositeProblem, InnerMap, Regularizer, ScalarFn, SeparableMap, SmoothOuter, TvNorm,
};
use nmm_core::solver::{
    self, descent_violations, fbs_step, majorizer_value, mm_step, outer_linear_step, rate_check, Method,
};
use nmm_core::{SolverConfig, SolverRun};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::Result;

/// One named pass/fail line.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }

    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

/// The 16 family pairs in row-major order.
pub fn all_cases() -> Vec<(InnerFamily, OuterFamily)> {
    InnerFamily::ALL
        .iter()
        .flat_map(|&i| OuterFamily::ALL.iter().map(move |&o| (i, o)))
        .collect()
}

pub fn case(inner: InnerFamily, outer: OuterFamily, n: usize, seed: u64) -> Result<CaseInstance> {
    Ok(make_case(&CaseSpec::new(inner, outer, n, seed))?)
}

#[derive(Debug, Clone, Copy)]
pub struct Majorization {
    /// Largest `(E(u) − E_k(u))/(1 + |E(u)|)`; must stay below `1e-9`.
    /// Negative when every probe sits strictly below its majorizer.
    pub worst_excess: f64,
    /// Largest `|E_k(u_k) − E(u_k)|/|E(u_k)|`.
    pub worst_touch: f64,
    pub pairs: usize,
}

impl Default for Majorization {
    fn default() -> Self {
        Self {
            worst_excess: f64::NEG_INFINITY,
            worst_touch: 0.0,
            pairs: 0,
        }
    }
}

/// Random (anchor, probe) pairs in the box, majorizer at the step size the
/// proposed method would use.
pub fn majorization(inst: &CaseInstance, pairs: usize, seed: u64) -> Result<Majorization> {
    let geom = inst.geometry_for(Method::Proposed);
    let tau = inst.config_for(Method::Proposed)?.tau;
    let p = &inst.problem;
    let mut out = Majorization {
        pairs,
        ..Default::default()
    };
    for k in 0..pairs {
        let uk = inst.random_start(derive_seed(seed, &[k as u64, 0]));
        let u = inst.random_start(derive_seed(seed, &[k as u64, 1]));
        let e = p.energy(&u)?;
        let m = majorizer_value(p, &geom, tau, &uk, &u)?;
        out.worst_excess = out.worst_excess.max((e - m) / (1.0 + e.abs()));
        let ek = p.energy(&uk)?;
        let touch = majorizer_value(p, &geom, tau, &uk, &uk)?;
        let rel = if ek == 0.0 { touch.abs() } else { ((touch - ek) / ek).abs() };
        out.worst_touch = out.worst_touch.max(rel);
    }
    Ok(out)
}

#[derive(Debug, Clone, Default)]
pub struct TraceAudit {
    pub runs: usize,
    pub steps: usize,
    /// `(label, iteration)` of every accepted step that breaks the descent inequality.
    pub descent: Vec<(String, usize)>,
    /// Labels of traces whose O(1/N) bound fails.
    pub rate: Vec<String>,
    /// Labels of traces whose accepted energies ever rise.
    pub ascent: Vec<String>,
}

impl TraceAudit {
    pub fn add(&mut self, label: &str, run: &SolverRun) {
        self.runs += 1;
        self.steps += run.trace.iter().filter(|r| r.accepted).count().saturating_sub(1);
        for k in descent_violations(run) {
            self.descent.push((label.to_owned(), k));
        }
        if !rate_check(run).holds {
            self.rate.push(label.to_owned());
        }
        let acc: Vec<f64> = run.trace.iter().filter(|r| r.accepted).map(|r| r.energy).collect();
        if acc.windows(2).any(|w| w[1] > w[0]) {
            self.ascent.push(label.to_owned());
        }
    }
}

/// Proposed-method runs for the descent and rate checks. `tau_factor`
/// replaces `τ = 0.99/L` by `factor/L`. Factors at or above 1 leave the
/// admissible range, so the run is told `L = 0.99/τ` and the guard is off:
/// the checks then measure what the solver was promised.
pub fn descent_runs(
    cases: &[(InnerFamily, OuterFamily)],
    n: usize,
    starts: usize,
    max_iter: usize,
    tau_factor: Option<f64>,
    seed: u64,
) -> Result<TraceAudit> {
    let runs: Vec<(String, SolverRun)> = cases
        .par_iter()
        .map(|&(i, o)| -> Result<Vec<(String, SolverRun)>> {
            let inst = case(i, o, n, derive_seed(seed, &[i.index() as u64, o as u64]))?;
            let mut cfg = forced_config(inst.l, tau_factor)?;
            cfg.max_iter = max_iter;
            let geom = inst.geometry_for(Method::Proposed);
            (0..starts)
                .map(|s| {
                    let u0 = inst.random_start(derive_seed(seed, &[i.index() as u64, o as u64, s as u64]));
                    let run = solver::run(&inst.problem, &geom, &cfg, &u0)?;
                    Ok((format!("{} start {s}", inst.spec.label()), run))
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let mut audit = TraceAudit::default();
    for (label, run) in &runs {
        audit.add(label, run);
    }
    // With identity ρ and τ = 2/L the iterates of a quadratic bounce without
    // losing energy, which no admissible step allows.
    let p = quadratic_identity(4, seed)?;
    let l = smoothness_constant(p.outer(), &Geometry::quadratic())?.l;
    let mut cfg = forced_config(l, tau_factor)?;
    cfg.max_iter = max_iter.min(50);
    let run = solver::run(&p, &Geometry::quadratic(), &cfg, &[0.0; 4])?;
    audit.add("identity quadratic", &run);
    Ok(audit)
}

fn forced_config(l: f64, tau_factor: Option<f64>) -> Result<SolverConfig> {
    let Some(factor) = tau_factor else {
        return Ok(SolverConfig::new(Method::Proposed, l)?);
    };
    let tau = factor / l;
    if tau * l < 1.0 {
        return Ok(SolverConfig::with_tau(Method::Proposed, l, tau)?);
    }
    let mut cfg = SolverConfig::with_tau(Method::Proposed, 0.99 / tau, tau)?;
    cfg.guard = false;
    Ok(cfg)
}

/// `½‖Au − f‖²` with a random well-conditioned `A`, identity `ρ`, no `R`.
fn quadratic_identity(n: usize, seed: u64) -> Result<CompositeProblem<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = Matrix::from_fn(n, n, |i, j| if i == j { 2.0 } else { rng.random_range(-0.3..0.3) });
    let f = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    Ok(CompositeProblem::new(
        SmoothOuter::least_squares(Operator::Dense(a), f)?,
        InnerMap::Separable(SeparableMap::identity(n)),
        Regularizer::Zero,
        BoxDomain::uniform(n, -10.0, 10.0)?,
    )?)
}

/// Sampled relative smoothness of the outer function of case (a) or (b)
/// against its own geometry and constant.
pub fn smoothness(outer: OuterFamily, n: usize, pairs: usize, seed: u64) -> Result<(f64, SpotCheck<f64>)> {
    let inst = case(InnerFamily::Simple, outer, n, seed)?;
    let sample = match outer {
        OuterFamily::Poisson => BoxDomain::uniform(n, 0.05, 5.0)?,
        _ => BoxDomain::uniform(n, -5.0, 5.0)?,
    };
    let spot = relative_smoothness_spotcheck(inst.problem.outer(), &inst.geom, inst.l, &sample, pairs, seed)?;
    Ok((inst.l, spot))
}

/// Largest per-step difference between the proposed method, FBS and the
/// outer linearization for identity `ρ`, quadratic `h` and a nonconvex
/// separable `R`, over `steps` steps.
pub fn identity_reduction(n: usize, steps: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = Matrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } + rng.random_range(-0.4..0.4));
    let f: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let r = ScalarFn::sin().scaled(0.3);
    let p = CompositeProblem::new(
        SmoothOuter::least_squares(Operator::Dense(a), f)?,
        InnerMap::Separable(SeparableMap::identity(n)),
        Regularizer::Separable(vec![r; n]),
        BoxDomain::uniform(n, -3.0, 3.0)?,
    )?;
    let g = Geometry::quadratic();
    let l = smoothness_constant(p.outer(), &g)?.l;
    let tau = 0.99 / l;
    let mut u: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
    let mut worst = 0.0f64;
    for _ in 0..steps {
        let mm = mm_step(&p, &g, tau, &u)?;
        let fb = fbs_step(&p, &g, tau, &u)?;
        let ol = outer_linear_step(&p, tau, &u)?;
        for i in 0..n {
            worst = worst.max((mm[i] - fb[i]).abs()).max((mm[i] - ol[i]).abs());
        }
        u = mm;
    }
    Ok(worst)
}

/// Largest per-step difference between the proposed step with
/// `G(v) = ½vᵀAv − fᵀv`, `h = ½‖·‖²_D`, `D = diag(A)`, `τ = 1` and the
/// classical recursion `u⁺ = D⁻¹(f − (A − D)u)`.
pub fn jacobi_reduction(n: usize, steps: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a: Matrix<f64> = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            let v = rng.random_range(-1.0..1.0);
            a.set(i, j, v);
            a.set(j, i, v);
        }
    }
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| a.get(i, j).abs()).sum();
        a.set(i, i, off * rng.random_range(1.2..2.0) + 0.1);
    }
    let f: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
    let d: Vec<f64> = (0..n).map(|i| a.get(i, i)).collect();
    let p = CompositeProblem::new(
        SmoothOuter::quadratic(a.clone(), f.clone())?,
        InnerMap::Separable(SeparableMap::identity(n)),
        Regularizer::Zero,
        BoxDomain::uniform(n, -50.0, 50.0)?,
    )?;
    let g = Geometry::diag_quadratic(d.clone())?;
    let mut u = vec![0.0; n];
    let mut worst = 0.0f64;
    for _ in 0..steps {
        let next = mm_step(&p, &g, 1.0, &u)?;
        let au = a.matvec(&u);
        for i in 0..n {
            let jacobi = (f[i] - (au[i] - d[i] * u[i])) / d[i];
            worst = worst.max((next[i] - jacobi).abs());
        }
        u = next;
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LiftingAudit {
    pub instances: usize,
    pub mismatches: usize,
    pub worst: f64,
}

/// Random grids against exhaustive enumeration; a mismatch is an energy
/// difference of `1e-6` or more.
pub fn lifting_vs_enumeration(
    grids: usize,
    (h, w): (usize, usize),
    labels: usize,
    norm: TvNorm,
    seed: u64,
) -> Result<LiftingAudit> {
    let cfg = LiftingConfig {
        labels,
        max_iter: 20_000,
        tol: 1e-10,
        check_every: 10,
    };
    let diffs: Vec<f64> = (0..grids)
        .into_par_iter()
        .map(|g| -> Result<f64> {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[g as u64]));
            let n = h * w;
            let unary = (0..n * labels).map(|_| rng.random_range(0.0..1.0)).collect();
            let alpha = vec![rng.random_range(0.0..1.0); n];
            let grid: LabelGrid<f64> = LabelGrid::new(h, w, LabelGrid::uniform_labels(0.0, 1.0, labels), unary, alpha, norm)?;
            let sol = solve_lifted(&grid, &cfg)?;
            let (_, opt) = enumerate_optimum(&grid)?;
            Ok((sol.primal_energy - opt).abs())
        })
        .collect::<Result<_>>()?;
    Ok(LiftingAudit {
        instances: grids,
        mismatches: diffs.iter().filter(|&&d| !(d < 1e-6)).count(),
        worst: diffs.iter().fold(0.0, |m: f64, &d| m.max(d)),
    })
}

/// 8×8 ROF-like grids with convex unaries `(l − f_i)²` and anisotropic TV,
/// against the continuous reference solver. Returns the worst relative
/// energy difference.
pub fn lifting_vs_convex(instances: usize, labels: usize, seed: u64) -> Result<f64> {
    let cfg = LiftingConfig {
        labels,
        max_iter: 20_000,
        tol: 1e-10,
        check_every: 10,
    };
    let diffs: Vec<f64> = (0..instances)
        .into_par_iter()
        .map(|k| -> Result<f64> {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[k as u64]));
            let grid_labels = LabelGrid::uniform_labels(0.0, 1.0, labels);
            let f: Vec<f64> = (0..64).map(|_| rng.random_range(0.0..1.0)).collect();
            let unary = f
                .iter()
                .flat_map(|&fi| grid_labels.iter().map(move |&l| (l - fi).powi(2)))
                .collect();
            let alpha = rng.random_range(0.02..0.2);
            let grid = LabelGrid::new(8, 8, grid_labels, unary, vec![alpha; 64], TvNorm::Anisotropic)?;
            let sol = solve_lifted(&grid, &cfg)?;
            let (_, e_ref) = convex_reference(&grid, 8000);
            Ok(((sol.primal_energy - e_ref) / e_ref).abs())
        })
        .collect::<Result<_>>()?;
    Ok(diffs.iter().fold(0.0, |m: f64, &d| m.max(d)))
}

/// `D_h ≥ 0` and `D_h(z, z) = 0` for the quadratic, weighted and Burg
/// generators at random points.
pub fn bregman_sanity(points: usize, seed: u64) -> Result<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let geoms = [
        Geometry::quadratic(),
        Geometry::diag_quadratic(vec![0.5, 2.0, 3.0])?,
        Geometry::burg_entropy(),
    ];
    for _ in 0..points {
        let a: Vec<f64> = (0..3).map(|_| rng.random_range(0.01..5.0)).collect();
        let b: Vec<f64> = (0..3).map(|_| rng.random_range(0.01..5.0)).collect();
        for g in &geoms {
            if g.bregman(&a, &b)? < -1e-14 || g.bregman(&a, &a)? != 0.0 {
                return Ok(false);
            }
        }
    }
    Ok(true)
}
