//! Planted-optimum instances and the gap metric.

use nmm_core::geometry::smoothness_constant;
use nmm_core::problem::{BoxDomain, InnerMap, SeparableMap};
use nmm_core::scalar::{minimize_1d, GridSearch};
use nmm_core::solver::Method;
use nmm_core::{Geometry, Matrix, Problem, Regularizer, ScalarFn, SolverConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::families::{make_nonlinearity, make_outer, InnerFamily, OuterFamily};
use crate::seed::derive_seed;
use crate::{BenchError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaseSpec {
    pub inner: InnerFamily,
    pub outer: OuterFamily,
    pub n: usize,
    pub interval: (f64, f64),
    pub seed: u64,
}

impl CaseSpec {
    /// Spec on the family's default interval.
    pub fn new(inner: InnerFamily, outer: OuterFamily, n: usize, seed: u64) -> Self {
        Self {
            inner,
            outer,
            n,
            interval: outer.interval(),
            seed,
        }
    }

    /// Parses labels like `3a`.
    pub fn parse_label(label: &str) -> Result<(InnerFamily, OuterFamily)> {
        let mut chars = label.chars();
        match (chars.next(), chars.next(), chars.next()) {
            (Some(i), Some(o), None) => Ok((
                i.to_string().parse().map_err(|_| BenchError::Label(label.into()))?,
                o.to_string().parse().map_err(|_| BenchError::Label(label.into()))?,
            )),
            _ => Err(BenchError::Label(label.into())),
        }
    }

    pub fn label(&self) -> String {
        format!("{}{}", self.inner, self.outer)
    }

    fn validate(&self) -> Result<()> {
        let (a, b) = self.interval;
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(BenchError::Generation(format!("invalid interval [{a}, {b}]")));
        }
        if self.outer == OuterFamily::Poisson && !(a > 0.0) {
            return Err(BenchError::Generation(
                "the Poisson case needs a positive lower bound".into(),
            ));
        }
        Ok(())
    }
}

/// A generated energy `F_f(Aρ(u)) + Σ r(u_i − u*_i)` with minimizer `u*`.
#[derive(Debug, Clone)]
pub struct CaseInstance {
    pub spec: CaseSpec,
    pub a: Matrix,
    pub f: Vec<f64>,
    pub u_star: Vec<f64>,
    pub rho: ScalarFn,
    pub r: ScalarFn,
    pub geom: Geometry,
    pub l: f64,
    pub e_star: f64,
    pub problem: Problem,
}

const MAX_RESAMPLES: usize = 100;

/// Builds the instance for `spec`. Deterministic in the spec.
pub fn make_case(spec: &CaseSpec) -> Result<CaseInstance> {
    spec.validate()?;
    let (lo, hi) = spec.interval;
    let n = spec.n;
    let (mut rho, r) = make_nonlinearity(spec.inner, spec.interval, derive_seed(spec.seed, &[0]));
    let setup = make_outer(spec.outer, n, derive_seed(spec.seed, &[1]))?;
    if spec.outer == OuterFamily::Poisson {
        // Burg geometry needs ρ > 0 on the whole box; lift ρ so its minimum
        // there is at least 1.
        let min = minimize_1d(|x| rho.eval(x), lo, hi, &GridSearch::default())?.f;
        if min < 1.0 {
            rho = rho.offset(1.0 - min);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[2]));
    let mut attempt = 0;
    let (u_star, f) = loop {
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(lo..=hi)).collect();
        let z: Vec<f64> = u.iter().map(|&x| rho.eval(x)).collect();
        let f = setup.a.matvec(&z);
        if spec.outer != OuterFamily::Poisson || f.iter().all(|&v| v > 0.0) {
            break (u, f);
        }
        attempt += 1;
        if attempt >= MAX_RESAMPLES {
            return Err(BenchError::Generation(format!(
                "no positive data after {MAX_RESAMPLES} draws"
            )));
        }
    };

    let outer = setup.outer(spec.outer, f.clone())?;
    let l = smoothness_constant(&outer, &setup.geom)?.l;
    let reg = Regularizer::Separable(u_star.iter().map(|&s| r.shifted(s)).collect());
    let problem = Problem::new(
        outer,
        InnerMap::Separable(SeparableMap::uniform(n, rho.clone())),
        reg,
        BoxDomain::uniform(n, lo, hi)?,
    )?;
    let e_star = problem.energy(&u_star)?;
    Ok(CaseInstance {
        spec: *spec,
        a: setup.a,
        f,
        u_star,
        rho,
        r,
        geom: setup.geom,
        l,
        e_star,
        problem,
    })
}

impl CaseInstance {
    /// `n·r(0)`, the value `energy(u*)` must equal.
    pub fn planted_value(&self) -> f64 {
        self.spec.n as f64 * self.r.eval(0.0)
    }

    /// Geometry a method measures its steps in: forward-backward splitting
    /// works on `u` directly, everything else on `ρ(u)`.
    pub fn geometry_for(&self, method: Method) -> Geometry {
        match method {
            Method::Fbs => Geometry::quadratic(),
            _ => self.geom.clone(),
        }
    }

    /// Solver settings with `τ = 0.99/L` for every method. Baselines
    /// backtrack from there.
    pub fn config_for(&self, method: Method) -> Result<SolverConfig> {
        Ok(SolverConfig::new(method, self.l)?)
    }

    /// Uniform point in the box.
    pub fn random_start(&self, seed: u64) -> Vec<f64> {
        let (lo, hi) = self.spec.interval;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..self.spec.n).map(|_| rng.random_range(lo..=hi)).collect()
    }
}

const CHUNK: usize = 1024;

/// Median of `E` over `samples` uniform points of the box, minus `e_star`.
/// Chunks draw from their own streams, so the value does not depend on the
/// thread count.
pub fn sampled_median_energy(problem: &Problem, e_star: f64, samples: usize, seed: u64) -> Result<f64> {
    if samples == 0 {
        return Err(BenchError::Generation("need at least one sample".into()));
    }
    let bounds = problem.bounds();
    let n = problem.dim();
    let chunks = samples.div_ceil(CHUNK);
    let per_chunk: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[c as u64]));
            let count = CHUNK.min(samples - c * CHUNK);
            let mut u = vec![0.0; n];
            let mut out = Vec::with_capacity(count);
            for _ in 0..count {
                for (j, x) in u.iter_mut().enumerate() {
                    let (a, b) = bounds.interval(j);
                    *x = rng.random_range(a..=b);
                }
                out.push(problem.energy(&u)?);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut values: Vec<f64> = per_chunk.into_iter().flatten().collect();
    Ok(median(&mut values) - e_star)
}

/// Median with the even case averaged; NaNs sort last.
pub(crate) fn median(values: &mut [f64]) -> f64 {
    let n = values.len();
    values.sort_unstable_by(f64::total_cmp);
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// `(E_final − E*)/Ẽ`.
pub fn normalized_gap(e_final: f64, e_star: f64, e_tilde: f64) -> Result<f64> {
    if !(e_tilde > 0.0) {
        return Err(BenchError::DegenerateScale);
    }
    if e_final < e_star - 1e-6 * e_tilde {
        return Err(BenchError::Integrity {
            case: String::new(),
            method: String::new(),
            restart: 0,
            e_final,
            e_star,
        });
    }
    Ok((e_final - e_star) / e_tilde)
}
