//! The nonlinearity families (1)–(4) and outer families (a)–(d).

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use nmm_core::geometry::diag_dominant_weights;
use nmm_core::{Geometry, Matrix, Operator, ScalarFn, SmoothOuter};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::spline::CubicSpline;
use crate::{BenchError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InnerFamily {
    /// `ρ = exp`, `r = x²`
    Simple,
    /// Rastrigin `ρ`, `r = x²/(1+x²)`
    Doable,
    /// random spline `ρ`, `r = −sinc`
    Difficult,
    /// random spline `ρ`, Rastrigin `r`
    VeryDifficult,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OuterFamily {
    /// least squares, square near-diagonal `A`
    LocalLs,
    /// KL divergence with Burg geometry
    Poisson,
    /// least squares, wide `A` with prescribed spectrum
    FullLs,
    /// smooth-truncated quadratic, wide `A`
    Truncated,
}

impl InnerFamily {
    pub const ALL: [InnerFamily; 4] = [
        InnerFamily::Simple,
        InnerFamily::Doable,
        InnerFamily::Difficult,
        InnerFamily::VeryDifficult,
    ];

    pub fn index(self) -> u8 {
        self as u8 + 1
    }
}

impl OuterFamily {
    pub const ALL: [OuterFamily; 4] = [
        OuterFamily::LocalLs,
        OuterFamily::Poisson,
        OuterFamily::FullLs,
        OuterFamily::Truncated,
    ];

    pub fn letter(self) -> char {
        (b'a' + self as u8) as char
    }

    /// Default interval; the Poisson case keeps `ρ(u)` away from zero.
    pub fn interval(self) -> (f64, f64) {
        match self {
            OuterFamily::Poisson => (1e-2, 3.0),
            _ => (-3.0, 3.0),
        }
    }
}

impl fmt::Display for InnerFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index())
    }
}

impl fmt::Display for OuterFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl FromStr for InnerFamily {
    type Err = BenchError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" => Ok(InnerFamily::Simple),
            "2" => Ok(InnerFamily::Doable),
            "3" => Ok(InnerFamily::Difficult),
            "4" => Ok(InnerFamily::VeryDifficult),
            _ => Err(BenchError::Label(s.into())),
        }
    }
}

impl FromStr for OuterFamily {
    type Err = BenchError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a" => Ok(OuterFamily::LocalLs),
            "b" => Ok(OuterFamily::Poisson),
            "c" => Ok(OuterFamily::FullLs),
            "d" => Ok(OuterFamily::Truncated),
            _ => Err(BenchError::Label(s.into())),
        }
    }
}

pub(crate) fn rastrigin() -> ScalarFn {
    use std::f64::consts::PI;
    ScalarFn::new("rastrigin", |x: f64| x * x - 10.0 * (2.0 * PI * x).cos())
        .with_derivative(|x: f64| 2.0 * x + 20.0 * PI * (2.0 * PI * x).sin())
}

fn neg_sinc() -> ScalarFn {
    use std::f64::consts::PI;
    ScalarFn::new("-sinc", |x: f64| {
        let t = PI * x;
        if t.abs() < 1e-4 {
            -(1.0 - t * t / 6.0)
        } else {
            -t.sin() / t
        }
    })
    .with_derivative(|x: f64| {
        let t = PI * x;
        if t.abs() < 1e-4 {
            PI * t / 3.0
        } else {
            -PI * (t * t.cos() - t.sin()) / (t * t)
        }
    })
}

fn rational() -> ScalarFn {
    ScalarFn::new("x^2/(1+x^2)", |x: f64| x * x / (1.0 + x * x))
        .with_derivative(|x: f64| 2.0 * x / ((1.0 + x * x) * (1.0 + x * x)))
}

/// Random spline through 12 equally spaced nodes on `[a, b]` with
/// ordinates uniform in `[a, b]`.
pub(crate) fn random_spline(interval: (f64, f64), seed: u64) -> CubicSpline {
    let (a, b) = interval;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<f64> = (0..12).map(|i| a + (b - a) * i as f64 / 11.0).collect();
    let ys: Vec<f64> = (0..12).map(|_| rng.random_range(a..=b)).collect();
    CubicSpline::natural(xs, ys, 1.0).expect("12 increasing nodes")
}

fn spline_fn(s: CubicSpline) -> ScalarFn {
    let s2 = s.clone();
    ScalarFn::new("spline", move |x: f64| s.eval(x)).with_derivative(move |x: f64| s2.derivative(x))
}

/// `(ρ, r)` for an inner family. Splines are drawn from `seed` on
/// `interval`.
pub fn make_nonlinearity(family: InnerFamily, interval: (f64, f64), seed: u64) -> (ScalarFn, ScalarFn) {
    match family {
        InnerFamily::Simple => (ScalarFn::exp(), ScalarFn::square()),
        InnerFamily::Doable => (rastrigin(), rational()),
        InnerFamily::Difficult => (spline_fn(random_spline(interval, seed)), neg_sinc()),
        InnerFamily::VeryDifficult => (spline_fn(random_spline(interval, seed)), rastrigin()),
    }
}

/// Matrix and geometry for an outer family, before the data is known.
#[derive(Debug, Clone)]
pub struct OuterSetup {
    pub a: Matrix,
    pub geom: Geometry,
}

impl OuterSetup {
    /// `F_f(A·)` for data `f`.
    pub fn outer(&self, family: OuterFamily, f: Vec<f64>) -> Result<SmoothOuter> {
        let op = Operator::Dense(self.a.clone());
        Ok(match family {
            OuterFamily::LocalLs | OuterFamily::FullLs => SmoothOuter::least_squares(op, f)?,
            OuterFamily::Poisson => SmoothOuter::kl_divergence(op, f)?,
            OuterFamily::Truncated => SmoothOuter::truncated_quadratic(op, f, TRUNC_LAMBDA, TRUNC_DELTA)?,
        })
    }
}

/// Plateau level and smoothing width of the truncated quadratic.
pub const TRUNC_LAMBDA: f64 = 1.0;
pub const TRUNC_DELTA: f64 = 0.5;

fn to_matrix(m: &DMatrix<f64>) -> Matrix {
    Matrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    // Row-major draw order so the matrix does not depend on storage layout.
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = rng.sample(StandardNormal);
        }
    }
    m
}

/// Orthonormal columns from the QR factor of a Gaussian matrix, signs fixed
/// by the diagonal of R so the draw is Haar distributed.
fn orthonormal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    let qr = gaussian(rng, rows, cols).qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..cols {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Matrix for an outer family and the matching geometry on `z = ρ(u)`.
pub fn make_outer(family: OuterFamily, n: usize, seed: u64) -> Result<OuterSetup> {
    if n < 3 {
        return Err(BenchError::Generation(format!("dimension {n} is too small")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (n as f64).sqrt();
    let a = match family {
        OuterFamily::LocalLs | OuterFamily::Poisson => {
            let g = gaussian(&mut rng, n, n);
            let nonneg = family == OuterFamily::Poisson;
            DMatrix::from_fn(n, n, |i, j| {
                let e = if nonneg { g[(i, j)].abs() } else { g[(i, j)] };
                f64::from(u8::from(i == j)) + scale * e
            })
        }
        OuterFamily::FullLs | OuterFamily::Truncated => {
            let m = n / 3;
            let u = orthonormal(&mut rng, m, m);
            let v = orthonormal(&mut rng, n, m);
            let lo = 1.0 / (n as f64).ln();
            let s: Vec<f64> = (0..m).map(|_| rng.random_range(lo..=1.0)).collect();
            let us = DMatrix::from_fn(m, m, |i, j| u[(i, j)] * s[j]);
            us * v.transpose()
        }
    };
    let a = to_matrix(&a);
    let geom = match family {
        OuterFamily::Poisson => Geometry::burg_entropy(),
        _ => Geometry::diag_quadratic(diag_dominant_weights(&a)?)?,
    };
    Ok(OuterSetup { a, geom })
}
