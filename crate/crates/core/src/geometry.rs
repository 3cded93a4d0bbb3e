//! Bregman generators `h` on the image of `ρ` and relative smoothness
//! constants of `G` with respect to them.
//!
//! Every generator here is separable, `h(z) = Σ_k h_k(z_k)`, which is what
//! lets the majorizer decouple over coordinates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::{power_iteration, Matrix};
use crate::problem::{BoxDomain, Domain, OuterKind, SmoothOuter};
use crate::{Error, Real, Result};

/// Burg entropy treats `z ≤ EPS_DOM` as outside its domain.
pub const BURG_EPS_DOM: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub enum GeometryKind<T> {
    /// `½‖z‖²`
    Quadratic,
    /// `½ Σ d_k z_k²`
    DiagQuadratic(Vec<T>),
    /// `−Σ log z_k`
    BurgEntropy,
    /// `⟨s, z⟩`; its Bregman distance vanishes.
    Linear(Vec<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Geometry<T> {
    kind: GeometryKind<T>,
}

impl<T: Real> Geometry<T> {
    pub fn quadratic() -> Self {
        Self {
            kind: GeometryKind::Quadratic,
        }
    }

    pub fn diag_quadratic(d: Vec<T>) -> Result<Self> {
        if let Some(index) = d.iter().position(|&v| !(v > T::zero())) {
            return Err(Error::DegenerateGeometry { index });
        }
        Ok(Self {
            kind: GeometryKind::DiagQuadratic(d),
        })
    }

    pub fn burg_entropy() -> Self {
        Self {
            kind: GeometryKind::BurgEntropy,
        }
    }

    pub fn linear(slope: Vec<T>) -> Self {
        Self {
            kind: GeometryKind::Linear(slope),
        }
    }

    pub fn kind(&self) -> &GeometryKind<T> {
        &self.kind
    }

    pub fn domain(&self) -> Domain {
        match self.kind {
            GeometryKind::BurgEntropy => Domain::PositiveOrthant,
            _ => Domain::AllSpace,
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.kind, GeometryKind::Linear(_))
    }

    /// Dimension the generator is tied to, if any.
    pub fn fixed_dim(&self) -> Option<usize> {
        match &self.kind {
            GeometryKind::DiagQuadratic(d) | GeometryKind::Linear(d) => Some(d.len()),
            _ => None,
        }
    }

    #[inline]
    pub fn in_interior(&self, z: T) -> bool {
        match self.kind {
            GeometryKind::BurgEntropy => z > T::lit(BURG_EPS_DOM),
            _ => z.is_finite(),
        }
    }

    /// `h_k(z)`
    #[inline]
    pub fn coord_value(&self, k: usize, z: T) -> T {
        let half = T::lit(0.5);
        match &self.kind {
            GeometryKind::Quadratic => half * z * z,
            GeometryKind::DiagQuadratic(d) => half * d[k] * z * z,
            GeometryKind::BurgEntropy => {
                if z > T::zero() {
                    -z.ln()
                } else {
                    T::infinity()
                }
            }
            GeometryKind::Linear(s) => s[k] * z,
        }
    }

    /// `h_k'(z)`
    #[inline]
    pub fn coord_grad(&self, k: usize, z: T) -> T {
        match &self.kind {
            GeometryKind::Quadratic => z,
            GeometryKind::DiagQuadratic(d) => d[k] * z,
            GeometryKind::BurgEntropy => -z.recip(),
            GeometryKind::Linear(s) => s[k],
        }
    }

    /// `D_{h_k}(a, b)`; `+∞` when `b` is outside the interior or `a` outside
    /// the closure of the domain.
    #[inline]
    pub fn coord_bregman(&self, k: usize, a: T, b: T) -> T {
        match &self.kind {
            GeometryKind::Quadratic => {
                let d = a - b;
                T::lit(0.5) * d * d
            }
            GeometryKind::DiagQuadratic(w) => {
                let d = a - b;
                T::lit(0.5) * w[k] * d * d
            }
            GeometryKind::BurgEntropy => {
                if !(b > T::lit(BURG_EPS_DOM)) || !(a > T::zero()) {
                    return T::infinity();
                }
                let r = a / b;
                r - r.ln() - T::one()
            }
            GeometryKind::Linear(_) => T::zero(),
        }
    }

    pub fn value(&self, z: &[T]) -> T {
        z.iter()
            .enumerate()
            .fold(T::zero(), |acc, (k, &v)| acc + self.coord_value(k, v))
    }

    pub fn gradient(&self, z: &[T]) -> Vec<T> {
        z.iter()
            .enumerate()
            .map(|(k, &v)| self.coord_grad(k, v))
            .collect()
    }

    /// `D_h(u, v) = h(u) − h(v) − ⟨∇h(v), u − v⟩`, summed coordinatewise.
    pub fn bregman(&self, u: &[T], v: &[T]) -> Result<T> {
        crate::problem::check_len("bregman arguments", v.len(), u.len())?;
        self.check_dim(u.len())?;
        Ok(u.iter()
            .zip(v)
            .enumerate()
            .fold(T::zero(), |acc, (k, (&a, &b))| {
                acc + self.coord_bregman(k, a, b)
            }))
    }

    pub fn check_dim(&self, n: usize) -> Result<()> {
        match self.fixed_dim() {
            Some(d) => crate::problem::check_len("geometry dimension", d, n),
            None => Ok(()),
        }
    }

    /// Strong convexity modulus on the domain, measured on `(·, upper]` for
    /// Burg entropy.
    pub fn strong_convexity(&self, upper: T) -> T {
        match &self.kind {
            GeometryKind::Quadratic => T::one(),
            GeometryKind::DiagQuadratic(d) => d.iter().fold(T::infinity(), |a, &v| a.min(v)),
            GeometryKind::BurgEntropy => (upper * upper).recip(),
            GeometryKind::Linear(_) => T::zero(),
        }
    }
}

/// `d_i = Σ_j |(AᵀA)_ij|`. Makes `diag(d) − AᵀA` diagonally dominant.
pub fn diag_dominant_weights<T: Real>(a: &Matrix<T>) -> Result<Vec<T>> {
    let d = a.gram().abs_row_sums();
    if let Some(index) = d.iter().position(|&v| v == T::zero()) {
        return Err(Error::DegenerateGeometry { index });
    }
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Certificate {
    Analytic,
    Spectral,
    Supplied,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeSmoothness<T> {
    pub l: T,
    pub certificate: Certificate,
}

impl<T: Real> RelativeSmoothness<T> {
    pub fn supplied(l: T) -> Result<Self> {
        if !(l > T::zero()) || !l.is_finite() {
            return Err(Error::Config(format!("smoothness constant must be positive, got {l}")));
        }
        Ok(Self {
            l,
            certificate: Certificate::Supplied,
        })
    }
}

fn max_ratio<T: Real>(num: &[T], den: &[T]) -> Result<T> {
    crate::problem::check_len("geometry weights", num.len(), den.len())?;
    Ok(num
        .iter()
        .zip(den)
        .fold(T::zero(), |acc, (&a, &b)| acc.max(a / b)))
}

/// Smallest `L` this crate can certify with `Lh − G` convex.
pub fn smoothness_constant<T: Real>(
    outer: &SmoothOuter<T>,
    geom: &Geometry<T>,
) -> Result<RelativeSmoothness<T>> {
    let analytic = |l| Ok(RelativeSmoothness {
        l,
        certificate: Certificate::Analytic,
    });
    let spectral = |l| Ok(RelativeSmoothness {
        l,
        certificate: Certificate::Spectral,
    });
    if outer.is_concave() {
        // −G convex: any positive L works, including with D_h ≡ 0.
        return analytic(T::one());
    }
    geom.check_dim(outer.dim())?;
    match (outer.kind(), geom.kind()) {
        (OuterKind::LeastSquares { op, scale, .. }, GeometryKind::DiagQuadratic(d)) => {
            analytic(*scale * max_ratio(&op.abs_gram_row_sums(), d)?)
        }
        (OuterKind::LeastSquares { op, scale, .. }, GeometryKind::Quadratic) => {
            spectral(*scale * op.spectral_norm_sq())
        }
        // q'' ≤ 2 and G carries a factor ½, so ∇²G ⪯ AᵀA.
        (OuterKind::TruncatedQuadratic { op, .. }, GeometryKind::DiagQuadratic(d)) => {
            analytic(max_ratio(&op.abs_gram_row_sums(), d)?)
        }
        (OuterKind::TruncatedQuadratic { op, .. }, GeometryKind::Quadratic) => {
            spectral(op.spectral_norm_sq())
        }
        (OuterKind::KlDivergence { op, f }, GeometryKind::BurgEntropy) => {
            if !op.is_nonnegative() {
                return Err(Error::Config(
                    "the Burg-entropy constant ‖f‖₁ needs a nonnegative operator".into(),
                ));
            }
            analytic(f.iter().fold(T::zero(), |a, &v| a + v.abs()))
        }
        (OuterKind::Quadratic { q, .. }, GeometryKind::DiagQuadratic(d)) => {
            analytic(max_ratio(&q.abs_row_sums(), d)?)
        }
        (OuterKind::Quadratic { q, .. }, GeometryKind::Quadratic) => {
            spectral(power_iteration(q.cols(), |x| q.matvec(x)).abs())
        }
        (kind, g) => Err(Error::Config(format!(
            "no smoothness constant known for {kind:?} relative to {g:?}; supply L explicitly"
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpotCheck<T> {
    /// Largest observed `D_G / D_h` (`0` when both vanish or `D_G ≤ 0`).
    pub worst_ratio: T,
    /// Pairs with `D_G > L·D_h·(1 + 1e-8)`.
    pub violations: usize,
    pub trials: usize,
}

/// Samples pairs uniformly in `sample_box` (restricted to the domain
/// interiors) and compares `D_G` to `L·D_h`.
pub fn relative_smoothness_spotcheck<T: Real>(
    outer: &SmoothOuter<T>,
    geom: &Geometry<T>,
    l: T,
    sample_box: &BoxDomain<T>,
    trials: usize,
    seed: u64,
) -> Result<SpotCheck<T>> {
    if trials == 0 {
        return Err(Error::Config("spot check needs at least one trial".into()));
    }
    crate::problem::check_len("sample box", outer.dim(), sample_box.dim())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slack = T::one() + T::lit(1e-8);
    let mut worst = T::zero();
    let mut violations = 0;
    let mut done = 0;
    let mut attempts = 0;
    while done < trials {
        attempts += 1;
        if attempts > 100 * trials {
            return Err(Error::Domain(
                "sample box barely intersects the domain interior".into(),
            ));
        }
        let z = sample_point(&mut rng, sample_box);
        let w = sample_point(&mut rng, sample_box);
        if !outer.in_domain_interior(&z)
            || !outer.in_domain_interior(&w)
            || !w.iter().all(|&v| geom.in_interior(v))
        {
            continue;
        }
        done += 1;
        let gw = outer.gradient(&w);
        let lin = z
            .iter()
            .zip(&w)
            .zip(&gw)
            .fold(T::zero(), |acc, ((&a, &b), &g)| acc + g * (a - b));
        let dg = outer.value(&z) - outer.value(&w) - lin;
        let dh = geom.bregman(&z, &w)?;
        let ratio = if dg <= T::zero() {
            T::zero()
        } else if dh > T::zero() {
            dg / dh
        } else {
            T::infinity()
        };
        worst = worst.max(ratio);
        if ratio > l * slack {
            violations += 1;
        }
    }
    Ok(SpotCheck {
        worst_ratio: worst,
        violations,
        trials,
    })
}

fn sample_point<T: Real>(rng: &mut ChaCha8Rng, b: &BoxDomain<T>) -> Vec<T> {
    (0..b.dim())
        .map(|j| {
            let (lo, hi) = b.interval(j);
            lo + (hi - lo) * T::lit(rng.random::<f64>())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Operator;

    #[test]
    fn bregman_examples() {
        let q = Geometry::<f64>::quadratic();
        assert_eq!(q.bregman(&[7.0, -2.0], &[7.0, -2.0]).unwrap(), 0.0);
        assert_eq!(q.bregman(&[1.0, 0.0], &[0.0, 0.0]).unwrap(), 0.5);
        let b = Geometry::<f64>::burg_entropy();
        let d = b.bregman(&[2.0], &[1.0]).unwrap();
        assert!((d - (1.0 - 2f64.ln())).abs() < 1e-15);
        assert!((d - 0.306853).abs() < 1e-6);
        assert_eq!(b.bregman(&[-1.0], &[1.0]).unwrap(), f64::INFINITY);
        assert_eq!(b.bregman(&[1.0], &[0.0]).unwrap(), f64::INFINITY);
        let l = Geometry::<f64>::linear(vec![3.0, -1.0]);
        assert_eq!(l.bregman(&[5.0, 1.0], &[0.0, 2.0]).unwrap(), 0.0);
    }

    #[test]
    fn diag_weights_examples() {
        let eye = Matrix::<f64>::identity(3);
        assert_eq!(diag_dominant_weights(&eye).unwrap(), vec![1.0; 3]);
        let a = Matrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(diag_dominant_weights(&a).unwrap(), vec![2.0, 3.0]);
        let z = Matrix::from_rows(&[vec![1.0, 0.0], vec![2.0, 0.0]]).unwrap();
        assert_eq!(
            diag_dominant_weights(&z),
            Err(Error::DegenerateGeometry { index: 1 })
        );
    }

    #[test]
    fn smoothness_examples() {
        let a = Matrix::from_rows(&[vec![1.0f64, 0.3], vec![-0.4, 1.0]]).unwrap();
        let d = diag_dominant_weights(&a).unwrap();
        let ls = SmoothOuter::least_squares(Operator::Dense(a), vec![0.1, 0.2]).unwrap();
        let g = Geometry::diag_quadratic(d).unwrap();
        let rs = smoothness_constant(&ls, &g).unwrap();
        assert!((rs.l - 1.0).abs() < 1e-15);
        assert_eq!(rs.certificate, Certificate::Analytic);

        let kl = SmoothOuter::kl_divergence(Operator::Identity(2), vec![2.0, 3.0]).unwrap();
        let rs = smoothness_constant(&kl, &Geometry::burg_entropy()).unwrap();
        assert_eq!(rs.l, 5.0);

        let concave = SmoothOuter::custom(
            1,
            Domain::AllSpace,
            true,
            |v: &[f64]| -v[0] * v[0],
            |v: &[f64]| vec![-2.0 * v[0]],
        );
        let lin = Geometry::linear(vec![0.0]);
        assert_eq!(smoothness_constant(&concave, &lin).unwrap().l, 1.0);

        assert!(matches!(
            smoothness_constant(&kl, &Geometry::quadratic()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn spotcheck_detects_halved_constant() {
        let a = Matrix::from_fn(4, 4, |i, j| if i == j { 1.0 } else { 0.3 * (i + 2 * j) as f64 / 9.0 });
        let d = diag_dominant_weights(&a).unwrap();
        let ls = SmoothOuter::least_squares(Operator::Dense(a.clone()), vec![0.0; 4]).unwrap();
        let g = Geometry::diag_quadratic(d).unwrap();
        let bx = BoxDomain::uniform(4, -3.0, 3.0).unwrap();
        let ok = relative_smoothness_spotcheck(&ls, &g, 1.0, &bx, 500, 7).unwrap();
        assert!(ok.worst_ratio <= 1.0 && ok.violations == 0);
        let g2 = Geometry::quadratic();
        let l = smoothness_constant(&ls, &g2).unwrap().l;
        let bad = relative_smoothness_spotcheck(&ls, &g2, 0.5 * l, &bx, 500, 7).unwrap();
        assert!(bad.worst_ratio > 0.5 * l && bad.violations > 0);

        let concave = SmoothOuter::custom(
            2,
            Domain::AllSpace,
            true,
            |v: &[f64]| -v.iter().map(|x| x * x).sum::<f64>(),
            |v: &[f64]| v.iter().map(|x| -2.0 * x).collect(),
        );
        let vac = relative_smoothness_spotcheck(
            &concave,
            &Geometry::linear(vec![0.0; 2]),
            1.0,
            &BoxDomain::uniform(2, -1.0, 1.0).unwrap(),
            100,
            1,
        )
        .unwrap();
        assert_eq!((vac.worst_ratio, vac.violations), (0.0, 0));
    }

    #[test]
    fn strong_convexity_moduli() {
        assert_eq!(Geometry::<f64>::quadratic().strong_convexity(5.0), 1.0);
        let g = Geometry::diag_quadratic(vec![2.0, 0.5]).unwrap();
        assert_eq!(g.strong_convexity(5.0), 0.5);
        assert_eq!(Geometry::<f64>::burg_entropy().strong_convexity(2.0), 0.25);
        assert!(matches!(
            Geometry::diag_quadratic(vec![1.0, 0.0]),
            Err(Error::DegenerateGeometry { index: 1 })
        ));
    }
}
