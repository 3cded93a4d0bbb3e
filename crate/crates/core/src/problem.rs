//! Composite energies `E(u) = G(ρ(u)) + R(u)` and their exact evaluation.

use std::fmt;
use std::sync::Arc;

use crate::linalg::{Matrix, Operator};
use crate::{Error, Real, Result};

type Fn1<T> = Arc<dyn Fn(T) -> T + Send + Sync>;
type FnVec<T> = Arc<dyn Fn(&[T]) -> T + Send + Sync>;
type FnGrad<T> = Arc<dyn Fn(&[T]) -> Vec<T> + Send + Sync>;

/// A univariate function with an optional analytic derivative.
#[derive(Clone)]
pub struct ScalarFn<T> {
    name: Arc<str>,
    eval: Fn1<T>,
    deriv: Option<Fn1<T>>,
    lipschitz_hint: Option<T>,
    identity: bool,
}

impl<T: Real> ScalarFn<T> {
    pub fn new(name: &str, f: impl Fn(T) -> T + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            eval: Arc::new(f),
            deriv: None,
            lipschitz_hint: None,
            identity: false,
        }
    }

    pub fn with_derivative(mut self, df: impl Fn(T) -> T + Send + Sync + 'static) -> Self {
        self.deriv = Some(Arc::new(df));
        self
    }

    pub fn with_lipschitz(mut self, l: T) -> Self {
        self.lipschitz_hint = Some(l);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn eval(&self, x: T) -> T {
        (self.eval)(x)
    }

    #[inline]
    pub fn derivative(&self, x: T) -> Option<T> {
        self.deriv.as_ref().map(|d| d(x))
    }

    pub fn has_derivative(&self) -> bool {
        self.deriv.is_some()
    }

    pub fn lipschitz_hint(&self) -> Option<T> {
        self.lipschitz_hint
    }

    pub fn is_identity(&self) -> bool {
        self.identity
    }

    pub fn identity() -> Self {
        let mut f = Self::new("identity", |x| x)
            .with_derivative(|_| T::one())
            .with_lipschitz(T::one());
        f.identity = true;
        f
    }

    pub fn zero() -> Self {
        Self::new("zero", |_| T::zero())
            .with_derivative(|_| T::zero())
            .with_lipschitz(T::zero())
    }

    pub fn exp() -> Self {
        Self::new("exp", |x: T| x.exp()).with_derivative(|x: T| x.exp())
    }

    pub fn sin() -> Self {
        Self::new("sin", |x: T| x.sin())
            .with_derivative(|x: T| x.cos())
            .with_lipschitz(T::one())
    }

    pub fn square() -> Self {
        Self::new("square", |x: T| x * x).with_derivative(|x: T| x + x)
    }

    /// `|x|`; deliberately without a derivative.
    pub fn abs() -> Self {
        Self::new("abs", |x: T| x.abs()).with_lipschitz(T::one())
    }

    /// `x ↦ c·f(x)`
    pub fn scaled(&self, c: T) -> Self {
        let f = self.eval.clone();
        let mut out = Self::new(&format!("{c}*{}", self.name), move |x| c * f(x));
        if let Some(d) = self.deriv.clone() {
            out.deriv = Some(Arc::new(move |x| c * d(x)));
        }
        out.lipschitz_hint = self.lipschitz_hint.map(|l| l * c.abs());
        out
    }

    /// `x ↦ f(x - s)`
    pub fn shifted(&self, s: T) -> Self {
        let f = self.eval.clone();
        let mut out = Self::new(&self.name, move |x| f(x - s));
        if let Some(d) = self.deriv.clone() {
            out.deriv = Some(Arc::new(move |x| d(x - s)));
        }
        out.lipschitz_hint = self.lipschitz_hint;
        out
    }

    /// `x ↦ f(x) + c`
    pub fn offset(&self, c: T) -> Self {
        let f = self.eval.clone();
        let mut out = Self::new(&self.name, move |x| f(x) + c);
        out.deriv = self.deriv.clone();
        out.lipschitz_hint = self.lipschitz_hint;
        out
    }

    /// Largest relative deviation between the analytic derivative and a
    /// central difference over the given points.
    pub fn derivative_error(&self, points: &[T], h: T) -> Option<T> {
        let d = self.deriv.as_ref()?;
        let two = T::lit(2.0);
        Some(points.iter().fold(T::zero(), |worst, &x| {
            let fd = (self.eval(x + h) - self.eval(x - h)) / (two * h);
            let an = d(x);
            worst.max((an - fd).abs() / (T::one() + an.abs()))
        }))
    }
}

impl<T> fmt::Debug for ScalarFn<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarFn").field("name", &self.name).finish()
    }
}

/// Coordinate-wise map `ρ(u) = (ρ_1(u_1), …, ρ_n(u_n))`, optionally with
/// several channels per coordinate. Output index `c·n + j` is channel `c` of
/// coordinate `j`.
#[derive(Debug, Clone)]
pub struct SeparableMap<T> {
    n: usize,
    components: Vec<ScalarFn<T>>,
}

impl<T: Real> SeparableMap<T> {
    pub fn new(components: Vec<ScalarFn<T>>) -> Self {
        Self {
            n: components.len(),
            components,
        }
    }

    pub fn uniform(n: usize, f: ScalarFn<T>) -> Self {
        Self::new(vec![f; n])
    }

    pub fn identity(n: usize) -> Self {
        Self::uniform(n, ScalarFn::identity())
    }

    /// One function per channel, shared by all `n` coordinates.
    pub fn channels(n: usize, per_channel: Vec<ScalarFn<T>>) -> Self {
        let components = per_channel
            .into_iter()
            .flat_map(|f| std::iter::repeat_n(f, n))
            .collect();
        Self { n, components }
    }

    pub fn input_dim(&self) -> usize {
        self.n
    }

    pub fn channel_count(&self) -> usize {
        if self.n == 0 {
            0
        } else {
            self.components.len() / self.n
        }
    }

    pub fn components(&self) -> &[ScalarFn<T>] {
        &self.components
    }
}

/// `v_i = Σ_j ρ_ij(u_j)`. Lifted entry `i·n + j` holds `ρ_ij(u_j)`.
#[derive(Debug, Clone)]
pub struct SumCompositionMap<T> {
    m: usize,
    n: usize,
    entries: Vec<ScalarFn<T>>,
}

impl<T: Real> SumCompositionMap<T> {
    pub fn new(m: usize, n: usize, entries: Vec<ScalarFn<T>>) -> Result<Self> {
        if entries.len() != m * n {
            return Err(Error::Dimension {
                what: "sum-composition entries",
                expected: m * n,
                got: entries.len(),
            });
        }
        Ok(Self { m, n, entries })
    }

    /// Rank-one form `ρ_ij(u_j) = a_ij·ρ_j(u_j)`.
    pub fn rank_one(a: &Matrix<T>, rho: &SeparableMap<T>) -> Result<Self> {
        if rho.input_dim() != a.cols() || rho.channel_count() != 1 {
            return Err(Error::Dimension {
                what: "rank-one inner map",
                expected: a.cols(),
                got: rho.input_dim(),
            });
        }
        let entries = (0..a.rows())
            .flat_map(|i| (0..a.cols()).map(move |j| (i, j)))
            .map(|(i, j)| rho.components()[j].scaled(a.get(i, j)))
            .collect();
        Self::new(a.rows(), a.cols(), entries)
    }

    pub fn rows(&self) -> usize {
        self.m
    }
}

/// The inner nonlinearity of a composite problem.
#[derive(Debug, Clone)]
pub enum InnerMap<T> {
    Separable(SeparableMap<T>),
    SumComposition(SumCompositionMap<T>),
}

impl<T: Real> InnerMap<T> {
    pub fn input_dim(&self) -> usize {
        match self {
            InnerMap::Separable(s) => s.n,
            InnerMap::SumComposition(s) => s.n,
        }
    }

    /// Dimension of the space the Bregman geometry lives on.
    pub fn lifted_dim(&self) -> usize {
        self.components().len()
    }

    /// Dimension of the argument of `G`.
    pub fn output_dim(&self) -> usize {
        match self {
            InnerMap::Separable(s) => s.components.len(),
            InnerMap::SumComposition(s) => s.m,
        }
    }

    pub fn components(&self) -> &[ScalarFn<T>] {
        match self {
            InnerMap::Separable(s) => &s.components,
            InnerMap::SumComposition(s) => &s.entries,
        }
    }

    /// Input coordinate that lifted entry `k` depends on.
    #[inline]
    pub fn owner(&self, k: usize) -> usize {
        k % self.input_dim()
    }

    /// Lifted indices owned by coordinate `j`, in increasing order.
    pub fn owned(&self, j: usize) -> impl Iterator<Item = usize> {
        let n = self.input_dim();
        (j..self.lifted_dim()).step_by(n.max(1))
    }

    pub fn lift(&self, u: &[T]) -> Vec<T> {
        let n = self.input_dim();
        self.components()
            .iter()
            .enumerate()
            .map(|(k, f)| f.eval(u[k % n]))
            .collect()
    }

    pub fn reduce(&self, z: &[T]) -> Vec<T> {
        match self {
            InnerMap::Separable(_) => z.to_vec(),
            InnerMap::SumComposition(s) => (0..s.m)
                .map(|i| z[i * s.n..(i + 1) * s.n].iter().copied().sum())
                .collect(),
        }
    }

    pub fn reduce_adjoint(&self, g: &[T]) -> Vec<T> {
        match self {
            InnerMap::Separable(_) => g.to_vec(),
            InnerMap::SumComposition(s) => (0..s.m)
                .flat_map(|i| std::iter::repeat_n(g[i], s.n))
                .collect(),
        }
    }

    /// Diagonal of the lifted Jacobian, `ρ_k'(u_owner(k))`.
    pub fn lifted_derivatives(&self, u: &[T]) -> Result<Vec<T>> {
        let n = self.input_dim();
        self.components()
            .iter()
            .enumerate()
            .map(|(k, f)| {
                f.derivative(u[k % n]).ok_or_else(|| {
                    Error::Config(format!("inner function '{}' has no derivative", f.name()))
                })
            })
            .collect()
    }
}

/// Domain of `G` or of a Bregman generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    AllSpace,
    PositiveOrthant,
}

/// C¹ surrogate of `min(t², λ)`: `t²` up to `s`, a concave quadratic cap
/// over `[s, s+δ]` that meets `λ` with zero slope, then constant `λ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedQuadratic<T> {
    pub lambda: T,
    pub delta: T,
    knee: T,
}

impl<T: Real> TruncatedQuadratic<T> {
    pub fn new(lambda: T, delta: T) -> Result<Self> {
        if lambda <= T::zero() || delta <= T::zero() {
            return Err(Error::Config("truncated quadratic needs λ > 0 and δ > 0".into()));
        }
        // s² + s·δ = λ makes value and slope match at the knee.
        let four = T::lit(4.0);
        let knee = ((delta * delta + four * lambda).sqrt() - delta) / T::lit(2.0);
        Ok(Self {
            lambda,
            delta,
            knee,
        })
    }

    pub fn knee(&self) -> T {
        self.knee
    }

    pub fn value(&self, t: T) -> T {
        let a = t.abs();
        if a <= self.knee {
            t * t
        } else if a < self.knee + self.delta {
            let r = self.knee + self.delta - a;
            self.lambda - self.knee / self.delta * r * r
        } else {
            self.lambda
        }
    }

    pub fn derivative(&self, t: T) -> T {
        let a = t.abs();
        if a <= self.knee {
            t + t
        } else if a < self.knee + self.delta {
            let r = self.knee + self.delta - a;
            t.signum() * T::lit(2.0) * self.knee / self.delta * r
        } else {
            T::zero()
        }
    }
}

/// The smooth outer function `G`.
#[derive(Clone)]
pub enum OuterKind<T> {
    /// `scale · ½‖Av − f‖²`
    LeastSquares {
        op: Operator<T>,
        f: Vec<T>,
        scale: T,
    },
    /// `Σ_i (Av)_i − f_i − f_i log((Av)_i / f_i)`
    KlDivergence { op: Operator<T>, f: Vec<T> },
    /// `½ Σ_i q((Av)_i − f_i)` with the smoothed truncation `q`.
    TruncatedQuadratic {
        op: Operator<T>,
        f: Vec<T>,
        q: TruncatedQuadratic<T>,
    },
    /// `½ vᵀQv − fᵀv` for symmetric `Q`.
    Quadratic { q: Matrix<T>, f: Vec<T> },
    Custom {
        dim: usize,
        value: FnVec<T>,
        gradient: FnGrad<T>,
        concave: bool,
    },
}

impl<T: fmt::Debug> fmt::Debug for OuterKind<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OuterKind::LeastSquares { scale, .. } => write!(f, "LeastSquares(scale={scale:?})"),
            OuterKind::KlDivergence { .. } => write!(f, "KlDivergence"),
            OuterKind::TruncatedQuadratic { q, .. } => write!(f, "TruncatedQuadratic({q:?})"),
            OuterKind::Quadratic { .. } => write!(f, "Quadratic"),
            OuterKind::Custom { concave, .. } => write!(f, "Custom(concave={concave})"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SmoothOuter<T> {
    kind: OuterKind<T>,
    domain: Domain,
}

impl<T: Real> SmoothOuter<T> {
    pub fn least_squares(op: Operator<T>, f: Vec<T>) -> Result<Self> {
        Self::scaled_least_squares(op, f, T::one())
    }

    pub fn scaled_least_squares(op: Operator<T>, f: Vec<T>, scale: T) -> Result<Self> {
        op.validate()?;
        check_len("least-squares data", op.rows(), f.len())?;
        Ok(Self {
            kind: OuterKind::LeastSquares { op, f, scale },
            domain: Domain::AllSpace,
        })
    }

    pub fn kl_divergence(op: Operator<T>, f: Vec<T>) -> Result<Self> {
        check_len("KL data", op.rows(), f.len())?;
        if f.iter().any(|&v| v <= T::zero()) {
            return Err(Error::Config("KL data must be strictly positive".into()));
        }
        Ok(Self {
            kind: OuterKind::KlDivergence { op, f },
            domain: Domain::PositiveOrthant,
        })
    }

    pub fn truncated_quadratic(op: Operator<T>, f: Vec<T>, lambda: T, delta: T) -> Result<Self> {
        check_len("truncated-quadratic data", op.rows(), f.len())?;
        Ok(Self {
            kind: OuterKind::TruncatedQuadratic {
                op,
                f,
                q: TruncatedQuadratic::new(lambda, delta)?,
            },
            domain: Domain::AllSpace,
        })
    }

    pub fn quadratic(q: Matrix<T>, f: Vec<T>) -> Result<Self> {
        check_len("quadratic data", q.rows(), f.len())?;
        if !q.is_symmetric(T::lit(1e-12)) {
            return Err(Error::Config("quadratic form must be symmetric".into()));
        }
        Ok(Self {
            kind: OuterKind::Quadratic { q, f },
            domain: Domain::AllSpace,
        })
    }

    pub fn custom(
        dim: usize,
        domain: Domain,
        concave: bool,
        value: impl Fn(&[T]) -> T + Send + Sync + 'static,
        gradient: impl Fn(&[T]) -> Vec<T> + Send + Sync + 'static,
    ) -> Self {
        Self {
            kind: OuterKind::Custom {
                dim,
                value: Arc::new(value),
                gradient: Arc::new(gradient),
                concave,
            },
            domain,
        }
    }

    pub fn kind(&self) -> &OuterKind<T> {
        &self.kind
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            OuterKind::LeastSquares { op, .. }
            | OuterKind::KlDivergence { op, .. }
            | OuterKind::TruncatedQuadratic { op, .. } => op.cols(),
            OuterKind::Quadratic { q, .. } => q.cols(),
            OuterKind::Custom { dim, .. } => *dim,
        }
    }

    pub fn is_concave(&self) -> bool {
        matches!(self.kind, OuterKind::Custom { concave: true, .. })
    }

    /// `G(v)`, or `+∞` outside the domain.
    pub fn value(&self, v: &[T]) -> T {
        let half = T::lit(0.5);
        match &self.kind {
            OuterKind::LeastSquares { op, f, scale } => {
                let r = op.apply(v);
                let ss = r
                    .iter()
                    .zip(f)
                    .fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));
                *scale * half * ss
            }
            OuterKind::KlDivergence { op, f } => {
                if v.iter().any(|&x| x <= T::zero()) {
                    return T::infinity();
                }
                let av = op.apply(v);
                let mut acc = T::zero();
                for (&a, &b) in av.iter().zip(f) {
                    if a <= T::zero() {
                        return T::infinity();
                    }
                    acc = acc + (a - b - b * (a / b).ln());
                }
                acc
            }
            OuterKind::TruncatedQuadratic { op, f, q } => {
                let av = op.apply(v);
                half * av
                    .iter()
                    .zip(f)
                    .fold(T::zero(), |acc, (&a, &b)| acc + q.value(a - b))
            }
            OuterKind::Quadratic { q, f } => {
                let qv = q.matvec(v);
                v.iter()
                    .zip(&qv)
                    .zip(f)
                    .fold(T::zero(), |acc, ((&x, &y), &b)| acc + half * x * y - b * x)
            }
            OuterKind::Custom { value, .. } => {
                if self.domain == Domain::PositiveOrthant && v.iter().any(|&x| x <= T::zero()) {
                    return T::infinity();
                }
                value(v)
            }
        }
    }

    /// `∇G(v)`; only meaningful on the domain interior.
    pub fn gradient(&self, v: &[T]) -> Vec<T> {
        match &self.kind {
            OuterKind::LeastSquares { op, f, scale } => {
                let r: Vec<T> = op
                    .apply(v)
                    .iter()
                    .zip(f)
                    .map(|(&a, &b)| *scale * (a - b))
                    .collect();
                op.apply_t(&r)
            }
            OuterKind::KlDivergence { op, f } => {
                let r: Vec<T> = op
                    .apply(v)
                    .iter()
                    .zip(f)
                    .map(|(&a, &b)| T::one() - b / a)
                    .collect();
                op.apply_t(&r)
            }
            OuterKind::TruncatedQuadratic { op, f, q } => {
                let half = T::lit(0.5);
                let r: Vec<T> = op
                    .apply(v)
                    .iter()
                    .zip(f)
                    .map(|(&a, &b)| half * q.derivative(a - b))
                    .collect();
                op.apply_t(&r)
            }
            OuterKind::Quadratic { q, f } => {
                q.matvec(v).iter().zip(f).map(|(&a, &b)| a - b).collect()
            }
            OuterKind::Custom { gradient, .. } => gradient(v),
        }
    }

    /// Whether `v` lies strictly inside the domain of `G`.
    pub fn in_domain_interior(&self, v: &[T]) -> bool {
        match &self.kind {
            OuterKind::KlDivergence { op, .. } => {
                v.iter().all(|&x| x > T::zero()) && op.apply(v).iter().all(|&x| x > T::zero())
            }
            _ => match self.domain {
                Domain::AllSpace => v.iter().all(|x| x.is_finite()),
                Domain::PositiveOrthant => v.iter().all(|&x| x > T::zero()),
            },
        }
    }
}

/// Max over coordinates of `|analytic − central difference| / (1 + |analytic|)`.
pub fn check_gradient<T: Real>(outer: &SmoothOuter<T>, v: &[T], h_fd: T) -> Result<T> {
    check_len("gradient check point", outer.dim(), v.len())?;
    if h_fd <= T::zero() {
        return Err(Error::Config("finite-difference step must be positive".into()));
    }
    if outer.domain() == Domain::PositiveOrthant {
        if let Some(i) = v.iter().position(|&x| x <= h_fd) {
            return Err(Error::Domain(format!(
                "coordinate {i} is on the domain boundary"
            )));
        }
    }
    if !outer.in_domain_interior(v) {
        return Err(Error::Domain("point is not inside the domain of G".into()));
    }
    let grad = outer.gradient(v);
    let two = T::lit(2.0);
    let mut worst = T::zero();
    let mut probe = v.to_vec();
    for i in 0..v.len() {
        probe[i] = v[i] + h_fd;
        let plus = outer.value(&probe);
        probe[i] = v[i] - h_fd;
        let minus = outer.value(&probe);
        probe[i] = v[i];
        let fd = (plus - minus) / (two * h_fd);
        worst = worst.max((grad[i] - fd).abs() / (T::one() + grad[i].abs()));
    }
    Ok(worst)
}

/// Per-pixel norm of the forward-difference gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TvNorm {
    #[default]
    Isotropic,
    Anisotropic,
}

/// Penalty applied to each gradient magnitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EdgePenalty<T> {
    Convex,
    /// `γ(t) = θ log(1 + t/θ)`, majorized by its linearization.
    ConcaveLog { theta: T },
}

impl<T: Real> EdgePenalty<T> {
    pub fn value(&self, t: T) -> T {
        match *self {
            EdgePenalty::Convex => t,
            EdgePenalty::ConcaveLog { theta } => theta * (t / theta).ln_1p(),
        }
    }

    pub fn slope(&self, t: T) -> T {
        match *self {
            EdgePenalty::Convex => T::one(),
            EdgePenalty::ConcaveLog { theta } => T::one() / (T::one() + t / theta),
        }
    }
}

/// `α Σ_i γ(‖(Du)_i‖)` on a row-major `height × width` grid, forward
/// differences with Neumann boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TotalVariation<T> {
    pub height: usize,
    pub width: usize,
    pub alpha: T,
    pub penalty: EdgePenalty<T>,
    pub norm: TvNorm,
}

impl<T: Real> TotalVariation<T> {
    pub fn new(height: usize, width: usize, alpha: T) -> Self {
        Self {
            height,
            width,
            alpha,
            penalty: EdgePenalty::Convex,
            norm: TvNorm::Isotropic,
        }
    }

    pub fn gradient_magnitudes(&self, u: &[T]) -> Vec<T> {
        grad_magnitudes(u, self.height, self.width, self.norm)
    }

    pub fn value(&self, u: &[T]) -> T {
        let sum = self
            .gradient_magnitudes(u)
            .into_iter()
            .fold(T::zero(), |acc, t| acc + self.penalty.value(t));
        self.alpha * sum
    }

    /// Per-pixel weights `α γ'(‖(Du_k)_i‖)` of the linearized penalty.
    pub fn reweighted(&self, u_k: &[T]) -> Vec<T> {
        self.gradient_magnitudes(u_k)
            .into_iter()
            .map(|t| self.alpha * self.penalty.slope(t))
            .collect()
    }
}

pub(crate) fn forward_diff<T: Real>(u: &[T], height: usize, width: usize, i: usize) -> (T, T) {
    let (r, c) = (i / width, i % width);
    let dx = if c + 1 < width {
        u[i + 1] - u[i]
    } else {
        T::zero()
    };
    let dy = if r + 1 < height {
        u[i + width] - u[i]
    } else {
        T::zero()
    };
    (dx, dy)
}

pub(crate) fn grad_magnitudes<T: Real>(u: &[T], height: usize, width: usize, norm: TvNorm) -> Vec<T> {
    (0..height * width)
        .map(|i| {
            let (dx, dy) = forward_diff(u, height, width, i);
            match norm {
                TvNorm::Isotropic => dx.hypot(dy),
                TvNorm::Anisotropic => dx.abs() + dy.abs(),
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub enum Regularizer<T> {
    Zero,
    Separable(Vec<ScalarFn<T>>),
    TotalVariation(TotalVariation<T>),
}

impl<T: Real> Regularizer<T> {
    pub fn value(&self, u: &[T]) -> T {
        match self {
            Regularizer::Zero => T::zero(),
            Regularizer::Separable(r) => r
                .iter()
                .zip(u)
                .fold(T::zero(), |acc, (f, &x)| acc + f.eval(x)),
            Regularizer::TotalVariation(tv) => tv.value(u),
        }
    }

    /// The majorizer of `R` around `u_k` used inside the MM subproblem.
    /// Concave edge penalties are replaced by their linearization; every
    /// other regularizer is kept exactly.
    pub fn majorizer_value(&self, u: &[T], u_k: &[T]) -> T {
        match self {
            Regularizer::TotalVariation(tv) if tv.penalty != EdgePenalty::Convex => {
                let mag_k = tv.gradient_magnitudes(u_k);
                let mag = tv.gradient_magnitudes(u);
                let mut acc = T::zero();
                for (&tk, &t) in mag_k.iter().zip(&mag) {
                    acc = acc + tv.penalty.value(tk) + tv.penalty.slope(tk) * (t - tk);
                }
                tv.alpha * acc
            }
            _ => self.value(u),
        }
    }

    pub fn coordinate(&self, j: usize) -> Option<&ScalarFn<T>> {
        match self {
            Regularizer::Separable(r) => r.get(j),
            _ => None,
        }
    }

    pub fn is_separable(&self) -> bool {
        !matches!(self, Regularizer::TotalVariation(_))
    }
}

/// Per-coordinate closed intervals `[lo_j, hi_j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain<T> {
    lo: Vec<T>,
    hi: Vec<T>,
}

impl<T: Real> BoxDomain<T> {
    pub fn new(lo: Vec<T>, hi: Vec<T>) -> Result<Self> {
        check_len("box bounds", lo.len(), hi.len())?;
        if let Some(j) = lo.iter().zip(&hi).position(|(a, b)| !(a < b)) {
            return Err(Error::Config(format!("empty interval at coordinate {j}")));
        }
        Ok(Self { lo, hi })
    }

    pub fn uniform(n: usize, a: T, b: T) -> Result<Self> {
        Self::new(vec![a; n], vec![b; n])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    #[inline]
    pub fn interval(&self, j: usize) -> (T, T) {
        (self.lo[j], self.hi[j])
    }

    pub fn contains(&self, u: &[T]) -> bool {
        u.len() == self.dim()
            && u
                .iter()
                .enumerate()
                .all(|(j, &x)| x >= self.lo[j] && x <= self.hi[j])
    }

    pub fn clamp(&self, u: &mut [T]) {
        for (j, x) in u.iter_mut().enumerate() {
            *x = x.max(self.lo[j]).min(self.hi[j]);
        }
    }

    /// Common interval when every coordinate shares the same bounds.
    pub fn as_uniform(&self) -> Option<(T, T)> {
        let (a, b) = (*self.lo.first()?, *self.hi.first()?);
        (self.lo.iter().all(|&x| x == a) && self.hi.iter().all(|&x| x == b)).then_some((a, b))
    }
}

/// `E(u) = G(ρ(u)) + R(u)` over a box.
#[derive(Debug, Clone)]
pub struct CompositeProblem<T> {
    outer: SmoothOuter<T>,
    inner: InnerMap<T>,
    reg: Regularizer<T>,
    bounds: BoxDomain<T>,
}

impl<T: Real> CompositeProblem<T> {
    pub fn new(
        outer: SmoothOuter<T>,
        inner: InnerMap<T>,
        reg: Regularizer<T>,
        bounds: BoxDomain<T>,
    ) -> Result<Self> {
        let n = inner.input_dim();
        check_len("outer dimension", outer.dim(), inner.output_dim())?;
        check_len("box dimension", n, bounds.dim())?;
        match &reg {
            Regularizer::Separable(r) => check_len("regularizer", n, r.len())?,
            Regularizer::TotalVariation(tv) => check_len("image size", n, tv.height * tv.width)?,
            Regularizer::Zero => {}
        }
        Ok(Self {
            outer,
            inner,
            reg,
            bounds,
        })
    }

    pub fn outer(&self) -> &SmoothOuter<T> {
        &self.outer
    }

    pub fn inner(&self) -> &InnerMap<T> {
        &self.inner
    }

    pub fn regularizer(&self) -> &Regularizer<T> {
        &self.reg
    }

    pub fn bounds(&self) -> &BoxDomain<T> {
        &self.bounds
    }

    pub fn dim(&self) -> usize {
        self.inner.input_dim()
    }

    pub fn apply_inner(&self, u: &[T]) -> Result<Vec<T>> {
        check_len("iterate", self.dim(), u.len())?;
        Ok(self.inner.reduce(&self.inner.lift(u)))
    }

    /// `G` evaluated on lifted values `z`.
    pub fn outer_value_lifted(&self, z: &[T]) -> T {
        self.outer.value(&self.inner.reduce(z))
    }

    /// `∇_z G(reduce(z))`.
    pub fn outer_gradient_lifted(&self, z: &[T]) -> Vec<T> {
        self.inner
            .reduce_adjoint(&self.outer.gradient(&self.inner.reduce(z)))
    }

    /// `E(u)`. Returns `+∞` when `ρ(u)` leaves the domain of `G`.
    pub fn energy(&self, u: &[T]) -> Result<T> {
        check_len("iterate", self.dim(), u.len())?;
        let z = self.inner.lift(u);
        if let Some(k) = z.iter().position(|v| v.is_nan()) {
            return Err(Error::Numerical {
                index: Some(self.inner.owner(k)),
                context: "inner map returned NaN".into(),
            });
        }
        let g = self.outer_value_lifted(&z);
        if g.is_nan() {
            return Err(Error::Numerical {
                index: None,
                context: "outer function returned NaN".into(),
            });
        }
        if g == T::infinity() {
            return Ok(T::infinity());
        }
        let r = self.reg_value_checked(u)?;
        Ok(g + r)
    }

    fn reg_value_checked(&self, u: &[T]) -> Result<T> {
        if let Regularizer::Separable(rs) = &self.reg {
            let mut acc = T::zero();
            for (j, (f, &x)) in rs.iter().zip(u).enumerate() {
                let v = f.eval(x);
                if v.is_nan() {
                    return Err(Error::Numerical {
                        index: Some(j),
                        context: "regularizer returned NaN".into(),
                    });
                }
                acc = acc + v;
            }
            return Ok(acc);
        }
        let r = self.reg.value(u);
        if r.is_nan() {
            return Err(Error::Numerical {
                index: None,
                context: "regularizer returned NaN".into(),
            });
        }
        Ok(r)
    }

    /// Gradient of `G∘ρ` with respect to `u` (chain rule through the
    /// diagonal lifted Jacobian).
    pub fn smooth_gradient(&self, u: &[T]) -> Result<Vec<T>> {
        let z = self.inner.lift(u);
        let gz = self.outer_gradient_lifted(&z);
        let dz = self.inner.lifted_derivatives(u)?;
        let mut g = vec![T::zero(); self.dim()];
        for (k, (&a, &b)) in gz.iter().zip(&dz).enumerate() {
            let j = self.inner.owner(k);
            g[j] = g[j] + a * b;
        }
        Ok(g)
    }

    /// Gradient of the whole energy; requires differentiable `r_j`.
    pub fn energy_gradient(&self, u: &[T]) -> Result<Vec<T>> {
        let mut g = self.smooth_gradient(u)?;
        match &self.reg {
            Regularizer::Zero => {}
            Regularizer::Separable(rs) => {
                for (j, (f, &x)) in rs.iter().zip(u).enumerate() {
                    let d = f.derivative(x).ok_or_else(|| {
                        Error::Config(format!(
                            "regularizer '{}' at coordinate {j} is not differentiable",
                            f.name()
                        ))
                    })?;
                    g[j] = g[j] + d;
                }
            }
            Regularizer::TotalVariation(_) => {
                return Err(Error::Config(
                    "total variation is not differentiable; gradient methods are unavailable"
                        .into(),
                ))
            }
        }
        Ok(g)
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        Err(Error::Dimension {
            what,
            expected,
            got,
        })
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{E, PI};

    fn identity_problem(n: usize, outer: SmoothOuter<f64>) -> CompositeProblem<f64> {
        CompositeProblem::new(
            outer,
            InnerMap::Separable(SeparableMap::identity(n)),
            Regularizer::Zero,
            BoxDomain::uniform(n, -10.0, 10.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn energy_of_plain_quadratic() {
        let outer = SmoothOuter::least_squares(Operator::Identity(2), vec![0.0, 0.0]).unwrap();
        let p = identity_problem(2, outer);
        assert_eq!(p.energy(&[3.0, 4.0]).unwrap(), 12.5);
    }

    #[test]
    fn energy_with_exponential_inner_map() {
        let outer = SmoothOuter::least_squares(Operator::Identity(2), vec![E, 1.0]).unwrap();
        let p = CompositeProblem::new(
            outer,
            InnerMap::Separable(SeparableMap::uniform(2, ScalarFn::exp())),
            Regularizer::Zero,
            BoxDomain::uniform(2, -3.0, 3.0).unwrap(),
        )
        .unwrap();
        assert!(p.energy(&[1.0, 0.0]).unwrap().abs() < 1e-15);
        let expected = 0.5 * (1.0 - E).powi(2);
        assert!((p.energy(&[0.0, 0.0]).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 1.4762).abs() < 1e-4);
    }

    #[test]
    fn energy_rejects_wrong_dimension() {
        let outer = SmoothOuter::least_squares(Operator::Identity(2), vec![0.0, 0.0]).unwrap();
        let p = identity_problem(2, outer);
        assert!(matches!(
            p.energy(&[1.0]),
            Err(Error::Dimension { expected: 2, got: 1, .. })
        ));
    }

    #[test]
    fn energy_reports_nan_coordinate() {
        let outer = SmoothOuter::least_squares(Operator::Identity(2), vec![0.0, 0.0]).unwrap();
        let rho = SeparableMap::new(vec![
            ScalarFn::identity(),
            ScalarFn::new("sqrt", |x: f64| x.sqrt()),
        ]);
        let p = CompositeProblem::new(
            outer,
            InnerMap::Separable(rho),
            Regularizer::Zero,
            BoxDomain::uniform(2, -3.0, 3.0).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            p.energy(&[0.0, -1.0]),
            Err(Error::Numerical { index: Some(1), .. })
        ));
    }

    #[test]
    fn kl_energy_is_infinite_outside_domain() {
        let outer = SmoothOuter::kl_divergence(Operator::Identity(2), vec![1.0, 2.0]).unwrap();
        let p = identity_problem(2, outer);
        assert_eq!(p.energy(&[-1.0, 1.0]).unwrap(), f64::INFINITY);
        assert!(p.energy(&[1.0, 2.0]).unwrap().abs() < 1e-15);
    }

    #[test]
    fn inner_map_examples() {
        let id = InnerMap::Separable(SeparableMap::<f64>::identity(2));
        assert_eq!(id.reduce(&id.lift(&[1.0, 2.0])), vec![1.0, 2.0]);

        let s = InnerMap::Separable(SeparableMap::uniform(2, ScalarFn::sin()));
        let v = s.lift(&[0.0, PI / 2.0]);
        assert_eq!(v[0], 0.0);
        assert!((v[1] - 1.0).abs() < 1e-15);

        let a = Matrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 2.0]]).unwrap();
        let sq = SeparableMap::uniform(2, ScalarFn::square());
        let sc = InnerMap::SumComposition(SumCompositionMap::rank_one(&a, &sq).unwrap());
        assert_eq!(sc.reduce(&sc.lift(&[1.0, 2.0])), vec![5.0, 8.0]);
        assert_eq!(sc.owned(1).collect::<Vec<_>>(), vec![1, 3]);
    }

    #[test]
    fn gradient_checks() {
        let a = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.2, 1.0]]).unwrap();
        let ls = SmoothOuter::least_squares(Operator::Dense(a.clone()), vec![0.3, -0.7]).unwrap();
        assert!(check_gradient(&ls, &[0.4, 1.3], 1e-5).unwrap() < 1e-7);

        let kl = SmoothOuter::kl_divergence(Operator::Dense(a.clone()), vec![1.0, 1.0]).unwrap();
        let err = check_gradient(&kl, &[1.0, 1.0], 1e-5).unwrap();
        assert!(err < 1e-5);
        let av = a.matvec(&[1.0, 1.0]);
        let expected = a.matvec_t(&[1.0 - 1.0 / av[0], 1.0 - 1.0 / av[1]]);
        assert_eq!(kl.gradient(&[1.0, 1.0]), expected);
        assert!(matches!(
            check_gradient(&kl, &[0.0, 1.0], 1e-5),
            Err(Error::Domain(_))
        ));

        let tq = SmoothOuter::truncated_quadratic(Operator::Identity(2), vec![0.0, 0.0], 1.0, 0.5)
            .unwrap();
        let flat = [5.0, -7.0];
        assert!(tq.gradient(&flat).iter().all(|g: &f64| g.abs() < 1e-12));
        assert!(check_gradient(&tq, &flat, 1e-5).unwrap() < 1e-6);
    }

    #[test]
    fn truncated_quadratic_is_c1() {
        let q = TruncatedQuadratic::new(1.0f64, 0.5).unwrap();
        let s = q.knee();
        assert!((s * s + s * 0.5 - 1.0).abs() < 1e-14);
        for &t in &[s, s + 0.5] {
            let (l, r) = (q.value(t - 1e-9), q.value(t + 1e-9));
            assert!((l - r).abs() < 1e-8);
            let (dl, dr) = (q.derivative(t - 1e-9), q.derivative(t + 1e-9));
            assert!((dl - dr).abs() < 1e-7);
        }
        assert_eq!(q.value(10.0), 1.0);
        assert!(q.value(-0.3) == 0.09);
    }

    #[test]
    fn concave_tv_majorizer_dominates() {
        let tv = TotalVariation {
            penalty: EdgePenalty::ConcaveLog { theta: 0.5 },
            ..TotalVariation::new(3, 3, 0.7)
        };
        let reg = Regularizer::TotalVariation(tv);
        let u_k: Vec<f64> = (0..9).map(|i| (i as f64 * 0.7).sin()).collect();
        let u: Vec<f64> = (0..9).map(|i| (i as f64 * 1.3).cos()).collect();
        assert!(reg.majorizer_value(&u, &u_k) >= reg.value(&u) - 1e-12);
        assert!((reg.majorizer_value(&u_k, &u_k) - reg.value(&u_k)).abs() < 1e-12);
    }

    #[test]
    fn energy_gradient_requires_smooth_regularizer() {
        let outer = SmoothOuter::least_squares(Operator::Identity(1), vec![0.0]).unwrap();
        let p = CompositeProblem::new(
            outer,
            InnerMap::Separable(SeparableMap::identity(1)),
            Regularizer::Separable(vec![ScalarFn::abs()]),
            BoxDomain::uniform(1, -1.0, 1.0).unwrap(),
        )
        .unwrap();
        assert!(matches!(p.energy_gradient(&[0.5]), Err(Error::Config(_))));
    }
}
