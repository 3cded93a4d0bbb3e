//! Global minimization of univariate functions on an interval: exhaustive
//! grid search followed by guarded parabolic refinement.

use crate::{Error, Real, Result};

/// Search settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSearch<T> {
    pub grid_n: usize,
    pub refine_steps: usize,
    /// Refinement stops once the bracket half-width drops below this.
    pub tol: T,
}

impl<T: Real> Default for GridSearch<T> {
    fn default() -> Self {
        Self {
            grid_n: 2048,
            refine_steps: 8,
            tol: T::lit(1e-10),
        }
    }
}

impl<T: Real> GridSearch<T> {
    pub fn validate(&self) -> Result<()> {
        if self.grid_n < 3 {
            return Err(Error::Config(format!(
                "grid needs at least 3 points, got {}",
                self.grid_n
            )));
        }
        if !(self.tol >= T::zero()) {
            return Err(Error::Config("refinement tolerance must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Uniform abscissae `a + (b − a)·i/(n − 1)`, endpoints exact.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    a: T,
    b: T,
    points: Vec<T>,
}

impl<T: Real> Grid<T> {
    pub fn new(a: T, b: T, n: usize) -> Result<Self> {
        if !(a < b) {
            return Err(Error::Config(format!("empty interval [{a}, {b}]")));
        }
        if n < 3 {
            return Err(Error::Config(format!("grid needs at least 3 points, got {n}")));
        }
        let den = T::from_usize_lossy(n - 1);
        let mut points: Vec<T> = (0..n)
            .map(|i| a + (b - a) * (T::from_usize_lossy(i) / den))
            .collect();
        points[n - 1] = b;
        Ok(Self { a, b, points })
    }

    pub fn points(&self) -> &[T] {
        &self.points
    }

    pub fn bounds(&self) -> (T, T) {
        (self.a, self.b)
    }

    pub fn spacing(&self) -> T {
        (self.b - self.a) / T::from_usize_lossy(self.points.len() - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum<T> {
    pub x: T,
    pub f: T,
}

/// Vertex of the parabola through three points, clamped to
/// `[x_left, x_right]`. Returns `x_mid` when the points are collinear or the
/// parabola opens downward.
pub fn parabolic_refine<T: Real>(xl: T, xm: T, xr: T, fl: T, fm: T, fr: T) -> T {
    let p = (xm - xl) * (fm - fr);
    let q = (xm - xr) * (fm - fl);
    let den = p - q;
    // den has the sign of the leading coefficient times a positive factor.
    if !(den < T::zero() || den > T::zero()) || !den.is_finite() {
        return xm;
    }
    let num = (xm - xl) * p - (xm - xr) * q;
    let x = xm - T::lit(0.5) * num / den;
    let curvature = (fl - fm) / (xm - xl) + (fr - fm) / (xr - xm);
    if !(curvature > T::zero()) || !x.is_finite() {
        return xm;
    }
    x.max(xl).min(xr)
}

fn checked<T: Real>(x: T, v: T) -> Result<T> {
    if v.is_nan() {
        Err(Error::NanAt { x: x.as_f64() })
    } else {
        Ok(v)
    }
}

/// Grid search over tabulated values followed by refinement with `f`.
///
/// `table(i)` must equal `f(grid.points()[i])`; it lets callers cache
/// expensive parts of the objective. When `anchor` is given it is evaluated
/// too and wins ties, so the result never exceeds `f(anchor)`.
pub fn search<T: Real>(
    grid: &Grid<T>,
    table: impl Fn(usize) -> T,
    f: impl Fn(T) -> T,
    anchor: Option<T>,
    cfg: &GridSearch<T>,
) -> Result<Minimum<T>> {
    search_points(grid.points(), grid.spacing(), grid.bounds(), table, f, anchor, cfg)
}

/// Like [`search`] on an arbitrary run of points `pts` (possibly empty when
/// an anchor is given). Refinement starts from half-width `h0` and stays
/// inside `bounds`.
pub fn search_points<T: Real>(
    pts: &[T],
    h0: T,
    bounds: (T, T),
    table: impl Fn(usize) -> T,
    f: impl Fn(T) -> T,
    anchor: Option<T>,
    cfg: &GridSearch<T>,
) -> Result<Minimum<T>> {
    let (a, b) = bounds;
    let mut best: Option<Minimum<T>> = None;
    for (i, &x) in pts.iter().enumerate() {
        let v = checked(x, table(i))?;
        if best.is_none_or(|m| v < m.f) {
            best = Some(Minimum { x, f: v });
        }
    }
    let mut anchor_min = None;
    if let Some(x0) = anchor {
        let x0 = x0.max(a).min(b);
        let v = checked(x0, f(x0))?;
        if best.is_none_or(|m| v <= m.f) {
            best = Some(Minimum { x: x0, f: v });
            anchor_min = best;
        }
    }
    let Some(mut best) = best else {
        return Err(Error::Config("nothing to search: no points and no anchor".into()));
    };
    if best.f == T::infinity() {
        return Ok(best);
    }

    let mut h = h0;
    for _ in 0..cfg.refine_steps {
        if h <= cfg.tol {
            break;
        }
        let xl = (best.x - h).max(a);
        let xr = (best.x + h).min(b);
        let fl = checked(xl, f(xl))?;
        let fr = checked(xr, f(xr))?;
        let mut cand = best;
        if fl < cand.f {
            cand = Minimum { x: xl, f: fl };
        }
        if fr < cand.f {
            cand = Minimum { x: xr, f: fr };
        }
        if xl < best.x && best.x < xr && best.f <= fl && best.f <= fr {
            let xv = parabolic_refine(xl, best.x, xr, fl, best.f, fr);
            if xv != best.x {
                let fv = checked(xv, f(xv))?;
                if fv < cand.f {
                    cand = Minimum { x: xv, f: fv };
                }
            }
        }
        if cand.f < best.f {
            best = cand;
        }
        h = h * T::lit(0.5);
    }
    // Stay at the anchor unless the improvement is above roundoff, so exact
    // fixed points are detected. Roundoff is relative to the values compared:
    // callers that measure `f` from the anchor get small values there and
    // with them a fine resolution.
    if let Some(am) = anchor_min {
        let eps = T::epsilon() * T::lit(8.0) * (am.f.abs() + best.f.abs());
        if best.f >= am.f - eps {
            best = am;
        }
    }
    Ok(best)
}

/// Global minimum of `f` on `[a, b]`.
pub fn minimize_1d<T: Real>(
    f: impl Fn(T) -> T,
    a: T,
    b: T,
    cfg: &GridSearch<T>,
) -> Result<Minimum<T>> {
    cfg.validate()?;
    let grid = Grid::new(a, b, cfg.grid_n)?;
    let pts = grid.points();
    search(&grid, |i| f(pts[i]), &f, None, cfg)
}
