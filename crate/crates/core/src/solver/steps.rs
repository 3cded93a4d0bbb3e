//! Single iterations of every method.
//!
//! The proposed step, forward-backward splitting and outer linearization
//! all minimize a per-coordinate surrogate of the form
//!
//! ```text
//! φ_j(x) = Σ_t [ (1/τ) D_t(P_t(x), a_t) + c_t L_t(x) ] + r_j(x)
//! ```
//!
//! where `P_t` and `L_t` are either `x` itself or one of the inner
//! functions. They share one evaluator, so when `ρ` is the identity and `h`
//! is quadratic the three methods agree to the last bit.

use rayon::prelude::*;

use crate::geometry::Geometry;
use crate::problem::{BoxDomain, CompositeProblem, Regularizer};
use crate::scalar::{search, search_points, Grid, GridSearch};
use crate::{Error, Real, Result};
use super::Method;

/// `E_{u_k}(u) = (1/τ) D_h(ρ(u), ρ(u_k)) + G(ρ(u_k)) + ⟨∇G(ρ(u_k)), ρ(u) − ρ(u_k)⟩ + R̂(u; u_k)`
/// where `R̂` is `R` itself or, for concave edge penalties, its
/// linearization at `u_k`.
pub fn majorizer_value<T: Real>(
    problem: &CompositeProblem<T>,
    geom: &Geometry<T>,
    tau: T,
    u_k: &[T],
    u: &[T],
) -> Result<T> {
    crate::problem::check_len("anchor", problem.dim(), u_k.len())?;
    crate::problem::check_len("iterate", problem.dim(), u.len())?;
    let inner = problem.inner();
    let zk = inner.lift(u_k);
    if let Some(k) = zk.iter().position(|&v| !geom.in_interior(v)) {
        return Err(Error::Domain(format!(
            "ρ(u_k) is not inside dom h at coordinate {}",
            inner.owner(k)
        )));
    }
    let z = inner.lift(u);
    let g = problem.outer_gradient_lifted(&zk);
    let d = geom.bregman(&z, &zk)?;
    let lin = g
        .iter()
        .zip(z.iter().zip(&zk))
        .fold(T::zero(), |acc, (&gi, (&a, &b))| acc + gi * (a - b));
    let prox = if geom.is_linear() { T::zero() } else { d / tau };
    Ok(prox + problem.outer_value_lifted(&zk) + lin + problem.regularizer().majorizer_value(u, u_k))
}

/// Value at `u` of the surrogate a baseline minimizes around `u_k`:
///
/// * gd: `E(u_k) + ⟨∇E(u_k), u − u_k⟩ + ‖u − u_k‖²/(2τ)`
/// * fbs: `F(u_k) + ⟨∇F(u_k), u − u_k⟩ + R(u) + D_h(u, u_k)/τ`, `F = G∘ρ`
/// * outer-linear: `G(ρ(u_k)) + ⟨∇G(ρ(u_k)), ρ(u) − ρ(u_k)⟩ + R(u) + ‖u − u_k‖²/(2τ)`
/// * prox-linear: `G(ρ(u_k) + J_ρ(u_k)(u − u_k)) + R(u) + ‖u − u_k‖²/(2τ)`
///
/// Backtracking accepts a step only where this model still lies above `E`.
pub fn baseline_model<T: Real>(
    problem: &CompositeProblem<T>,
    method: Method,
    geom_on_u: &Geometry<T>,
    tau: T,
    u_k: &[T],
    u: &[T],
) -> Result<T> {
    crate::problem::check_len("anchor", problem.dim(), u_k.len())?;
    crate::problem::check_len("iterate", problem.dim(), u.len())?;
    let inner = problem.inner();
    let zk = inner.lift(u_k);
    let half_sq = u
        .iter()
        .zip(u_k)
        .fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b))
        * T::lit(0.5)
        / tau;
    let dot = |g: &[T]| {
        g.iter()
            .zip(u.iter().zip(u_k))
            .fold(T::zero(), |acc, (&gi, (&a, &b))| acc + gi * (a - b))
    };
    match method {
        Method::Gd => Ok(problem.energy(u_k)? + dot(&problem.energy_gradient(u_k)?) + half_sq),
        Method::Fbs => {
            let prox = geom_on_u.bregman(u, u_k)? / tau;
            Ok(problem.outer_value_lifted(&zk)
                + dot(&problem.smooth_gradient(u_k)?)
                + problem.regularizer().value(u)
                + prox)
        }
        Method::OuterLinear => {
            let z = inner.lift(u);
            let g = problem.outer_gradient_lifted(&zk);
            let lin = g
                .iter()
                .zip(z.iter().zip(&zk))
                .fold(T::zero(), |acc, (&gi, (&a, &b))| acc + gi * (a - b));
            Ok(problem.outer_value_lifted(&zk) + lin + problem.regularizer().value(u) + half_sq)
        }
        Method::ProxLinear => {
            let dz = inner.lifted_derivatives(u_k)?;
            let lin: Vec<T> = zk
                .iter()
                .zip(&dz)
                .enumerate()
                .map(|(k, (&z, &d))| {
                    let j = inner.owner(k);
                    z + d * (u[j] - u_k[j])
                })
                .collect();
            Ok(problem.outer_value_lifted(&lin) + problem.regularizer().value(u) + half_sq)
        }
        m => Err(Error::Config(format!("{m} has no baseline model"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Arg {
    X,
    Rho(usize),
}

#[derive(Clone, Copy)]
struct Prox<'g, T> {
    geom: &'g Geometry<T>,
    index: usize,
    arg: Arg,
    anchor: T,
}

#[derive(Clone, Copy)]
struct Term<'g, T> {
    prox: Option<Prox<'g, T>>,
    coef: T,
    lin: Arg,
}

/// Inner prox-gradient settings of the prox-linear baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerConfig<T> {
    pub max_iter: usize,
    pub tol: T,
    /// Grid resolution of the windowed 1D proximal search.
    pub prox_grid: usize,
}

impl<T: Real> Default for InnerConfig<T> {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: T::lit(1e-8),
            prox_grid: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxLinearOutcome<T> {
    pub u: Vec<T>,
    pub converged: bool,
    pub inner_iters: usize,
}

/// Tabulated inner functions and regularizer values on per-coordinate
/// grids, reused across iterations.
#[derive(Debug, Clone)]
pub struct SeparableSteps<T> {
    search: GridSearch<T>,
    grids: Vec<Grid<T>>,
    rho: Vec<Vec<T>>,
    r: Option<Vec<Vec<T>>>,
    r_floor: Vec<T>,
}

impl<T: Real> SeparableSteps<T> {
    pub fn new(problem: &CompositeProblem<T>, search: GridSearch<T>) -> Result<Self> {
        search.validate()?;
        if !problem.regularizer().is_separable() {
            return Err(Error::Config(
                "total variation couples coordinates; use the lifting step".into(),
            ));
        }
        let n = problem.dim();
        let bounds = problem.bounds();
        let grids = (0..n)
            .map(|j| {
                let (a, b) = bounds.interval(j);
                Grid::new(a, b, search.grid_n)
            })
            .collect::<Result<Vec<_>>>()?;
        let inner = problem.inner();
        let rho = inner
            .components()
            .par_iter()
            .enumerate()
            .map(|(k, f)| grids[inner.owner(k)].points().iter().map(|&x| f.eval(x)).collect())
            .collect();
        let r = match problem.regularizer() {
            Regularizer::Separable(rs) => Some(
                rs.par_iter()
                    .enumerate()
                    .map(|(j, f)| grids[j].points().iter().map(|&x| f.eval(x)).collect())
                    .collect::<Vec<Vec<T>>>(),
            ),
            _ => None,
        };
        let r_floor = match &r {
            Some(tab) => tab
                .iter()
                .map(|t: &Vec<T>| {
                    let lo = t.iter().copied().fold(T::infinity(), T::min);
                    let hi = t.iter().copied().fold(T::neg_infinity(), T::max);
                    lo - T::lit(1e-3) * (hi - lo) - T::lit(1e-12)
                })
                .collect(),
            None => vec![T::zero(); n],
        };
        Ok(Self {
            search,
            grids,
            rho,
            r,
            r_floor,
        })
    }

    fn check(&self, problem: &CompositeProblem<T>, u_k: &[T]) -> Result<()> {
        crate::problem::check_len("separable step tables", self.grids.len(), problem.dim())?;
        crate::problem::check_len("iterate", problem.dim(), u_k.len())
    }

    /// Global minimizer of `φ_j` over the box interval, anchored at `u_kj`.
    fn solve_coord(
        &self,
        problem: &CompositeProblem<T>,
        j: usize,
        inv_tau: T,
        terms: &[Term<'_, T>],
        anchor: T,
    ) -> Result<T> {
        let comps = problem.inner().components();
        let r = problem.regularizer().coordinate(j);
        let grid = &self.grids[j];
        let pts = grid.points();
        // Linear parts are measured from the anchor. This shifts φ_j by a
        // constant and keeps its values small near the minimizer, where the
        // refinement compares them.
        let base: Vec<T> = terms
            .iter()
            .map(|t| match t.lin {
                Arg::X => anchor,
                Arg::Rho(k) => comps[k].eval(anchor),
            })
            .collect();
        let combine = |val: &dyn Fn(Arg) -> T, rv: T| {
            let mut acc = T::zero();
            for (t, &l0) in terms.iter().zip(&base) {
                let l = val(t.lin);
                if let Some(p) = t.prox {
                    let pv = if p.arg == t.lin { l } else { val(p.arg) };
                    acc = acc + inv_tau * p.geom.coord_bregman(p.index, pv, p.anchor);
                }
                acc = acc + t.coef * (l - l0);
            }
            acc + rv
        };
        let table = |i: usize| {
            let val = |a: Arg| match a {
                Arg::X => pts[i],
                Arg::Rho(k) => self.rho[k][i],
            };
            let rv = self.r.as_ref().map_or(T::zero(), |t| t[j][i]);
            combine(&val, rv)
        };
        let f = |x: T| {
            let val = |a: Arg| match a {
                Arg::X => x,
                Arg::Rho(k) => comps[k].eval(x),
            };
            combine(&val, r.map_or(T::zero(), |r| r.eval(x)))
        };
        search(grid, table, f, Some(anchor), &self.search)
            .map(|m| m.x)
            .map_err(|e| Error::Step {
                index: j,
                reason: e.to_string(),
            })
    }

    fn solve_all<'g>(
        &self,
        problem: &CompositeProblem<T>,
        inv_tau: T,
        u_k: &[T],
        terms_of: impl Fn(usize) -> Vec<Term<'g, T>> + Sync,
    ) -> Result<Vec<T>> {
        (0..problem.dim())
            .into_par_iter()
            .map(|j| self.solve_coord(problem, j, inv_tau, &terms_of(j), u_k[j]))
            .collect()
    }

    pub fn mm_step(
        &self,
        problem: &CompositeProblem<T>,
        geom: &Geometry<T>,
        tau: T,
        u_k: &[T],
    ) -> Result<Vec<T>> {
        self.inertial_mm_step(problem, geom, tau, T::zero(), u_k, u_k)
    }

    /// The proposed step with inertia: the extra term
    /// `(β/τ)(D_h(ρ(u), ρ(u_k)) − D_h(ρ(u), ρ(u_{k−1})))` is, up to a
    /// constant, linear in `ρ(u)` and folded into the coefficients.
    pub fn inertial_mm_step(
        &self,
        problem: &CompositeProblem<T>,
        geom: &Geometry<T>,
        tau: T,
        beta: T,
        u_k: &[T],
        u_km1: &[T],
    ) -> Result<Vec<T>> {
        self.check(problem, u_k)?;
        crate::problem::check_len("previous iterate", u_k.len(), u_km1.len())?;
        let inner = problem.inner();
        geom.check_dim(inner.lifted_dim())?;
        let zk = inner.lift(u_k);
        if let Some(k) = zk.iter().position(|&v| !geom.in_interior(v)) {
            return Err(Error::Domain(format!(
                "ρ(u_k) is not inside dom h at coordinate {}",
                inner.owner(k)
            )));
        }
        let mut lin = problem.outer_gradient_lifted(&zk);
        if beta != T::zero() && u_km1 != u_k {
            let zkm1 = inner.lift(u_km1);
            let w = beta / tau;
            for (k, c) in lin.iter_mut().enumerate() {
                *c = *c + w * (geom.coord_grad(k, zkm1[k]) - geom.coord_grad(k, zk[k]));
            }
        }
        let prox_on = !geom.is_linear();
        self.solve_all(problem, tau.recip(), u_k, |j| {
            inner
                .owned(j)
                .map(|k| Term {
                    prox: prox_on.then_some(Prox {
                        geom,
                        index: k,
                        arg: Arg::Rho(k),
                        anchor: zk[k],
                    }),
                    coef: lin[k],
                    lin: Arg::Rho(k),
                })
                .collect()
        })
    }

    /// Linearizes `F = G∘ρ` and keeps the Bregman proximity in `u`.
    pub fn fbs_step(
        &self,
        problem: &CompositeProblem<T>,
        geom_on_u: &Geometry<T>,
        tau: T,
        u_k: &[T],
    ) -> Result<Vec<T>> {
        self.check(problem, u_k)?;
        geom_on_u.check_dim(problem.dim())?;
        if let Some(j) = u_k.iter().position(|&v| !geom_on_u.in_interior(v)) {
            return Err(Error::Domain(format!("u_k is not inside dom h at coordinate {j}")));
        }
        let grad = problem.smooth_gradient(u_k)?;
        let prox_on = !geom_on_u.is_linear();
        self.solve_all(problem, tau.recip(), u_k, |j| {
            vec![Term {
                prox: prox_on.then_some(Prox {
                    geom: geom_on_u,
                    index: j,
                    arg: Arg::X,
                    anchor: u_k[j],
                }),
                coef: grad[j],
                lin: Arg::X,
            }]
        })
    }

    /// Linearizes only `G`, with Euclidean proximity in `u`.
    pub fn outer_linear_step(
        &self,
        problem: &CompositeProblem<T>,
        tau: T,
        u_k: &[T],
    ) -> Result<Vec<T>> {
        self.check(problem, u_k)?;
        let inner = problem.inner();
        let g = problem.outer_gradient_lifted(&inner.lift(u_k));
        let quad = Geometry::quadratic();
        let quad = &quad;
        self.solve_all(problem, tau.recip(), u_k, |j| {
            inner
                .owned(j)
                .enumerate()
                .map(|(c, k)| Term {
                    prox: (c == 0).then_some(Prox {
                        geom: quad,
                        index: j,
                        arg: Arg::X,
                        anchor: u_k[j],
                    }),
                    coef: g[k],
                    lin: Arg::Rho(k),
                })
                .collect()
        })
    }

    /// `argmin_x r_j(x) + (x − w)²/(2s)` over the box interval.
    fn prox_r(&self, problem: &CompositeProblem<T>, j: usize, w: T, s: T, cfg: &InnerConfig<T>) -> Result<T> {
        let grid = &self.grids[j];
        let (a, b) = grid.bounds();
        let xc = w.max(a).min(b);
        let (Some(tab), Some(r)) = (self.r.as_ref(), problem.regularizer().coordinate(j)) else {
            return Ok(xc);
        };
        let half_inv_s = T::lit(0.5) / s;
        let phi = |x: T| {
            let d = x - w;
            r.eval(x) + half_inv_s * d * d
        };
        // Any minimizer beats the clipped point, which bounds its distance to w.
        let reach = (T::lit(2.0) * s * (phi(xc) - self.r_floor[j]).max(T::zero())).sqrt();
        let lo = (w - reach).max(a);
        let hi = (w + reach).min(b);
        let sp = grid.spacing();
        let last = grid.points().len() - 1;
        let idx = |x: T, up: bool| {
            let t = (x - a) / sp;
            let t = if up { t.ceil() } else { t.floor() };
            t.to_usize().unwrap_or(0).min(last)
        };
        let (i0, i1) = (idx(lo, false), idx(hi, true));
        // A coarse window is enough for the cached table; the budget caps
        // how many entries are scanned.
        let stride = ((i1 - i0) / cfg.prox_grid.max(2)).max(1);
        let sel: Vec<usize> = (i0..=i1).step_by(stride).collect();
        let pts: Vec<T> = sel.iter().map(|&i| grid.points()[i]).collect();
        let table = |m: usize| {
            let d = pts[m] - w;
            tab[j][sel[m]] + half_inv_s * d * d
        };
        let h0 = sp * T::from_usize_lossy(stride);
        search_points(&pts, h0, (a, b), table, phi, Some(xc), &self.search)
            .map(|m| m.x)
            .map_err(|e| Error::Step {
                index: j,
                reason: e.to_string(),
            })
    }

    /// Approximately minimizes
    /// `G(ρ(u_k) + J_ρ(u_k)(u − u_k)) + R(u) + ‖u − u_k‖²/(2τ)`
    /// by proximal gradient with backtracking.
    pub fn prox_linear_step(
        &self,
        problem: &CompositeProblem<T>,
        tau: T,
        u_k: &[T],
        cfg: &InnerConfig<T>,
    ) -> Result<ProxLinearOutcome<T>> {
        self.check(problem, u_k)?;
        let inner = problem.inner();
        let n = problem.dim();
        let zk = inner.lift(u_k);
        let jac = inner.lifted_derivatives(u_k)?;
        let half_inv_tau = T::lit(0.5) / tau;
        let model_z = |u: &[T]| -> Vec<T> {
            zk.iter()
                .enumerate()
                .map(|(k, &z)| {
                    let j = inner.owner(k);
                    z + jac[k] * (u[j] - u_k[j])
                })
                .collect()
        };
        let smooth = |u: &[T]| -> T {
            let prox = u
                .iter()
                .zip(u_k)
                .fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));
            problem.outer_value_lifted(&model_z(u)) + half_inv_tau * prox
        };
        let smooth_grad = |u: &[T]| -> Vec<T> {
            let gz = problem.outer_gradient_lifted(&model_z(u));
            let mut g: Vec<T> = u.iter().zip(u_k).map(|(&a, &b)| (a - b) / tau).collect();
            for (k, (&gk, &jk)) in gz.iter().zip(&jac).enumerate() {
                let j = inner.owner(k);
                g[j] = g[j] + gk * jk;
            }
            g
        };

        let mut y = u_k.to_vec();
        let mut sy = smooth(&y);
        let mut s = tau;
        let mut converged = false;
        let mut iters = 0;
        while iters < cfg.max_iter {
            iters += 1;
            let g = smooth_grad(&y);
            let (v, sv) = loop {
                let v = (0..n)
                    .into_par_iter()
                    .map(|j| self.prox_r(problem, j, y[j] - s * g[j], s, cfg))
                    .collect::<Result<Vec<T>>>()?;
                let sv = smooth(&v);
                let mut quad = T::zero();
                let mut lin = T::zero();
                for j in 0..n {
                    let d = v[j] - y[j];
                    lin = lin + g[j] * d;
                    quad = quad + d * d;
                }
                if sv <= sy + lin + T::lit(0.5) / s * quad {
                    break (v, sv);
                }
                s = s * T::lit(0.5);
                if s < tau * T::lit(1e-30) {
                    return Ok(ProxLinearOutcome {
                        u: y,
                        converged: false,
                        inner_iters: iters,
                    });
                }
            };
            let step = v
                .iter()
                .zip(&y)
                .fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs()));
            let scale = y.iter().fold(T::zero(), |acc, &a| acc.max(a.abs()));
            y = v;
            sy = sv;
            if step <= cfg.tol * (T::one() + scale) {
                converged = true;
                break;
            }
            s = (s * T::lit(2.0)).min(tau);
        }
        Ok(ProxLinearOutcome {
            u: y,
            converged,
            inner_iters: iters,
        })
    }
}

pub fn mm_step<T: Real>(
    problem: &CompositeProblem<T>,
    geom: &Geometry<T>,
    tau: T,
    u_k: &[T],
) -> Result<Vec<T>> {
    SeparableSteps::new(problem, GridSearch::default())?.mm_step(problem, geom, tau, u_k)
}

pub fn inertial_mm_step<T: Real>(
    problem: &CompositeProblem<T>,
    geom: &Geometry<T>,
    tau: T,
    beta: T,
    u_k: &[T],
    u_km1: &[T],
) -> Result<Vec<T>> {
    SeparableSteps::new(problem, GridSearch::default())?
        .inertial_mm_step(problem, geom, tau, beta, u_k, u_km1)
}

pub fn fbs_step<T: Real>(
    problem: &CompositeProblem<T>,
    geom_on_u: &Geometry<T>,
    tau: T,
    u_k: &[T],
) -> Result<Vec<T>> {
    SeparableSteps::new(problem, GridSearch::default())?.fbs_step(problem, geom_on_u, tau, u_k)
}

pub fn outer_linear_step<T: Real>(
    problem: &CompositeProblem<T>,
    tau: T,
    u_k: &[T],
) -> Result<Vec<T>> {
    SeparableSteps::new(problem, GridSearch::default())?.outer_linear_step(problem, tau, u_k)
}

pub fn prox_linear_step<T: Real>(
    problem: &CompositeProblem<T>,
    tau: T,
    u_k: &[T],
    cfg: &InnerConfig<T>,
) -> Result<ProxLinearOutcome<T>> {
    SeparableSteps::new(problem, GridSearch::default())?.prox_linear_step(problem, tau, u_k, cfg)
}

/// `clip(u_k − τ∇E(u_k))`
pub fn gd_step<T: Real>(problem: &CompositeProblem<T>, tau: T, u_k: &[T]) -> Result<Vec<T>> {
    let g = problem.energy_gradient(u_k)?;
    let mut u: Vec<T> = u_k.iter().zip(&g).map(|(&u, &g)| u - tau * g).collect();
    problem.bounds().clamp(&mut u);
    Ok(u)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Real> Default for AdamHyper<T> {
    fn default() -> Self {
        Self {
            lr: T::lit(0.01),
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Real> AdamState<T> {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            t: 0,
        }
    }

    pub fn reset(&mut self) {
        *self = Self::new(self.m.len());
    }

    pub fn steps(&self) -> i32 {
        self.t
    }
}

/// One bias-corrected Adam update followed by projection onto the box.
pub fn adam_step<T: Real>(
    state: &mut AdamState<T>,
    u: &[T],
    grad: &[T],
    hyper: &AdamHyper<T>,
    bounds: &BoxDomain<T>,
) -> Vec<T> {
    state.t += 1;
    let c1 = T::one() - hyper.beta1.powi(state.t);
    let c2 = T::one() - hyper.beta2.powi(state.t);
    let mut out = Vec::with_capacity(u.len());
    for j in 0..u.len() {
        let g = grad[j];
        state.m[j] = hyper.beta1 * state.m[j] + (T::one() - hyper.beta1) * g;
        state.v[j] = hyper.beta2 * state.v[j] + (T::one() - hyper.beta2) * g * g;
        let mh = state.m[j] / c1;
        let vh = state.v[j] / c2;
        out.push(u[j] - hyper.lr * mh / (vh.sqrt() + hyper.eps));
    }
    bounds.clamp(&mut out);
    out
}
