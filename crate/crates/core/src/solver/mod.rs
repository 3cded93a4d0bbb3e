//! The majorization-minimization loop, its inertial variant and the
//! baseline methods, all producing the same kind of diagnostic trace.

mod steps;
mod trace;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::geometry::Geometry;
use crate::lifting::{LiftedStepper, LiftingConfig};
use crate::problem::{CompositeProblem, Regularizer};
use crate::scalar::GridSearch;
use crate::{Error, Real, Result};

pub use steps::{
    adam_step, baseline_model, fbs_step, gd_step, inertial_mm_step, majorizer_value, mm_step, outer_linear_step,
    prox_linear_step, AdamHyper, AdamState, InnerConfig, ProxLinearOutcome, SeparableSteps,
};
pub use trace::{descent_violations, fmt17, rate_check, write_trace_csv, RateCheck};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Proposed,
    ProposedInertia,
    Gd,
    Fbs,
    ProxLinear,
    OuterLinear,
    Adam,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Proposed,
        Method::ProposedInertia,
        Method::Gd,
        Method::Fbs,
        Method::ProxLinear,
        Method::OuterLinear,
        Method::Adam,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::ProposedInertia => "proposed-inertia",
            Method::Gd => "gd",
            Method::Fbs => "fbs",
            Method::ProxLinear => "prox-linear",
            Method::OuterLinear => "outer-linear",
            Method::Adam => "adam",
        }
    }

    /// Methods whose step minimizes a majorizer in the geometry of `h` on
    /// the image of `ρ`, and therefore need `τ < 1/L`.
    pub fn is_mm(self) -> bool {
        matches!(self, Method::Proposed | Method::ProposedInertia)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig<T> {
    pub method: Method,
    pub tau: T,
    pub beta: T,
    pub max_iter: usize,
    /// Threshold on `D_h(z^{k+1}, z^k)`.
    pub tol_dz: T,
    pub guard: bool,
    pub seed: u64,
    /// Relative smoothness constant `τ` is checked against.
    pub l: T,
    pub search: GridSearch<T>,
    pub prox_inner: InnerConfig<T>,
    pub adam: AdamHyper<T>,
    pub lifting: LiftingConfig<T>,
}

impl<T: Real> SolverConfig<T> {
    /// Config with `τ = 0.99/L`.
    pub fn new(method: Method, l: T) -> Result<Self> {
        Self::with_tau(method, l, T::lit(0.99) / l)
    }

    pub fn with_tau(method: Method, l: T, tau: T) -> Result<Self> {
        let cfg = Self {
            method,
            tau,
            beta: if method == Method::ProposedInertia {
                T::lit(0.4)
            } else {
                T::zero()
            },
            max_iter: 500,
            tol_dz: T::lit(1e-14),
            guard: true,
            seed: 0,
            l,
            search: GridSearch::default(),
            prox_inner: InnerConfig::default(),
            adam: AdamHyper::default(),
            lifting: LiftingConfig::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l > T::zero()) || !self.l.is_finite() {
            return Err(Error::Config(format!("L must be positive, got {}", self.l)));
        }
        if !(self.tau > T::zero()) || !self.tau.is_finite() {
            return Err(Error::Config(format!("τ must be positive, got {}", self.tau)));
        }
        if self.method.is_mm() && !(self.tau * self.l < T::one()) {
            return Err(Error::Config(format!(
                "{} needs τ < 1/L strictly (τ = {}, L = {})",
                self.method, self.tau, self.l
            )));
        }
        if !(self.beta >= T::zero() && self.beta < T::lit(0.5)) {
            return Err(Error::Config(format!("β must lie in [0, 0.5), got {}", self.beta)));
        }
        if !(self.tol_dz >= T::zero()) {
            return Err(Error::Config("tol_dz must be nonnegative".into()));
        }
        self.search.validate()?;
        self.lifting.validate()
    }

    /// `(1 − τL)/τ`, the descent factor in front of `D_h`.
    pub fn descent_factor(&self) -> T {
        (T::one() - self.tau * self.l) / self.tau
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord<T> {
    pub k: usize,
    pub energy: T,
    /// `D_h(z^k, z^{k−1})`; zero for the initial record and rejected steps.
    pub dz: T,
    pub accepted: bool,
    pub wall_ms: f64,
    /// Set when an inner solver stopped at its iteration cap.
    pub warning: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Tol,
    MaxIter,
    GuardViolation,
    FixedPoint,
}

impl Termination {
    pub fn name(self) -> &'static str {
        match self {
            Termination::Tol => "tol",
            Termination::MaxIter => "max-iter",
            Termination::GuardViolation => "guard-violation",
            Termination::FixedPoint => "fixed-point",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverRun<T> {
    pub config: SolverConfig<T>,
    pub u_final: Vec<T>,
    pub trace: Vec<IterationRecord<T>>,
    pub termination: Termination,
    /// Step size in force at the end (baselines halve it on rejection).
    pub final_tau: T,
}

impl<T: Real> SolverRun<T> {
    pub fn final_energy(&self) -> T {
        self.trace
            .iter()
            .rev()
            .find(|r| r.accepted)
            .map_or(T::nan(), |r| r.energy)
    }

    /// Number of iterations performed, excluding the initial record.
    pub fn iterations(&self) -> usize {
        self.trace.len().saturating_sub(1)
    }
}

fn slack<T: Real>(e: T) -> T {
    T::lit(1e-9) * (T::one() + e.abs())
}

/// Runs `config.method` from `u0`.
pub fn run<T: Real>(
    problem: &CompositeProblem<T>,
    geom: &Geometry<T>,
    config: &SolverConfig<T>,
    u0: &[T],
) -> Result<SolverRun<T>> {
    config.validate()?;
    let n = problem.dim();
    crate::problem::check_len("initial point", n, u0.len())?;
    if !problem.bounds().contains(u0) {
        return Err(Error::Domain("initial point lies outside the box".into()));
    }
    let method = config.method;
    let tv = matches!(problem.regularizer(), Regularizer::TotalVariation(_));
    if tv && !method.is_mm() {
        return Err(Error::Config(format!(
            "{method} needs a separable regularizer; total variation is only supported by the proposed method"
        )));
    }
    if method == Method::Fbs {
        geom.check_dim(n)?;
    } else {
        geom.check_dim(problem.inner().lifted_dim())?;
    }
    let z0 = problem.inner().lift(u0);
    if method.is_mm() {
        if let Some(k) = z0.iter().position(|&v| !geom.in_interior(v)) {
            return Err(Error::Domain(format!(
                "ρ(u0) leaves the interior of dom h at coordinate {}",
                problem.inner().owner(k)
            )));
        }
    }

    let sep = if tv || matches!(method, Method::Gd | Method::Adam) {
        None
    } else {
        Some(SeparableSteps::new(problem, config.search)?)
    };
    let mut lifted = if tv {
        Some(LiftedStepper::new(problem, config.lifting)?)
    } else {
        None
    };
    // D_h in the trace is measured on the image of ρ whenever h lives there.
    let measure_on_z = geom.fixed_dim().is_none_or(|d| d == z0.len());

    let start = Instant::now();
    let elapsed = || start.elapsed().as_secs_f64() * 1e3;
    let mut u = u0.to_vec();
    let mut z = z0;
    let mut e = problem.energy(&u)?;
    let mut trace = vec![IterationRecord {
        k: 0,
        energy: e,
        dz: T::zero(),
        accepted: true,
        wall_ms: elapsed(),
        warning: false,
    }];
    let mut u_prev = u.clone();
    let mut tau = config.tau;
    let mut adam = AdamState::new(n);
    let mut small_steps = 0usize;
    let mut termination = Termination::MaxIter;

    for k in 1..=config.max_iter {
        let mut warning = false;
        let candidate: Option<Vec<T>> = match method {
            Method::Proposed | Method::ProposedInertia => {
                let beta = if method == Method::ProposedInertia {
                    config.beta
                } else {
                    T::zero()
                };
                let mut step = |beta: T| -> Result<Vec<T>> {
                    match (&mut lifted, &sep) {
                        (Some(l), _) => l.step(problem, geom, tau, &u, &u_prev, beta),
                        (None, Some(s)) => {
                            s.inertial_mm_step(problem, geom, tau, beta, &u, &u_prev)
                        }
                        (None, None) => unreachable!("separable steps exist for MM methods"),
                    }
                };
                let mut next = step(beta)?;
                let mut plain = beta == T::zero() || u_prev == u;
                // The inertial step minimizes a different surrogate, so it is
                // judged by the energy and replaced by a plain step on ascent.
                if !plain && config.guard && problem.energy(&next)? > e {
                    next = step(T::zero())?;
                    plain = true;
                }
                if config.guard
                    && plain
                    && majorizer_value(problem, geom, tau, &u, &next)? > e + slack(e)
                {
                    None
                } else {
                    Some(next)
                }
            }
            Method::Gd => Some(gd_step(problem, tau, &u)?),
            Method::Fbs => Some(sep.as_ref().expect("tables").fbs_step(problem, geom, tau, &u)?),
            Method::OuterLinear => {
                Some(sep.as_ref().expect("tables").outer_linear_step(problem, tau, &u)?)
            }
            Method::ProxLinear => {
                let out = sep.as_ref().expect("tables").prox_linear_step(
                    problem,
                    tau,
                    &u,
                    &config.prox_inner,
                )?;
                warning = !out.converged;
                Some(out.u)
            }
            Method::Adam => {
                let g = problem.energy_gradient(&u)?;
                Some(adam_step(&mut adam, &u, &g, &config.adam, problem.bounds()))
            }
        };

        let Some(next) = candidate else {
            trace.push(IterationRecord {
                k,
                energy: e,
                dz: T::zero(),
                accepted: false,
                wall_ms: elapsed(),
                warning,
            });
            termination = Termination::GuardViolation;
            break;
        };

        let e_next = problem.energy(&next)?;
        if config.guard && method.is_mm() && e_next > e {
            // Past the majorizer test a rise within slack is rounding noise,
            // anything larger means the majorization itself failed.
            trace.push(IterationRecord {
                k,
                energy: e,
                dz: T::zero(),
                accepted: false,
                wall_ms: elapsed(),
                warning,
            });
            termination = if e_next <= e + slack(e) {
                Termination::Tol
            } else {
                Termination::GuardViolation
            };
            break;
        }
        let baseline_guard = config.guard && !method.is_mm() && method != Method::Adam;
        // Backtracking: the step must descend and the method's own model
        // must still majorize E at the new point.
        if baseline_guard
            && !(e_next <= e
                && e_next <= {
                    let m = baseline_model(problem, method, geom, tau, &u, &next)?;
                    m + slack(m)
                })
        {
            tau = tau * T::lit(0.5);
            trace.push(IterationRecord {
                k,
                energy: e,
                dz: T::zero(),
                accepted: false,
                wall_ms: elapsed(),
                warning,
            });
            continue;
        }

        let z_next = problem.inner().lift(&next);
        let fixed = next == u;
        let dz = if fixed {
            T::zero()
        } else if measure_on_z {
            geom.bregman(&z_next, &z)?
        } else {
            geom.bregman(&next, &u)?
        };
        trace.push(IterationRecord {
            k,
            energy: e_next,
            dz,
            accepted: true,
            wall_ms: elapsed(),
            warning,
        });
        u_prev = std::mem::replace(&mut u, next);
        z = z_next;
        e = e_next;
        if fixed && method != Method::Adam {
            termination = Termination::FixedPoint;
            break;
        }
        // D_h vanishes identically for a linear generator, so it says
        // nothing about convergence there.
        if !geom.is_linear() && dz <= config.tol_dz {
            small_steps += 1;
            if small_steps >= 3 {
                termination = Termination::Tol;
                break;
            }
        } else {
            small_steps = 0;
        }
    }

    Ok(SolverRun {
        config: config.clone(),
        u_final: u,
        trace,
        termination,
        final_tau: tau,
    })
}
