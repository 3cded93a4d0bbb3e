//! Trace export and the checks that can be read off a finished trace.

use std::io::Write;

use super::SolverRun;
use crate::{Real, Result};

/// Writes `k,E,dz,accepted,wall_ms` rows with 17 significant digits.
pub fn write_trace_csv<T: Real, W: Write>(run: &SolverRun<T>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "E", "dz", "accepted", "wall_ms"])?;
    for r in &run.trace {
        w.write_record([
            r.k.to_string(),
            fmt17(r.energy.as_f64()),
            fmt17(r.dz.as_f64()),
            r.accepted.to_string(),
            fmt17(r.wall_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// 17 significant digits, locale independent.
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Iterations whose accepted step violates
/// `E(u^{k+1}) − E(u^k) ≤ −((1 − τL)/τ) D_h(z^{k+1}, z^k)` beyond a relative
/// slack of `1e-9`.
pub fn descent_violations<T: Real>(run: &SolverRun<T>) -> Vec<usize> {
    let alpha = run.config.descent_factor();
    let mut prev = None;
    let mut bad = Vec::new();
    for r in run.trace.iter().filter(|r| r.accepted) {
        if let Some(e_prev) = prev {
            let slack = T::lit(1e-9) * (T::one() + T::abs(e_prev));
            if r.energy - e_prev > -alpha * r.dz + slack {
                bad.push(r.k);
            }
        }
        prev = Some(r.energy);
    }
    bad
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateCheck {
    pub holds: bool,
    /// First `N` at which the bound fails.
    pub first_violation: Option<usize>,
    pub steps: usize,
}

/// `min_{k≤N} D_h(z^{k+1}, z^k) ≤ (E(first) − min E)/(α N)` for every `N`,
/// checked exactly on the accepted steps of the trace.
pub fn rate_check<T: Real>(run: &SolverRun<T>) -> RateCheck {
    let alpha = run.config.descent_factor();
    let accepted: Vec<_> = run.trace.iter().filter(|r| r.accepted).collect();
    let steps = accepted.len().saturating_sub(1);
    let Some(first) = accepted.first() else {
        return RateCheck {
            holds: true,
            first_violation: None,
            steps,
        };
    };
    let e_min = accepted
        .iter()
        .map(|r| r.energy)
        .fold(T::infinity(), T::min);
    let budget = first.energy - e_min;
    let mut min_dz = T::infinity();
    for (i, r) in accepted.iter().skip(1).enumerate() {
        let n = T::from_usize_lossy(i + 1);
        min_dz = min_dz.min(r.dz);
        if min_dz > budget / (alpha * n) {
            return RateCheck {
                holds: false,
                first_violation: Some(i + 1),
                steps,
            };
        }
    }
    RateCheck {
        holds: true,
        first_violation: None,
        steps,
    }
}
