//! Desk-scale invariant suite behind `nmm selftest`.

use nmm_bench::{derive_seed, InnerFamily, OuterFamily};
use nmm_core::problem::TvNorm;

use crate::checks::{self, Check};
use crate::Result;

#[derive(Debug, Clone, Copy)]
pub struct SelftestOptions {
    pub seed: u64,
    /// Debug override of the step size, `τ = factor/L`.
    pub tau_factor: Option<f64>,
}

/// Runs every invariant and returns one line per invariant.
pub fn selftest(opts: SelftestOptions) -> Result<Vec<Check>> {
    let seed = opts.seed;
    let mut out = Vec::new();

    let mut worst = checks::Majorization::default();
    for (i, o) in checks::all_cases() {
        let inst = checks::case(i, o, 30, derive_seed(seed, &[20, i.index() as u64, o as u64]))?;
        let m = checks::majorization(&inst, 100, derive_seed(seed, &[21, i.index() as u64, o as u64]))?;
        worst.worst_excess = worst.worst_excess.max(m.worst_excess);
        worst.worst_touch = worst.worst_touch.max(m.worst_touch);
        worst.pairs += m.pairs;
    }
    out.push(Check::new(
        "majorization",
        worst.worst_excess <= 1e-9 && worst.worst_touch <= 1e-12,
        format!(
            "{} pairs over 16 cases, worst excess {:.2e}, worst touch {:.2e}",
            worst.pairs, worst.worst_excess, worst.worst_touch
        ),
    ));

    let cases = [
        (InnerFamily::Simple, OuterFamily::LocalLs),
        (InnerFamily::Doable, OuterFamily::Poisson),
        (InnerFamily::Difficult, OuterFamily::FullLs),
        (InnerFamily::VeryDifficult, OuterFamily::Truncated),
    ];
    let audit = checks::descent_runs(&cases, 30, 2, 100, opts.tau_factor, derive_seed(seed, &[22]))?;
    let first = audit.descent.first().map_or(String::new(), |(l, k)| format!(", first at {l} step {k}"));
    out.push(Check::new(
        "descent",
        audit.descent.is_empty() && audit.ascent.is_empty(),
        format!(
            "{} runs, {} accepted steps, {} violations, {} rising traces{first}",
            audit.runs,
            audit.steps,
            audit.descent.len(),
            audit.ascent.len()
        ),
    ));
    out.push(Check::new(
        "rate",
        audit.rate.is_empty(),
        format!("{} of {} traces break the O(1/N) bound", audit.rate.len(), audit.runs),
    ));

    let ok = checks::bregman_sanity(200, derive_seed(seed, &[23]))?;
    out.push(Check::new("bregman", ok, "D_h ≥ 0 and D_h(z, z) = 0 for quadratic, weighted, Burg"));
    for (outer, name) in [(OuterFamily::LocalLs, "smoothness-a"), (OuterFamily::Poisson, "smoothness-b")] {
        let (l, spot) = checks::smoothness(outer, 30, 200, derive_seed(seed, &[24, outer as u64]))?;
        out.push(Check::new(
            name,
            spot.violations == 0,
            format!("L = {l:.6}, worst D_G/D_h = {:.6} over {} pairs", spot.worst_ratio, spot.trials),
        ));
    }

    let id = checks::identity_reduction(8, 20, derive_seed(seed, &[25]))?;
    out.push(Check::new("reduction-identity", id <= 1e-12, format!("max step difference {id:.2e}")));
    let jac = checks::jacobi_reduction(20, 20, derive_seed(seed, &[26]))?;
    out.push(Check::new("reduction-jacobi", jac <= 1e-12, format!("max step difference {jac:.2e}")));

    let lift = checks::lifting_vs_enumeration(20, (2, 2), 6, TvNorm::Isotropic, derive_seed(seed, &[27]))?;
    out.push(Check::new(
        "lifting-oracle",
        lift.mismatches == 0,
        format!("{} of {} grids off by 1e-6 or more, worst {:.2e}", lift.mismatches, lift.instances, lift.worst),
    ));
    Ok(out)
}
