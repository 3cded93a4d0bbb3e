//! Acceptance criteria, one PASS/FAIL line each. Runs as a plain binary so
//! the lines show up in `cargo test` output; exits nonzero on any failure.

use std::time::Instant;

use nmm_bench::{
    derive_seed, run_suite, write_summary_csv, InnerFamily, OuterFamily, Profile, SuiteResult, SuiteSpec,
};
use nmm_cli::checks::{self, TraceAudit};
use nmm_cli::{commands, Config, Overrides};
use nmm_core::problem::TvNorm;
use nmm_core::solver::Method;
use nmm_tof::{closed_form_depth, forward, rmse, Autocorr, ToFModel, ToFScene};

const SEED: u64 = 42;

type Outcome = Result<(bool, String), String>;

struct Report {
    failed: usize,
}

impl Report {
    fn record(&mut self, id: usize, name: &str, start: Instant, outcome: Outcome) {
        let secs = start.elapsed().as_secs_f64();
        let (ok, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
        if !ok {
            self.failed += 1;
        }
        println!("{} {id:>2} {name}: {detail} [{secs:.1} s]", if ok { "PASS" } else { "FAIL" });
    }
}

fn in_pool<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool")
        .install(f)
}

fn summary_bytes(r: &SuiteResult) -> Vec<u8> {
    let mut buf = Vec::new();
    write_summary_csv(&r.summary, &mut buf).expect("summary csv");
    buf
}

fn median_gap(r: &SuiteResult, case: &str, m: Method) -> f64 {
    r.summary
        .iter()
        .find(|s| s.case == case && s.method == m)
        .map_or(f64::NAN, |s| s.median_gap)
}

fn mm_audit(r: &SuiteResult) -> TraceAudit {
    let mut audit = TraceAudit::default();
    for (row, run) in r.runs.iter().zip(&r.traces) {
        if row.method.is_mm() {
            audit.add(&format!("{} {} r{}", row.case, row.method, row.restart), run);
        }
    }
    audit
}

fn majorization() -> Outcome {
    let mut excess = f64::NEG_INFINITY;
    let mut touch = 0.0f64;
    for (i, o) in checks::all_cases() {
        let key = [i.index() as u64, o as u64];
        let inst = checks::case(i, o, 30, derive_seed(SEED, &[30, key[0], key[1]])).map_err(|e| e.to_string())?;
        let m = checks::majorization(&inst, 1000, derive_seed(SEED, &[31, key[0], key[1]])).map_err(|e| e.to_string())?;
        excess = excess.max(m.worst_excess);
        touch = touch.max(m.worst_touch);
    }
    Ok((
        excess <= 1e-9 && touch <= 1e-12,
        format!("16 cases × 1000 pairs at n = 30, worst relative excess {excess:.2e}, worst relative touch {touch:.2e}"),
    ))
}

fn descent(audit: &TraceAudit) -> Outcome {
    let first = audit.descent.first().map_or(String::new(), |(l, k)| format!(", first {l} step {k}"));
    Ok((
        audit.descent.is_empty(),
        format!(
            "full desk suite, {} MM traces, {} accepted steps, {} violations{first}",
            audit.runs,
            audit.steps,
            audit.descent.len()
        ),
    ))
}

fn rate(audit: &TraceAudit) -> Outcome {
    Ok((
        audit.rate.is_empty(),
        format!("{} of {} MM traces break min D_h ≤ (E¹ − min E)/(αN)", audit.rate.len(), audit.runs),
    ))
}

fn reductions() -> Outcome {
    let id = checks::identity_reduction(10, 50, derive_seed(SEED, &[40])).map_err(|e| e.to_string())?;
    let jac = checks::jacobi_reduction(20, 50, derive_seed(SEED, &[41])).map_err(|e| e.to_string())?;
    Ok((
        id <= 1e-12 && jac <= 1e-12,
        format!("identity ρ: proposed/fbs/outer-linear differ by {id:.2e} over 50 steps; 20×20 Jacobi differs by {jac:.2e}"),
    ))
}

fn smoothness() -> Outcome {
    let (la, a) = checks::smoothness(OuterFamily::LocalLs, 30, 1000, derive_seed(SEED, &[50])).map_err(|e| e.to_string())?;
    let inst_b = checks::case(InnerFamily::Simple, OuterFamily::Poisson, 30, derive_seed(SEED, &[50]))
        .map_err(|e| e.to_string())?;
    let f1: f64 = inst_b.f.iter().map(|v| v.abs()).sum();
    let (lb, b) = checks::smoothness(OuterFamily::Poisson, 30, 1000, derive_seed(SEED, &[50])).map_err(|e| e.to_string())?;
    let ok = la == 1.0
        && a.worst_ratio <= 1.0 + 1e-8
        && (lb - f1).abs() <= 1e-12 * f1
        && b.worst_ratio <= f1 * (1.0 + 1e-8);
    Ok((
        ok,
        format!(
            "(a) L = {la}, worst D_G/D_h = {:.6}; (b) L = {lb:.4} = ‖f‖₁ = {f1:.4}, worst D_G/D_h = {:.4}; 1000 pairs each",
            a.worst_ratio, b.worst_ratio
        ),
    ))
}

fn superiority(threads: usize) -> Outcome {
    let baselines = [Method::Gd, Method::Fbs, Method::ProxLinear, Method::OuterLinear];
    let mut spec = SuiteSpec::full(Profile::Paper, SEED);
    spec.cases = vec![(InnerFamily::Difficult, OuterFamily::LocalLs)];
    spec.methods = std::iter::once(Method::Proposed).chain(baselines).collect();
    let hard = in_pool(threads, || run_suite(&spec)).map_err(|e| e.to_string())?;
    spec.cases = vec![(InnerFamily::Simple, OuterFamily::Truncated)];
    spec.methods = vec![Method::Proposed, Method::Fbs, Method::OuterLinear];
    let easy = in_pool(threads, || run_suite(&spec)).map_err(|e| e.to_string())?;

    let p = median_gap(&hard, "3a", Method::Proposed);
    let base: Vec<(Method, f64)> = baselines.iter().map(|&m| (m, median_gap(&hard, "3a", m))).collect();
    let ok_3a = p < 0.1 && base.iter().all(|&(_, g)| g > p && g > 0.1);
    let d: Vec<(Method, f64)> = spec.methods.iter().map(|&m| (m, median_gap(&easy, "1d", m))).collect();
    let ok_1d = d.iter().all(|&(_, g)| g < 1e-2);
    let fmt = |v: &[(Method, f64)]| v.iter().map(|(m, g)| format!("{m} {g:.4}")).collect::<Vec<_>>().join(", ");
    Ok((
        ok_3a && ok_1d,
        format!("3a (n = 150, 25 restarts): proposed {p:.4}, {}; 1d: {}", fmt(&base), fmt(&d)),
    ))
}

fn near_global(threads: usize) -> Outcome {
    let mut spec = SuiteSpec::full(Profile::Paper, SEED);
    spec.cases = vec![(InnerFamily::Doable, OuterFamily::LocalLs), (InnerFamily::Doable, OuterFamily::FullLs)];
    spec.methods = vec![Method::Proposed];
    let r = in_pool(threads, || run_suite(&spec)).map_err(|e| e.to_string())?;
    let (a, c) = (median_gap(&r, "2a", Method::Proposed), median_gap(&r, "2c", Method::Proposed));
    Ok((a < 0.05 && c < 0.05, format!("proposed median gap 2a {a:.4}, 2c {c:.4} (n = 150, 25 restarts)")))
}

fn lifting() -> Outcome {
    let e = checks::lifting_vs_enumeration(100, (2, 2), 6, TvNorm::Isotropic, derive_seed(SEED, &[80]))
        .map_err(|e| e.to_string())?;
    let c = checks::lifting_vs_convex(10, 24, derive_seed(SEED, &[81])).map_err(|e| e.to_string())?;
    Ok((
        e.mismatches == 0 && c < 1e-4,
        format!(
            "2×2, ℓ = 6: {}/{} grids off by ≥ 1e-6 (worst {:.2e}); 8×8 convex unaries: worst relative gap {c:.2e}",
            e.mismatches, e.instances, e.worst
        ),
    ))
}

fn tof() -> Outcome {
    let err = |e: nmm_tof::ToFError| e.to_string();
    // (i) noiseless single-frequency round trip
    let model = ToFModel {
        frequencies: vec![90e6],
        amplitudes: vec![1.0],
        n_steps: 4,
        autocorr: Autocorr::Cosine,
    };
    let p = model.unambiguous_range(0);
    let scene = ToFScene::piecewise(48, 48, 8, (0.0, 0.999 * p), 1, model.clone(), derive_seed(SEED, &[90]));
    let meas = forward(&scene, 1, 0.0, 0).map_err(err)?;
    let cf = closed_form_depth(&meas, &model, 0).map_err(err)?;
    let round_trip = rmse(&cf.depth, &scene.depth);

    // (ii), (iii) the default two-frequency demo through the CLI path
    let setup = Config::default()
        .tof(&Overrides {
            seed: Some(SEED),
            ..Overrides::default()
        })
        .map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let r = commands::tof(&setup, dir.path()).map_err(|e| e.to_string())?;
    let best_cf = r.closed_form.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let monotone = r.energies.windows(2).all(|w| w[1] <= w[0]);
    let ok = round_trip < 1e-9 && r.rmse < best_cf && r.unwrap_rate >= 0.95 && monotone;
    Ok((
        ok,
        format!(
            "round trip RMSE {round_trip:.2e} m; 48×48, 90/120 MHz, factor 2, σ = {}: RMSE {:.4} m vs best closed form {best_cf:.4} m, \
             period index right on {:.1}%, {} energies non-increasing: {monotone}",
            setup.sigma,
            r.rmse,
            100.0 * r.unwrap_rate,
            r.energies.len()
        ),
    ))
}

fn main() {
    let mut report = Report { failed: 0 };
    let threads = 4;
    println!("acceptance criteria, master seed {SEED}");

    let t = Instant::now();
    report.record(1, "majorization", t, majorization());

    let t = Instant::now();
    let desk = in_pool(threads, || run_suite(&SuiteSpec::full(Profile::Desk, SEED)));
    let desk_secs = t.elapsed();
    let audit = desk.as_ref().map(mm_audit).map_err(|e| e.to_string());
    report.record(2, "descent inequality", t, audit.clone().and_then(|a| descent(&a)));
    let t = Instant::now();
    report.record(3, "O(1/N) rate", t, audit.and_then(|a| rate(&a)));

    let t = Instant::now();
    report.record(4, "reductions", t, reductions());
    let t = Instant::now();
    report.record(5, "relative smoothness", t, smoothness());
    let t = Instant::now();
    report.record(6, "benchmark superiority", t, superiority(threads));
    let t = Instant::now();
    report.record(7, "near-global rows", t, near_global(threads));
    let t = Instant::now();
    report.record(8, "lifting oracles", t, lifting());
    let t = Instant::now();
    report.record(9, "time-of-flight pipeline", t, tof());

    let t = Instant::now();
    let det = desk.map_err(|e| e.to_string()).and_then(|a| {
        let b = in_pool(1, || run_suite(&SuiteSpec::full(Profile::Desk, SEED))).map_err(|e| e.to_string())?;
        let same = summary_bytes(&a) == summary_bytes(&b);
        Ok((
            same,
            format!(
                "desk suite summary with {threads} threads vs 1 thread: {} ({} rows, first run {:.0} s)",
                if same { "byte-identical" } else { "differs" },
                a.summary.len(),
                desk_secs.as_secs_f64()
            ),
        ))
    });
    report.record(10, "determinism", t, det);

    if report.failed > 0 {
        println!("{} criteria failed", report.failed);
        std::process::exit(1);
    }
    println!("all criteria passed");
}
