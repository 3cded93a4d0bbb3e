//! Restart protocol over a grid of cases and methods.

use std::fmt::Write as _;
use std::io::Write;
use std::time::Instant;

use nmm_core::solver::{self, fmt17, Method, Termination};
use nmm_core::SolverRun;
use rayon::prelude::*;

use crate::families::{InnerFamily, OuterFamily};
use crate::instance::{make_case, median, normalized_gap, sampled_median_energy, CaseInstance, CaseSpec};
use crate::seed::derive_seed;
use crate::{BenchError, Result};

/// Scale presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// n = 30, 5 restarts
    Desk,
    /// n = 150, 25 restarts
    Paper,
}

impl Profile {
    pub fn n(self) -> usize {
        match self {
            Profile::Desk => 30,
            Profile::Paper => 150,
        }
    }

    pub fn restarts(self) -> usize {
        match self {
            Profile::Desk => 5,
            Profile::Paper => 25,
        }
    }
}

impl std::str::FromStr for Profile {
    type Err = BenchError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            _ => Err(BenchError::Generation(format!("unknown profile '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteSpec {
    pub cases: Vec<(InnerFamily, OuterFamily)>,
    pub methods: Vec<Method>,
    pub n: usize,
    pub restarts: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Sample count for the median energy scale.
    pub samples: usize,
    /// Adam learning rates tried in the pilot run of each case.
    pub adam_lrs: Vec<f64>,
    /// Override of the family interval.
    pub interval: Option<(f64, f64)>,
}

impl SuiteSpec {
    /// All 16 cases and all methods at the given profile.
    pub fn full(profile: Profile, seed: u64) -> Self {
        let cases = InnerFamily::ALL
            .iter()
            .flat_map(|&i| OuterFamily::ALL.iter().map(move |&o| (i, o)))
            .collect();
        Self {
            cases,
            methods: Method::ALL.to_vec(),
            n: profile.n(),
            restarts: profile.restarts(),
            seed,
            max_iter: 500,
            samples: 100_000,
            adam_lrs: vec![0.1, 0.03, 0.01, 0.003],
            interval: None,
        }
    }

    pub fn case_spec(&self, inner: InnerFamily, outer: OuterFamily) -> CaseSpec {
        let mut spec = CaseSpec::new(inner, outer, self.n, self.instance_seed(inner, outer));
        if let Some(iv) = self.interval {
            spec.interval = iv;
        }
        spec
    }

    fn instance_seed(&self, inner: InnerFamily, outer: OuterFamily) -> u64 {
        derive_seed(self.seed, &[1, inner.index() as u64, outer as u64])
    }

    /// Start seed for a restart. Independent of the method, so every method
    /// starts from the same points.
    pub fn restart_seed(&self, inner: InnerFamily, outer: OuterFamily, restart: usize) -> u64 {
        derive_seed(self.seed, &[2, inner.index() as u64, outer as u64, restart as u64])
    }

    fn sample_seed(&self, inner: InnerFamily, outer: OuterFamily) -> u64 {
        derive_seed(self.seed, &[3, inner.index() as u64, outer as u64])
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(BenchError::Generation(m.into()));
        if self.restarts % 2 == 0 {
            return bad("restart count must be odd so the median is a run");
        }
        if self.cases.is_empty() || self.methods.is_empty() {
            return bad("nothing to run");
        }
        if self.max_iter == 0 || self.samples == 0 {
            return bad("max_iter and samples must be positive");
        }
        if self.methods.contains(&Method::Adam) && self.adam_lrs.is_empty() {
            return bad("adam needs at least one learning rate");
        }
        Ok(())
    }
}

/// One restart of one method on one case.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub case: String,
    pub method: Method,
    pub restart: usize,
    pub gap: f64,
    pub e_final: f64,
    pub iters: usize,
    pub wall_ms: f64,
    pub termination: Termination,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub case: String,
    pub method: Method,
    pub median_gap: f64,
    pub median_e_final: f64,
    pub restarts: usize,
    pub e_star: f64,
    pub e_tilde: f64,
    pub note: String,
}

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub runs: Vec<RunRow>,
    /// Full solver output, aligned with `runs`.
    pub traces: Vec<SolverRun>,
    pub summary: Vec<SummaryRow>,
}

struct Case {
    inst: CaseInstance,
    e_tilde: f64,
}

struct Cell {
    runs: Vec<RunRow>,
    traces: Vec<SolverRun>,
    summary: SummaryRow,
}

fn run_cell(spec: &SuiteSpec, case: &Case, method: Method) -> Result<Cell> {
    let inst = &case.inst;
    let label = inst.spec.label();
    let (inner, outer) = (inst.spec.inner, inst.spec.outer);
    let geom = inst.geometry_for(method);
    let mut cfg = inst.config_for(method)?;
    cfg.max_iter = spec.max_iter;
    let mut note = String::new();
    if method == Method::Adam {
        // Pilot on the first start; the lowest final energy picks the rate.
        let u0 = inst.random_start(spec.restart_seed(inner, outer, 0));
        let mut best = (f64::INFINITY, spec.adam_lrs[0]);
        for &lr in &spec.adam_lrs {
            cfg.adam.lr = lr;
            let e = solver::run(&inst.problem, &geom, &cfg, &u0)?.final_energy();
            if e < best.0 {
                best = (e, lr);
            }
        }
        cfg.adam.lr = best.1;
        let _ = write!(note, "adam lr={}", best.1);
    }

    let mut runs = Vec::with_capacity(spec.restarts);
    let mut traces = Vec::with_capacity(spec.restarts);
    for restart in 0..spec.restarts {
        let u0 = inst.random_start(spec.restart_seed(inner, outer, restart));
        let start = Instant::now();
        let run = solver::run(&inst.problem, &geom, &cfg, &u0)?;
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        let e_final = run.final_energy();
        let integrity = || BenchError::Integrity {
            case: label.clone(),
            method: method.to_string(),
            restart,
            e_final,
            e_star: inst.e_star,
        };
        if e_final < inst.e_star - 1e-6 * (1.0 + inst.e_star.abs()) {
            return Err(integrity());
        }
        let gap = match normalized_gap(e_final, inst.e_star, case.e_tilde) {
            Err(BenchError::Integrity { .. }) => return Err(integrity()),
            other => other?,
        };
        runs.push(RunRow {
            case: label.clone(),
            method,
            restart,
            gap,
            e_final,
            iters: run.iterations(),
            wall_ms,
            termination: run.termination,
        });
        traces.push(run);
    }
    // Odd restart count: the median is an actual run.
    let mut gaps: Vec<f64> = runs.iter().map(|r| r.gap).collect();
    let mut energies: Vec<f64> = runs.iter().map(|r| r.e_final).collect();
    let summary = SummaryRow {
        case: label,
        method,
        median_gap: median(&mut gaps),
        median_e_final: median(&mut energies),
        restarts: spec.restarts,
        e_star: inst.e_star,
        e_tilde: case.e_tilde,
        note,
    };
    Ok(Cell {
        runs,
        traces,
        summary,
    })
}

/// Runs every method on every case. Cells run in parallel; results come
/// back in (case, method) order whatever the thread count.
pub fn run_suite(spec: &SuiteSpec) -> Result<SuiteResult> {
    spec.validate()?;
    let cases: Vec<Case> = spec
        .cases
        .par_iter()
        .map(|&(i, o)| {
            let inst = make_case(&spec.case_spec(i, o))?;
            let e_tilde = sampled_median_energy(&inst.problem, inst.e_star, spec.samples, spec.sample_seed(i, o))?;
            if !(e_tilde > 0.0) {
                return Err(BenchError::DegenerateScale);
            }
            Ok(Case { inst, e_tilde })
        })
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, Method)> = (0..cases.len())
        .flat_map(|c| spec.methods.iter().map(move |&m| (c, m)))
        .collect();
    let cells: Vec<Cell> = jobs
        .par_iter()
        .map(|&(c, m)| run_cell(spec, &cases[c], m))
        .collect::<Result<_>>()?;
    let mut out = SuiteResult {
        runs: Vec::new(),
        traces: Vec::new(),
        summary: Vec::new(),
    };
    for cell in cells {
        out.runs.extend(cell.runs);
        out.traces.extend(cell.traces);
        out.summary.push(cell.summary);
    }
    Ok(out)
}

/// `case,method,restart,gap,E_final,iters,wall_ms`
pub fn write_runs_csv<W: Write>(runs: &[RunRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["case", "method", "restart", "gap", "E_final", "iters", "wall_ms"])?;
    for r in runs {
        w.write_record([
            r.case.clone(),
            r.method.to_string(),
            r.restart.to_string(),
            fmt17(r.gap),
            fmt17(r.e_final),
            r.iters.to_string(),
            fmt17(r.wall_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Medians per cell. Holds no timings, so it is reproducible byte for byte.
pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "case",
        "method",
        "median_gap",
        "median_E_final",
        "restarts",
        "E_star",
        "E_tilde",
        "note",
    ])?;
    for r in rows {
        w.write_record([
            r.case.clone(),
            r.method.to_string(),
            fmt17(r.median_gap),
            fmt17(r.median_e_final),
            r.restarts.to_string(),
            fmt17(r.e_star),
            fmt17(r.e_tilde),
            r.note.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One 4×4 panel per method (rows = nonlinearity family, columns = outer
/// family), gaps clamped to [0, 1] on a white-to-red scale.
pub fn heatmap_svg(rows: &[SummaryRow]) -> String {
    const CELL: usize = 48;
    const PAD: usize = 30;
    let mut methods: Vec<Method> = Vec::new();
    for r in rows {
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
    }
    let panel = 4 * CELL + PAD;
    let width = PAD + methods.len() * panel;
    let height = 4 * CELL + 2 * PAD;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="10">"#
    );
    for (p, m) in methods.iter().enumerate() {
        let x0 = PAD + p * panel;
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, x0, PAD - 16, m);
        for (j, outer) in OuterFamily::ALL.iter().enumerate() {
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle">{outer}</text>"#,
                x0 + j * CELL + CELL / 2,
                PAD - 4
            );
        }
        for (i, inner) in InnerFamily::ALL.iter().enumerate() {
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="end">{inner}</text>"#,
                x0 - 4,
                PAD + i * CELL + CELL / 2 + 4
            );
        }
        for (i, inner) in InnerFamily::ALL.iter().enumerate() {
            for (j, outer) in OuterFamily::ALL.iter().enumerate() {
                let label = format!("{inner}{outer}");
                let (x, y) = (x0 + j * CELL, PAD + i * CELL);
                let Some(r) = rows.iter().find(|r| r.method == *m && r.case == label) else {
                    let _ = writeln!(
                        s,
                        r##"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="#ddd" stroke="#fff"/>"##
                    );
                    continue;
                };
                let g = r.median_gap.clamp(0.0, 1.0);
                let gb = (255.0 * (1.0 - g)).round() as u8;
                let _ = writeln!(
                    s,
                    r##"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="rgb(255,{gb},{gb})" stroke="#fff"/>"##
                );
                let _ = writeln!(
                    s,
                    r#"<text x="{}" y="{}" text-anchor="middle">{:.3}</text>"#,
                    x + CELL / 2,
                    y + CELL / 2 + 4,
                    r.median_gap
                );
            }
        }
    }
    s.push_str("</svg>\n");
    s
}
