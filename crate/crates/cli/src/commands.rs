//! `nmm bench` and `nmm tof`.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use nmm_bench::{derive_seed, heatmap_svg, run_suite, write_runs_csv, write_summary_csv, SuiteResult};
use nmm_core::solver::{descent_violations, fmt17, write_trace_csv};
use nmm_tof::{
    closed_form_depth, forward, reconstruct, rmse, tof_energy, unwrap_rate, upsample, Gray16, ToFMeasurements,
    ToFScene,
};

use crate::config::{BenchSetup, TofSetup};
use crate::{CliError, Result};

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Runs the suite and writes `runs.csv`, `summary.csv`, optionally
/// `heatmap.svg` and `traces/<case>_<method>_r<k>.csv`. Outputs are
/// written before a descent violation is reported.
pub fn bench(setup: &BenchSetup, out_dir: &Path) -> Result<SuiteResult> {
    fs::create_dir_all(out_dir)?;
    let result = run_suite(&setup.suite)?;
    write_runs_csv(&result.runs, create(&out_dir.join("runs.csv"))?)?;
    write_summary_csv(&result.summary, create(&out_dir.join("summary.csv"))?)?;
    if setup.heatmap {
        fs::write(out_dir.join("heatmap.svg"), heatmap_svg(&result.summary))?;
    }
    if setup.traces {
        let dir = out_dir.join("traces");
        fs::create_dir_all(&dir)?;
        for (row, run) in result.runs.iter().zip(&result.traces) {
            let name = format!("{}_{}_r{:02}.csv", row.case, row.method, row.restart);
            write_trace_csv(run, create(&dir.join(name))?)?;
        }
    }
    let broken: Vec<String> = result
        .runs
        .iter()
        .zip(&result.traces)
        .filter(|(row, run)| row.method.is_mm() && !descent_violations(run).is_empty())
        .map(|(row, _)| format!("{} {} restart {}", row.case, row.method, row.restart))
        .collect();
    if !broken.is_empty() {
        return Err(CliError::Integrity(format!("descent inequality violated in {}", broken.join("; "))));
    }
    Ok(result)
}

/// Headline numbers of a ToF run.
#[derive(Debug, Clone)]
pub struct TofReport {
    /// `(frequency in Hz, RMSE, unwrap rate)` per closed-form estimate.
    pub closed_form: Vec<(f64, f64, f64)>,
    pub rmse: f64,
    pub unwrap_rate: f64,
    pub energy_truth: f64,
    pub energies: Vec<f64>,
    pub guard_stopped: bool,
}

/// Maps depths in metres to 16-bit gray values.
pub const DEPTH_PGM_RANGE: (f64, f64) = (0.0, 10.0);

fn measurement_range(meas: &ToFMeasurements, setup: &TofSetup) -> (f64, f64) {
    let a = setup.model.amplitudes.iter().fold(0.0f64, |m, &a| m.max(a.abs()));
    let m = 2.0 * a + 6.0 * meas.sigma;
    (-m, m)
}

/// Simulates a scene, writes `truth.pgm`, `measurement_c<k>.pgm`,
/// `closed_form_<f>mhz.pgm`, `reconstruction.pgm` and `metrics.csv`.
pub fn tof(setup: &TofSetup, out_dir: &Path) -> Result<TofReport> {
    fs::create_dir_all(out_dir)?;
    let scene = ToFScene::piecewise(
        setup.height,
        setup.width,
        setup.rects,
        setup.scene_depth,
        setup.align,
        setup.model.clone(),
        derive_seed(setup.seed, &[10]),
    );
    let meas = forward(&scene, setup.downsample, setup.sigma, derive_seed(setup.seed, &[11]))?;
    let (h, w) = (setup.height, setup.width);
    let (lh, lw) = meas.low_res();
    let (dlo, dhi) = DEPTH_PGM_RANGE;

    Gray16::from_values(&scene.depth, w, h, dlo, dhi).save(out_dir.join("truth.pgm"))?;
    let (mlo, mhi) = measurement_range(&meas, setup);
    for c in 0..setup.model.channel_count() {
        Gray16::from_values(meas.channel(c), lw, lh, mlo, mhi).save(out_dir.join(format!("measurement_c{c}.pgm")))?;
    }

    let mut closed_form = Vec::new();
    for (i, &f) in setup.model.frequencies.iter().enumerate() {
        let cf = closed_form_depth(&meas, &setup.model, i)?;
        Gray16::from_values(&cf.depth, lw, lh, dlo, dhi).save(out_dir.join(format!("closed_form_{}mhz.pgm", f / 1e6)))?;
        let full = upsample(&cf.depth, lh, lw, setup.downsample);
        closed_form.push((f, rmse(&full, &scene.depth), unwrap_rate(&full, &scene.depth, &setup.model)));
    }

    let rec = reconstruct(&meas, &setup.model, &setup.recon)?;
    Gray16::from_values(&rec.depth, w, h, dlo, dhi).save(out_dir.join("reconstruction.pgm"))?;
    let report = TofReport {
        closed_form,
        rmse: rmse(&rec.depth, &scene.depth),
        unwrap_rate: unwrap_rate(&rec.depth, &scene.depth, &setup.model),
        energy_truth: tof_energy(&scene.depth, &meas, &setup.model, setup.recon.alpha)?,
        energies: rec.run.trace.iter().filter(|r| r.accepted).map(|r| r.energy).collect(),
        guard_stopped: rec.guard_stopped,
    };
    write_metrics(&report, create(&out_dir.join("metrics.csv"))?)?;
    Ok(report)
}

/// Long format `metric,key,value`: RMSE and unwrap rate per estimate, the
/// energy at the ground truth and the accepted energy trace.
pub fn write_metrics<W: std::io::Write>(r: &TofReport, out: W) -> Result<()> {
    let io = |e: csv::Error| CliError::Io(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["metric", "key", "value"]).map_err(io)?;
    let mut row = |m: &str, k: String, v: f64| w.write_record([m, &k, &fmt17(v)]).map_err(io);
    for &(f, e, u) in &r.closed_form {
        row("rmse", format!("closed_form_{}mhz", f / 1e6), e)?;
        row("unwrap_rate", format!("closed_form_{}mhz", f / 1e6), u)?;
    }
    row("rmse", "reconstruction".into(), r.rmse)?;
    row("unwrap_rate", "reconstruction".into(), r.unwrap_rate)?;
    row("energy", "truth".into(), r.energy_truth)?;
    row("guard_stopped", "reconstruction".into(), if r.guard_stopped { 1.0 } else { 0.0 })?;
    for (k, &e) in r.energies.iter().enumerate() {
        row("energy_trace", k.to_string(), e)?;
    }
    w.flush()?;
    Ok(())
}
