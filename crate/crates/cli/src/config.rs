//! TOML run configuration. Every section and key is optional; unknown keys
//! are rejected so that typos fail loudly.

use std::path::Path;

use nmm_bench::{CaseSpec, InnerFamily, OuterFamily, Profile, SuiteSpec};
use nmm_core::solver::Method;
use nmm_tof::{Autocorr, ReconConfig, ToFModel};
use serde::Deserialize;
use toml::Spanned;

use crate::{CliError, Result};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub profile: Option<Spanned<String>>,
    pub bench: Option<BenchSection>,
    pub tof: Option<TofSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSection {
    /// Case labels such as `"3a"`; all 16 when absent.
    pub cases: Option<Vec<Spanned<String>>>,
    pub methods: Option<Vec<Spanned<String>>>,
    pub n: Option<usize>,
    pub restarts: Option<usize>,
    pub max_iter: Option<usize>,
    pub samples: Option<usize>,
    pub adam_lrs: Option<Vec<f64>>,
    pub interval: Option<[f64; 2]>,
    pub heatmap: Option<bool>,
    pub traces: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TofSection {
    pub height: Option<usize>,
    pub width: Option<usize>,
    pub rects: Option<usize>,
    pub align: Option<usize>,
    pub scene_depth: Option<[f64; 2]>,
    pub frequencies_mhz: Option<Vec<f64>>,
    pub amplitudes: Option<Vec<f64>>,
    pub autocorr: Option<Spanned<String>>,
    pub plateau: Option<f64>,
    pub sigma: Option<f64>,
    pub downsample: Option<usize>,
    pub labels: Option<usize>,
    pub alpha: Option<f64>,
    pub depth_range: Option<[f64; 2]>,
    pub init_depth: Option<f64>,
    pub max_iter: Option<usize>,
    pub pd_max_iter: Option<usize>,
}

/// Parsed file plus its text, kept for line numbers in diagnostics.
#[derive(Debug, Default)]
pub struct Config {
    pub file: ConfigFile,
    source: String,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub profile: Option<String>,
    pub frequencies_mhz: Option<Vec<f64>>,
    pub sigma: Option<f64>,
    pub downsample: Option<usize>,
    pub labels: Option<usize>,
    pub alpha: Option<f64>,
}

/// Everything `nmm bench` needs.
#[derive(Debug, Clone)]
pub struct BenchSetup {
    pub suite: SuiteSpec,
    pub heatmap: bool,
    pub traces: bool,
}

/// Everything `nmm tof` needs.
#[derive(Debug, Clone)]
pub struct TofSetup {
    pub height: usize,
    pub width: usize,
    pub rects: usize,
    pub align: usize,
    pub scene_depth: (f64, f64),
    pub model: ToFModel,
    pub sigma: f64,
    pub downsample: usize,
    pub recon: ReconConfig,
    pub seed: u64,
}

fn schema(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Schema(format!("field `{field}`: {msg}"))
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| CliError::Schema(e.to_string()))?;
        Ok(Self {
            file,
            source: text.to_owned(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Schema(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Schema(m) => CliError::Schema(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    fn line_of<T>(&self, s: &Spanned<T>) -> usize {
        let at = s.span().start.min(self.source.len());
        self.source[..at].matches('\n').count() + 1
    }

    fn spanned_err<T>(&self, field: &str, s: &Spanned<T>, msg: impl std::fmt::Display) -> CliError {
        if self.source.is_empty() {
            schema(field, msg)
        } else {
            schema(field, format!("line {}: {msg}", self.line_of(s)))
        }
    }

    pub fn seed(&self, ov: &Overrides) -> u64 {
        ov.seed.or(self.file.seed).unwrap_or(DEFAULT_SEED)
    }

    pub fn profile(&self, ov: &Overrides) -> Result<Profile> {
        if let Some(p) = &ov.profile {
            return p
                .parse()
                .map_err(|_| CliError::Schema(format!("flag `--profile`: unknown profile '{p}' (desk or paper)")));
        }
        match &self.file.profile {
            None => Ok(Profile::Desk),
            Some(p) => p
                .get_ref()
                .parse()
                .map_err(|_| self.spanned_err("profile", p, format!("unknown profile '{}' (desk or paper)", p.get_ref()))),
        }
    }

    pub fn bench(&self, ov: &Overrides) -> Result<BenchSetup> {
        let empty = BenchSection::default();
        let b = self.file.bench.as_ref().unwrap_or(&empty);
        let mut suite = SuiteSpec::full(self.profile(ov)?, self.seed(ov));
        if let Some(cases) = &b.cases {
            suite.cases = cases
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    CaseSpec::parse_label(c.get_ref()).map_err(|e| self.spanned_err(&format!("bench.cases[{i}]"), c, e))
                })
                .collect::<Result<Vec<(InnerFamily, OuterFamily)>>>()?;
        }
        if let Some(methods) = &b.methods {
            suite.methods = methods
                .iter()
                .enumerate()
                .map(|(i, m)| {
                    m.get_ref().parse::<Method>().map_err(|_| {
                        let known: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
                        self.spanned_err(
                            &format!("bench.methods[{i}]"),
                            m,
                            format!("unknown method '{}' (expected one of {})", m.get_ref(), known.join(", ")),
                        )
                    })
                })
                .collect::<Result<_>>()?;
        }
        if let Some(n) = b.n {
            suite.n = n;
        }
        if let Some(r) = b.restarts {
            suite.restarts = r;
        }
        if let Some(m) = b.max_iter {
            suite.max_iter = m;
        }
        if let Some(s) = b.samples {
            suite.samples = s;
        }
        if let Some(lrs) = &b.adam_lrs {
            suite.adam_lrs = lrs.clone();
        }
        suite.interval = b.interval.map(|[lo, hi]| (lo, hi));

        if suite.cases.is_empty() {
            return Err(schema("bench.cases", "must not be empty"));
        }
        if suite.methods.is_empty() {
            return Err(schema("bench.methods", "must not be empty"));
        }
        if suite.n < 2 {
            return Err(schema("bench.n", "must be at least 2"));
        }
        if suite.restarts % 2 == 0 {
            return Err(schema("bench.restarts", "must be odd so that the median is an actual run"));
        }
        if suite.max_iter == 0 {
            return Err(schema("bench.max_iter", "must be positive"));
        }
        if suite.samples == 0 {
            return Err(schema("bench.samples", "must be positive"));
        }
        if suite.methods.contains(&Method::Adam) && suite.adam_lrs.iter().all(|&lr| !(lr > 0.0)) {
            return Err(schema("bench.adam_lrs", "needs at least one positive rate"));
        }
        if let Some((lo, hi)) = suite.interval {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(schema("bench.interval", "needs finite lo < hi"));
            }
        }
        Ok(BenchSetup {
            suite,
            heatmap: b.heatmap.unwrap_or(true),
            traces: b.traces.unwrap_or(true),
        })
    }

    pub fn tof(&self, ov: &Overrides) -> Result<TofSetup> {
        let empty = TofSection::default();
        let t = self.file.tof.as_ref().unwrap_or(&empty);
        let freqs = ov
            .frequencies_mhz
            .clone()
            .or_else(|| t.frequencies_mhz.clone())
            .unwrap_or_else(|| vec![90.0, 120.0]);
        if freqs.is_empty() || freqs.iter().any(|&f| !(f > 0.0) || !f.is_finite()) {
            return Err(schema("tof.frequencies_mhz", "needs one or more positive frequencies"));
        }
        let amplitudes = t.amplitudes.clone().unwrap_or_else(|| vec![1.0; freqs.len()]);
        if amplitudes.len() != freqs.len() {
            return Err(schema(
                "tof.amplitudes",
                format!("has {} entries for {} frequencies", amplitudes.len(), freqs.len()),
            ));
        }
        let plateau = t.plateau.unwrap_or(0.5);
        let autocorr = match &t.autocorr {
            None => Autocorr::Trapezoid { p: plateau },
            Some(s) => match s.get_ref().as_str() {
                "trapezoid" => Autocorr::Trapezoid { p: plateau },
                "cosine" => Autocorr::Cosine,
                other => {
                    return Err(self.spanned_err(
                        "tof.autocorr",
                        s,
                        format!("unknown autocorrelation '{other}' (trapezoid or cosine)"),
                    ))
                }
            },
        };
        autocorr.validate().map_err(|m| schema("tof.plateau", m))?;
        let model = ToFModel {
            frequencies: freqs.iter().map(|f| f * 1e6).collect(),
            amplitudes,
            n_steps: 4,
            autocorr,
        };
        model.validate().map_err(|e| schema("tof", e))?;

        let downsample = ov.downsample.or(t.downsample).unwrap_or(2);
        let height = t.height.unwrap_or(48);
        let width = t.width.unwrap_or(48);
        if downsample == 0 {
            return Err(schema("tof.downsample", "must be positive"));
        }
        if height == 0 || height % downsample != 0 {
            return Err(schema("tof.height", format!("must be a positive multiple of the downsample factor {downsample}")));
        }
        if width == 0 || width % downsample != 0 {
            return Err(schema("tof.width", format!("must be a positive multiple of the downsample factor {downsample}")));
        }
        let sigma = ov.sigma.or(t.sigma).unwrap_or(0.05);
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(schema("tof.sigma", "must be finite and nonnegative"));
        }
        let pair = |field: &str, v: Option<[f64; 2]>, default: (f64, f64)| -> Result<(f64, f64)> {
            let (lo, hi) = v.map_or(default, |[a, b]| (a, b));
            if !(lo >= 0.0 && lo < hi && hi.is_finite()) {
                return Err(schema(field, "needs 0 ≤ lo < hi"));
            }
            Ok((lo, hi))
        };
        let scene_depth = pair("tof.scene_depth", t.scene_depth, (1.0, 5.4))?;
        let defaults = ReconConfig::default();
        let recon = ReconConfig {
            alpha: ov.alpha.or(t.alpha).unwrap_or(defaults.alpha),
            labels: ov.labels.or(t.labels).unwrap_or(defaults.labels),
            depth_range: pair("tof.depth_range", t.depth_range, defaults.depth_range)?,
            init_depth: t.init_depth.unwrap_or(defaults.init_depth),
            max_iter: t.max_iter.unwrap_or(defaults.max_iter),
            pd_max_iter: t.pd_max_iter.unwrap_or(defaults.pd_max_iter),
        };
        if !(recon.alpha >= 0.0) || !recon.alpha.is_finite() {
            return Err(schema("tof.alpha", "must be finite and nonnegative"));
        }
        if recon.labels < 2 {
            return Err(schema("tof.labels", "needs at least 2 labels"));
        }
        let (lo, hi) = recon.depth_range;
        if !(recon.init_depth >= lo && recon.init_depth <= hi) {
            return Err(schema("tof.init_depth", format!("must lie in the depth range [{lo}, {hi}]")));
        }
        if recon.max_iter == 0 || recon.pd_max_iter == 0 {
            return Err(schema("tof.max_iter", "iteration budgets must be positive"));
        }
        Ok(TofSetup {
            height,
            width,
            rects: t.rects.unwrap_or(5),
            align: t.align.unwrap_or(downsample),
            scene_depth,
            model,
            sigma,
            downsample,
            recon,
            seed: self.seed(ov),
        })
    }
}
