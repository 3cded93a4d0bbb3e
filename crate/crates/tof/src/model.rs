//! Forward model: phase-stepped correlation samples, their differences and
//! block downsampling.

use std::f64::consts::PI;

use nmm_core::problem::{BoxDomain, InnerMap, SeparableMap, TotalVariation, TvNorm};
use nmm_core::{Operator, Problem, Regularizer, ScalarFn, SmoothOuter};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autocorr::Autocorr;
use crate::{Result, ToFError};

/// Propagation speed in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Sensor parameters shared by simulation and reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct ToFModel {
    /// Modulation frequencies in Hz.
    pub frequencies: Vec<f64>,
    /// Per-frequency amplitude `a_i > 0`.
    pub amplitudes: Vec<f64>,
    /// Phase steps per frequency, even.
    pub n_steps: usize,
    pub autocorr: Autocorr,
}

impl ToFModel {
    /// Two frequencies, 90 and 120 MHz, unit amplitudes, four phase steps.
    pub fn two_frequency(autocorr: Autocorr) -> Self {
        Self {
            frequencies: vec![90e6, 120e6],
            amplitudes: vec![1.0, 1.0],
            n_steps: 4,
            autocorr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ToFError::Config(m));
        if self.frequencies.is_empty() || self.frequencies.len() != self.amplitudes.len() {
            return bad("need one amplitude per frequency".into());
        }
        if self.frequencies.iter().any(|&f| !(f > 0.0)) || self.amplitudes.iter().any(|&a| !(a > 0.0)) {
            return bad("frequencies and amplitudes must be positive".into());
        }
        if self.n_steps < 2 || self.n_steps % 2 == 1 {
            return bad(format!("phase step count must be even, got {}", self.n_steps));
        }
        self.autocorr.validate().map_err(ToFError::Config)
    }

    /// `λ/(2f_i)`, the depth period of frequency `i`.
    pub fn unambiguous_range(&self, i: usize) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.frequencies[i])
    }

    /// `4πf_i u/λ`
    pub fn phase(&self, i: usize, u: f64) -> f64 {
        4.0 * PI * self.frequencies[i] * u / SPEED_OF_LIGHT
    }

    /// Difference channels per frequency (`n_steps/2`).
    pub fn half_steps(&self) -> usize {
        self.n_steps / 2
    }

    pub fn channel_count(&self) -> usize {
        self.frequencies.len() * self.half_steps()
    }

    /// `ρ_ij(u) = a_i (g(φ_i(u) + 2πj/n) − g(φ_i(u) + 2πj/n + π))`, the
    /// background-free difference of samples `j` and `j + n/2`. Channel
    /// `i·(n/2) + j`.
    pub fn channel_fns(&self) -> Vec<ScalarFn> {
        let mut out = Vec::with_capacity(self.channel_count());
        for (i, (&f, &a)) in self.frequencies.iter().zip(&self.amplitudes).enumerate() {
            let k = 4.0 * PI * f / SPEED_OF_LIGHT;
            for j in 0..self.half_steps() {
                let shift = 2.0 * PI * j as f64 / self.n_steps as f64;
                let g = self.autocorr;
                let g2 = self.autocorr;
                out.push(
                    ScalarFn::new(&format!("tof[{i},{j}]"), move |u: f64| {
                        let phi = k * u + shift;
                        a * (g.eval(phi) - g.eval(phi + PI))
                    })
                    .with_derivative(move |u: f64| {
                        let phi = k * u + shift;
                        a * k * (g2.derivative(phi) - g2.derivative(phi + PI))
                    }),
                );
            }
        }
        out
    }
}

/// Ground-truth scene.
#[derive(Debug, Clone, PartialEq)]
pub struct ToFScene {
    pub height: usize,
    pub width: usize,
    /// Row-major depth in meters.
    pub depth: Vec<f64>,
    /// Per-frequency background `b_i`; it cancels in the differences.
    pub background: Vec<f64>,
    pub model: ToFModel,
}

impl ToFScene {
    /// Piecewise-constant scene: a background plane plus `rects` random
    /// axis-aligned rectangles, depths uniform in `depth_range`. Rectangle
    /// corners are snapped to multiples of `align`.
    pub fn piecewise(
        height: usize,
        width: usize,
        rects: usize,
        depth_range: (f64, f64),
        align: usize,
        model: ToFModel,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = depth_range;
        let snap = |x: usize| x / align.max(1) * align.max(1);
        let mut depth = vec![rng.random_range(lo..=hi); height * width];
        for _ in 0..rects {
            let d = rng.random_range(lo..=hi);
            let r0 = snap(rng.random_range(0..height));
            let c0 = snap(rng.random_range(0..width));
            let r1 = snap(r0 + rng.random_range(height / 6..=height / 2)).min(height);
            let c1 = snap(c0 + rng.random_range(width / 6..=width / 2)).min(width);
            for r in r0..r1 {
                depth[r * width + c0..r * width + c1].fill(d);
            }
        }
        let background = vec![0.5; model.frequencies.len()];
        Self {
            height,
            width,
            depth,
            background,
            model,
        }
    }

    /// Raw correlation sample `k_ij = a_i g(φ_i + 2πj/n) + b_i` at one pixel.
    pub fn sample(&self, i: usize, j: usize, u: f64) -> f64 {
        let m = &self.model;
        let phi = m.phase(i, u) + 2.0 * PI * j as f64 / m.n_steps as f64;
        m.amplitudes[i] * m.autocorr.eval(phi) + self.background[i]
    }
}

/// Downsampled, noisy difference images.
#[derive(Debug, Clone, PartialEq)]
pub struct ToFMeasurements {
    /// Full-resolution grid the depth lives on.
    pub height: usize,
    pub width: usize,
    pub factor: usize,
    pub sigma: f64,
    /// Channel-major stack of `(height/factor) × (width/factor)` images,
    /// channel `i·(n/2) + j`.
    pub data: Vec<f64>,
}

impl ToFMeasurements {
    pub fn low_res(&self) -> (usize, usize) {
        (self.height / self.factor, self.width / self.factor)
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let (h, w) = self.low_res();
        &self.data[c * h * w..(c + 1) * h * w]
    }
}

fn operator(height: usize, width: usize, factor: usize, channels: usize) -> Operator {
    Operator::BlockDownsample {
        height,
        width,
        factor,
        channels,
    }
}

/// Simulates `y_ij = K ρ_ij(u) + noise`. The differences are formed
/// analytically, so the background never enters.
pub fn forward(scene: &ToFScene, factor: usize, sigma: f64, seed: u64) -> Result<ToFMeasurements> {
    scene.model.validate()?;
    let (h, w) = (scene.height, scene.width);
    if factor == 0 || h % factor != 0 || w % factor != 0 {
        return Err(ToFError::Config(format!("downsample factor {factor} must divide {h}×{w}")));
    }
    if scene.depth.len() != h * w {
        return Err(ToFError::Config("depth image has the wrong size".into()));
    }
    if !(sigma >= 0.0) {
        return Err(ToFError::Config("noise level must be nonnegative".into()));
    }
    let fns = scene.model.channel_fns();
    let lifted: Vec<f64> = fns
        .iter()
        .flat_map(|f| scene.depth.iter().map(move |&u| f.eval(u)))
        .collect();
    let mut data = operator(h, w, factor, fns.len()).apply(&lifted);
    if sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sigma).map_err(|e| ToFError::Config(e.to_string()))?;
        for v in &mut data {
            *v += noise.sample(&mut rng);
        }
    }
    Ok(ToFMeasurements {
        height: h,
        width: w,
        factor,
        sigma,
        data,
    })
}

/// Per-pixel four-step phase estimate of one frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedForm {
    /// Low-resolution depth in `[0, λ/(2f))`.
    pub depth: Vec<f64>,
    /// `false` where both differences vanish.
    pub valid: Vec<bool>,
}

/// `d = λ/(4πf_i)·wrap_[0,2π)(atan2(−y_i1, y_i0))`.
pub fn closed_form_depth(meas: &ToFMeasurements, model: &ToFModel, i: usize) -> Result<ClosedForm> {
    if model.n_steps != 4 {
        return Err(ToFError::Config("the closed form needs four phase steps".into()));
    }
    if i >= model.frequencies.len() {
        return Err(ToFError::Config(format!("no frequency {i}")));
    }
    let (y0, y1) = (meas.channel(2 * i), meas.channel(2 * i + 1));
    let scale = SPEED_OF_LIGHT / (4.0 * PI * model.frequencies[i]);
    let mut depth = Vec::with_capacity(y0.len());
    let mut valid = Vec::with_capacity(y0.len());
    for (&c, &s) in y0.iter().zip(y1) {
        let ok = c.hypot(s) > 1e-12 * model.amplitudes[i];
        let phi = if ok { (-s).atan2(c).rem_euclid(2.0 * PI) } else { 0.0 };
        // rem_euclid can round up to exactly 2π.
        let phi = if phi >= 2.0 * PI { 0.0 } else { phi };
        depth.push(scale * phi);
        valid.push(ok);
    }
    Ok(ClosedForm { depth, valid })
}

/// `Σ_ij ‖y_ij − Kρ_ij(u)‖² + α TV(u)` over depths in `depth_range`, TV with
/// the anisotropic norm.
pub fn tof_problem(meas: &ToFMeasurements, model: &ToFModel, alpha: f64, depth_range: (f64, f64)) -> Result<Problem> {
    model.validate()?;
    let (h, w) = (meas.height, meas.width);
    let fns = model.channel_fns();
    let op = operator(h, w, meas.factor, fns.len());
    if op.rows() != meas.data.len() {
        return Err(ToFError::Config("measurements do not match the sensor model".into()));
    }
    let outer = SmoothOuter::scaled_least_squares(op, meas.data.clone(), 2.0)?;
    let mut tv = TotalVariation::new(h, w, alpha);
    tv.norm = TvNorm::Anisotropic;
    Ok(Problem::new(
        outer,
        InnerMap::Separable(SeparableMap::channels(h * w, fns)),
        Regularizer::TotalVariation(tv),
        BoxDomain::uniform(h * w, depth_range.0, depth_range.1)?,
    )?)
}

/// Energy of `u` (see [`tof_problem`]). The box is widened to contain `u`.
pub fn tof_energy(u: &[f64], meas: &ToFMeasurements, model: &ToFModel, alpha: f64) -> Result<f64> {
    let lo = u.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let p = tof_problem(meas, model, alpha, (lo - 1.0, hi + 1.0))?;
    Ok(p.energy(u)?)
}
