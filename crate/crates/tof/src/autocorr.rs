//! 2π-periodic correlation functions of the emitted and reference signals.

use std::f64::consts::PI;

/// Correlation of the reference with the returned signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Autocorr {
    /// `cos φ`
    Cosine,
    /// Square reference against a duty-0.5 trapezoid wave whose ramps are
    /// `p` of a half period wide. That is the triangle wave smoothed by a
    /// box of width `p·π`, rescaled to peak 1: piecewise quadratic and C¹.
    /// `p = 0` (square signal) gives the plain triangle.
    Trapezoid { p: f64 },
}

impl Default for Autocorr {
    fn default() -> Self {
        Autocorr::Trapezoid { p: 0.5 }
    }
}

/// Wraps to `[−π, π)`.
fn wrap(phi: f64) -> f64 {
    (phi + PI).rem_euclid(2.0 * PI) - PI
}

/// Zero-mean triangle wave, `1` at `0` and `−1` at `π`.
fn triangle(phi: f64) -> f64 {
    1.0 - 2.0 * wrap(phi).abs() / PI
}

/// Periodic antiderivative of [`triangle`].
fn triangle_integral(phi: f64) -> f64 {
    let x = wrap(phi);
    x - x * x.abs() / PI
}

impl Autocorr {
    pub fn eval(&self, phi: f64) -> f64 {
        match *self {
            Autocorr::Cosine => phi.cos(),
            Autocorr::Trapezoid { p } if p <= 0.0 => triangle(phi),
            Autocorr::Trapezoid { p } => {
                let w = p * PI;
                let avg = (triangle_integral(phi + 0.5 * w) - triangle_integral(phi - 0.5 * w)) / w;
                avg / (1.0 - w / (2.0 * PI))
            }
        }
    }

    pub fn derivative(&self, phi: f64) -> f64 {
        match *self {
            Autocorr::Cosine => -phi.sin(),
            Autocorr::Trapezoid { p } if p <= 0.0 => {
                let x = wrap(phi);
                -2.0 / PI * x.signum()
            }
            Autocorr::Trapezoid { p } => {
                let w = p * PI;
                (triangle(phi + 0.5 * w) - triangle(phi - 0.5 * w)) / w / (1.0 - w / (2.0 * PI))
            }
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match *self {
            Autocorr::Trapezoid { p } if !(0.0..=1.0).contains(&p) => {
                Err(format!("plateau fraction must lie in [0, 1], got {p}"))
            }
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_at_zero() {
        assert_eq!(Autocorr::Cosine.eval(0.0), 1.0);
    }

    #[test]
    fn periodic_and_even() {
        for g in [Autocorr::Cosine, Autocorr::Trapezoid { p: 0.5 }, Autocorr::Trapezoid { p: 0.0 }] {
            for k in 0..50 {
                let phi = -7.0 + 0.29 * k as f64;
                assert!((g.eval(phi) - g.eval(phi + 2.0 * PI)).abs() < 1e-12);
                assert!((g.eval(phi) - g.eval(-phi)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn trapezoid_peak_and_trough() {
        let g = Autocorr::Trapezoid { p: 0.5 };
        assert!((g.eval(0.0) - 1.0).abs() < 1e-15);
        assert!((g.eval(PI) + 1.0).abs() < 1e-15);
        for k in 0..200 {
            let v = g.eval(-PI + 2.0 * PI * k as f64 / 200.0);
            assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&v));
        }
    }

    #[test]
    fn square_signal_gives_triangle() {
        let g = Autocorr::Trapezoid { p: 0.0 };
        assert_eq!(g.eval(0.0), 1.0);
        assert_eq!(g.eval(PI / 2.0), 0.0);
        let min = (0..1000)
            .map(|k| g.eval(2.0 * PI * k as f64 / 1000.0))
            .fold(f64::INFINITY, f64::min);
        assert_eq!(g.eval(PI), min);
    }

    #[test]
    fn derivative_is_continuous_and_matches() {
        let g = Autocorr::Trapezoid { p: 0.5 };
        let h = 1e-6;
        for k in 0..400 {
            let phi = -PI + 2.0 * PI * (k as f64 + 0.5) / 400.0;
            let fd = (g.eval(phi + h) - g.eval(phi - h)) / (2.0 * h);
            assert!((fd - g.derivative(phi)).abs() < 1e-5, "{phi}");
        }
        // C¹: no jump across the kinks of the underlying triangle.
        let kink = PI / 4.0;
        assert!((g.derivative(kink - 1e-9) - g.derivative(kink + 1e-9)).abs() < 1e-6);
    }
}
