//! Natural cubic interpolation with a coercive quadratic continuation.

#[derive(Debug, Clone, PartialEq)]
pub struct CubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Second derivatives at the nodes.
    m: Vec<f64>,
    /// Curvature of the continuation beyond the end nodes.
    tail: f64,
}

impl CubicSpline {
    /// Natural spline through `(xs, ys)`; `xs` strictly increasing, at least
    /// three nodes. Outside the node range it continues as
    /// `s(e) + s'(e)(x − e) + tail·(x − e)²`, which keeps it C¹ and coercive.
    pub fn natural(xs: Vec<f64>, ys: Vec<f64>, tail: f64) -> Option<Self> {
        let n = xs.len();
        if n < 3 || ys.len() != n || xs.windows(2).any(|w| !(w[0] < w[1])) || !(tail > 0.0) {
            return None;
        }
        // Tridiagonal system for the interior second derivatives (Thomas).
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let k = n - 2;
        let mut diag = vec![0.0; k];
        let mut upper = vec![0.0; k];
        let mut rhs = vec![0.0; k];
        for i in 0..k {
            diag[i] = 2.0 * (h[i] + h[i + 1]);
            upper[i] = h[i + 1];
            rhs[i] = 6.0 * ((ys[i + 2] - ys[i + 1]) / h[i + 1] - (ys[i + 1] - ys[i]) / h[i]);
        }
        for i in 1..k {
            let w = h[i] / diag[i - 1];
            diag[i] -= w * upper[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        let mut m = vec![0.0; n];
        for i in (0..k).rev() {
            let next = if i + 1 < k { m[i + 2] } else { 0.0 };
            m[i + 1] = (rhs[i] - upper[i] * next) / diag[i];
        }
        Some(Self { xs, ys, m, tail })
    }

    pub fn nodes(&self) -> (&[f64], &[f64]) {
        (&self.xs, &self.ys)
    }

    fn segment(&self, x: f64) -> usize {
        match self.xs.partition_point(|&v| v <= x) {
            0 => 0,
            p => (p - 1).min(self.xs.len() - 2),
        }
    }

    fn inside(&self, x: f64) -> (f64, f64) {
        let i = self.segment(x);
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let h = x1 - x0;
        let (a, b) = ((x1 - x) / h, (x - x0) / h);
        let (m0, m1) = (self.m[i], self.m[i + 1]);
        let v = a * self.ys[i] + b * self.ys[i + 1] + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0;
        let d = (self.ys[i + 1] - self.ys[i]) / h + ((1.0 - 3.0 * a * a) * m0 + (3.0 * b * b - 1.0) * m1) * h / 6.0;
        (v, d)
    }

    /// Value and derivative.
    pub fn eval_with_derivative(&self, x: f64) -> (f64, f64) {
        let lo = self.xs[0];
        let hi = self.xs[self.xs.len() - 1];
        let edge = if x < lo {
            lo
        } else if x > hi {
            hi
        } else {
            return self.inside(x);
        };
        let (v, d) = self.inside(edge);
        let t = x - edge;
        (v + d * t + self.tail * t * t, d + 2.0 * self.tail * t)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.eval_with_derivative(x).0
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.eval_with_derivative(x).1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_and_is_c1() {
        let xs: Vec<f64> = (0..6).map(|i| i as f64 * 0.7 - 1.0).collect();
        let ys = vec![0.3, -1.2, 2.0, 0.1, 0.0, 1.5];
        let s = CubicSpline::natural(xs.clone(), ys.clone(), 1.0).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            assert!((s.eval(*x) - y).abs() < 1e-12);
        }
        for &x in &[xs[0], xs[2], xs[5]] {
            let (l, r) = (s.eval(x - 1e-7), s.eval(x + 1e-7));
            assert!((l - r).abs() < 1e-5);
            assert!((s.derivative(x - 1e-9) - s.derivative(x + 1e-9)).abs() < 1e-6);
        }
        // derivative matches a difference quotient inside and outside
        for &x in &[-2.0, 0.33, 1.9, 4.0] {
            let fd = (s.eval(x + 1e-6) - s.eval(x - 1e-6)) / 2e-6;
            assert!((fd - s.derivative(x)).abs() < 1e-5);
        }
    }

    #[test]
    fn reproduces_a_line() {
        let xs: Vec<f64> = (0..5).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x - 1.0).collect();
        let s = CubicSpline::natural(xs, ys, 1.0).unwrap();
        assert!((s.eval(2.5) - 4.0).abs() < 1e-12);
    }
}
