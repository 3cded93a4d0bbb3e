//! Dense and structured linear operators.

use crate::{Error, Real, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { T::one() } else { T::zero() })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                what: "matrix data",
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::Dimension {
                    what: "matrix row",
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(x)
                    .fold(T::zero(), |acc, (&a, &b)| acc + a * b)
            })
            .collect()
    }

    pub fn matvec_t(&self, y: &[T]) -> Vec<T> {
        debug_assert_eq!(y.len(), self.rows);
        let mut out = vec![T::zero(); self.cols];
        for (i, &yi) in y.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o = *o + a * yi;
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// `AᵀA`
    pub fn gram(&self) -> Self {
        let n = self.cols;
        let mut g = Self::zeros(n, n);
        for r in 0..self.rows {
            let row = self.row(r);
            for i in 0..n {
                let ri = row[i];
                if ri == T::zero() {
                    continue;
                }
                for j in 0..n {
                    let idx = i * n + j;
                    g.data[idx] = g.data[idx] + ri * row[j];
                }
            }
        }
        g
    }

    pub fn abs_row_sums(&self) -> Vec<T> {
        (0..self.rows)
            .map(|i| self.row(i).iter().fold(T::zero(), |acc, v| acc + v.abs()))
            .collect()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.data.iter().all(|&v| v >= T::zero())
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        self.rows == self.cols
            && (0..self.rows)
                .all(|i| (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol))
    }
}

/// Largest eigenvalue of a symmetric positive semidefinite operator given by
/// its action, by power iteration. The estimate approaches from below, so a
/// small relative margin is added.
pub fn power_iteration<T: Real>(n: usize, apply: impl Fn(&[T]) -> Vec<T>) -> T {
    if n == 0 {
        return T::zero();
    }
    let mut x: Vec<T> = (0..n)
        .map(|i| T::one() + T::lit(0.01) * T::from_usize_lossy(i % 7))
        .collect();
    let mut lambda = T::zero();
    for _ in 0..1000 {
        let norm = x.iter().fold(T::zero(), |a, &v| a + v * v).sqrt();
        if norm == T::zero() {
            return T::zero();
        }
        x.iter_mut().for_each(|v| *v = *v / norm);
        let y = apply(&x);
        let next = x.iter().zip(&y).fold(T::zero(), |a, (&p, &q)| a + p * q);
        let converged = (next - lambda).abs() <= T::lit(1e-13) * next.abs();
        lambda = next;
        x = y;
        if converged {
            break;
        }
    }
    lambda * (T::one() + T::lit(1e-6))
}

/// Linear maps used by the smooth outer functions.
#[derive(Debug, Clone, PartialEq)]
pub enum Operator<T> {
    Identity(usize),
    Diagonal(Vec<T>),
    Dense(Matrix<T>),
    /// Averages `factor × factor` blocks of each of `channels` stacked
    /// `height × width` row-major images.
    BlockDownsample {
        height: usize,
        width: usize,
        factor: usize,
        channels: usize,
    },
}

impl<T: Real> Operator<T> {
    pub fn rows(&self) -> usize {
        match self {
            Operator::Identity(n) => *n,
            Operator::Diagonal(d) => d.len(),
            Operator::Dense(m) => m.rows(),
            Operator::BlockDownsample {
                height,
                width,
                factor,
                channels,
            } => channels * (height / factor) * (width / factor),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Operator::Identity(n) => *n,
            Operator::Diagonal(d) => d.len(),
            Operator::Dense(m) => m.cols(),
            Operator::BlockDownsample {
                height,
                width,
                channels,
                ..
            } => channels * height * width,
        }
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        match self {
            Operator::Identity(_) => x.to_vec(),
            Operator::Diagonal(d) => d.iter().zip(x).map(|(&a, &b)| a * b).collect(),
            Operator::Dense(m) => m.matvec(x),
            Operator::BlockDownsample {
                height,
                width,
                factor,
                channels,
            } => {
                let (hl, wl) = (height / factor, width / factor);
                let scale = T::one() / T::from_usize_lossy(factor * factor);
                let mut out = vec![T::zero(); channels * hl * wl];
                for c in 0..*channels {
                    let img = &x[c * height * width..(c + 1) * height * width];
                    for r in 0..hl {
                        for q in 0..wl {
                            let mut acc = T::zero();
                            for dr in 0..*factor {
                                let row = (r * factor + dr) * width;
                                for dq in 0..*factor {
                                    acc = acc + img[row + q * factor + dq];
                                }
                            }
                            out[c * hl * wl + r * wl + q] = acc * scale;
                        }
                    }
                }
                out
            }
        }
    }

    pub fn apply_t(&self, y: &[T]) -> Vec<T> {
        match self {
            Operator::Identity(_) => y.to_vec(),
            Operator::Diagonal(d) => d.iter().zip(y).map(|(&a, &b)| a * b).collect(),
            Operator::Dense(m) => m.matvec_t(y),
            Operator::BlockDownsample {
                height,
                width,
                factor,
                channels,
            } => {
                let (hl, wl) = (height / factor, width / factor);
                let scale = T::one() / T::from_usize_lossy(factor * factor);
                let mut out = vec![T::zero(); channels * height * width];
                for c in 0..*channels {
                    for r in 0..*height {
                        for q in 0..*width {
                            let v = y[c * hl * wl + (r / factor) * wl + q / factor];
                            out[c * height * width + r * width + q] = v * scale;
                        }
                    }
                }
                out
            }
        }
    }

    /// `d_i = Σ_j |AᵀA|_ij`, the diagonally dominant majorant of `AᵀA`.
    pub fn abs_gram_row_sums(&self) -> Vec<T> {
        match self {
            Operator::Identity(n) => vec![T::one(); *n],
            Operator::Diagonal(d) => d.iter().map(|&v| v * v).collect(),
            Operator::Dense(m) => m.gram().abs_row_sums(),
            Operator::BlockDownsample { factor, .. } => {
                let f2 = T::from_usize_lossy(factor * factor);
                vec![T::one() / f2; self.cols()]
            }
        }
    }

    /// Largest eigenvalue of `AᵀA`.
    pub fn spectral_norm_sq(&self) -> T {
        match self {
            Operator::Identity(_) => T::one(),
            Operator::Diagonal(d) => d.iter().fold(T::zero(), |a, &v| a.max(v * v)),
            Operator::Dense(m) => power_iteration(m.cols(), |x| m.matvec_t(&m.matvec(x))),
            Operator::BlockDownsample { factor, .. } => {
                T::one() / T::from_usize_lossy(factor * factor)
            }
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        match self {
            Operator::Identity(_) | Operator::BlockDownsample { .. } => true,
            Operator::Diagonal(d) => d.iter().all(|&v| v >= T::zero()),
            Operator::Dense(m) => m.is_nonnegative(),
        }
    }

    /// Validates the factor divides the image for downsampling operators.
    pub fn validate(&self) -> Result<()> {
        if let Operator::BlockDownsample {
            height,
            width,
            factor,
            ..
        } = self
        {
            if *factor == 0 || height % factor != 0 || width % factor != 0 {
                return Err(Error::Config(format!(
                    "downsample factor {factor} must divide {height}x{width}"
                )));
            }
        }
        Ok(())
    }
}
