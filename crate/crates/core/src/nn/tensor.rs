//! Dense row-major matrix of `f64`, the container for all network parameters
//! and activations.

use rand::Rng;

use crate::error::{Error, Result};

/// A `rows x cols` real matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor2 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a tensor from row-major data; the length must match.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "tensor {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric("tensor entries must be finite".into()));
        }
        Ok(Self { rows, cols, data })
    }

    /// Identity matrix.
    pub fn eye(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// Fills with `uniform(-1/sqrt(fan_in), +1/sqrt(fan_in))` where `fan_in`
    /// is the column count.
    pub fn init_uniform<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (cols as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `self * x` for a column vector `x` of length `cols`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec: input length mismatch");
        let mut out = vec![0.0; self.rows];
        for (r, o) in out.iter_mut().enumerate() {
            let row = self.row(r);
            let mut acc = 0.0;
            for (w, xv) in row.iter().zip(x) {
                acc = w.mul_add(*xv, acc);
            }
            *o = acc;
        }
        out
    }

    /// `self^T * x` for a column vector `x` of length `rows`.
    pub fn matvec_transposed(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows, "matvec_transposed: input length mismatch");
        let mut out = vec![0.0; self.cols];
        for (r, xv) in x.iter().enumerate() {
            let row = self.row(r);
            for (o, w) in out.iter_mut().zip(row) {
                *o = w.mul_add(*xv, *o);
            }
        }
        out
    }

    /// `self * other`, shapes `(m x k) * (k x n)`.
    pub fn matmul(&self, other: &Tensor2) -> Tensor2 {
        assert_eq!(self.cols, other.rows, "matmul: inner dimension mismatch");
        let mut out = Tensor2::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for i in 0..self.cols {
                let a = self.get(r, i);
                if a == 0.0 {
                    continue;
                }
                let brow = other.row(i);
                let orow = out.row_mut(r);
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o = a.mul_add(*b, *o);
                }
            }
        }
        out
    }

    /// `self * other^T`, shapes `(m x k) * (n x k)^T`.
    pub fn matmul_nt(&self, other: &Tensor2) -> Tensor2 {
        assert_eq!(self.cols, other.cols, "matmul_nt: inner dimension mismatch");
        let mut out = Tensor2::zeros(self.rows, other.rows);
        for r in 0..self.rows {
            let arow = self.row(r);
            for c in 0..other.rows {
                let brow = other.row(c);
                let mut acc = 0.0;
                for (a, b) in arow.iter().zip(brow) {
                    acc = a.mul_add(*b, acc);
                }
                out.set(r, c, acc);
            }
        }
        out
    }

    /// `self^T * other`, shapes `(k x m)^T * (k x n)`.
    pub fn matmul_tn(&self, other: &Tensor2) -> Tensor2 {
        assert_eq!(self.rows, other.rows, "matmul_tn: inner dimension mismatch");
        let mut out = Tensor2::zeros(self.cols, other.cols);
        for i in 0..self.rows {
            let arow = self.row(i);
            let brow = other.row(i);
            for (r, a) in arow.iter().enumerate() {
                if *a == 0.0 {
                    continue;
                }
                let orow = out.row_mut(r);
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o = a.mul_add(*b, *o);
                }
            }
        }
        out
    }

    /// Rank-1 update `self += scale * a * b^T` with `a` of length `rows` and
    /// `b` of length `cols`.
    pub fn add_outer(&mut self, scale: f64, a: &[f64], b: &[f64]) {
        assert_eq!(a.len(), self.rows);
        assert_eq!(b.len(), self.cols);
        for (r, av) in a.iter().enumerate() {
            let s = scale * av;
            let row = self.row_mut(r);
            for (w, bv) in row.iter_mut().zip(b) {
                *w = s.mul_add(*bv, *w);
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn from_vec_rejects_bad_length() {
        assert!(Tensor2::from_vec(2, 2, vec![1.0; 3]).is_err());
    }

    #[test]
    fn from_vec_rejects_nan() {
        assert!(Tensor2::from_vec(1, 2, vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn matvec_against_naive_loops() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let t = Tensor2::init_uniform(3, 5, &mut rng);
        let x: Vec<f64> = (0..5).map(|i| 0.3 * i as f64 - 0.7).collect();
        let got = t.matvec(&x);
        for r in 0..3 {
            let mut want = 0.0;
            for c in 0..5 {
                want += t.get(r, c) * x[c];
            }
            assert!((got[r] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn matvec_transposed_matches_explicit_transpose() {
        let t = Tensor2::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let y = t.matvec_transposed(&[1.0, -1.0]);
        assert_eq!(y, vec![-3.0, -3.0, -3.0]);
    }

    #[test]
    fn init_uniform_respects_fan_in_bound() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let t = Tensor2::init_uniform(8, 16, &mut rng);
        let bound = 1.0 / 4.0;
        assert!(t.data().iter().all(|v| v.abs() < bound));
    }
}
