//! Square banded complex matrices stored row by row.
//!
//! Entry `(i, i + k)` for `k` in `-lower..=upper` lives at
//! `data[i * width + lower + k]`; slots that fall outside the matrix stay zero.

use ndarray::Array2;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::scalar::{cr, Real, C};

#[derive(Debug, Clone, PartialEq)]
pub struct Banded<T: Real> {
    dim: usize,
    lower: usize,
    upper: usize,
    data: Vec<C<T>>,
}

impl<T: Real> Banded<T> {
    pub fn zeros(dim: usize, lower: usize, upper: usize) -> Self {
        let width = lower + upper + 1;
        Self {
            dim,
            lower,
            upper,
            data: vec![C::zero(); dim * width],
        }
    }

    /// Real diagonal matrix.
    pub fn diagonal(values: &[T]) -> Self {
        let mut m = Self::zeros(values.len(), 0, 0);
        for (slot, &v) in m.data.iter_mut().zip(values) {
            *slot = cr(v);
        }
        m
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(&vec![T::one(); dim])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn lower(&self) -> usize {
        self.lower
    }

    #[inline]
    pub fn upper(&self) -> usize {
        self.upper
    }

    #[inline]
    fn width(&self) -> usize {
        self.lower + self.upper + 1
    }

    #[inline]
    fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.lower >= i && j <= i + self.upper
    }

    pub fn get(&self, i: usize, j: usize) -> C<T> {
        if i >= self.dim || j >= self.dim || !self.in_band(i, j) {
            return C::zero();
        }
        self.data[i * self.width() + self.lower + j - i]
    }

    /// Sets an in-band entry. Panics if `(i, j)` lies outside the band.
    pub fn set(&mut self, i: usize, j: usize, value: C<T>) {
        assert!(i < self.dim && j < self.dim && self.in_band(i, j), "({i}, {j}) outside band");
        let w = self.width();
        self.data[i * w + self.lower + j - i] = value;
    }

    /// Row `i` of the band: entries `(i, first..first + len)`.
    #[inline]
    pub(crate) fn row(&self, i: usize) -> (usize, &[C<T>]) {
        let w = self.width();
        let first = i.saturating_sub(self.lower);
        let last = (i + self.upper).min(self.dim - 1);
        let offset = self.lower + first - i;
        let start = i * w + offset;
        (first, &self.data[start..start + (last + 1 - first)])
    }

    pub fn to_dense(&self) -> Array2<C<T>> {
        let mut out = Array2::zeros((self.dim, self.dim));
        for i in 0..self.dim {
            let (first, row) = self.row(i);
            for (k, &v) in row.iter().enumerate() {
                out[[i, first + k]] = v;
            }
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.dim, self.upper, self.lower);
        for i in 0..self.dim {
            let (first, row) = self.row(i);
            for (k, &v) in row.iter().enumerate() {
                out.set(first + k, i, v.conj());
            }
        }
        out
    }

    pub fn scale(&self, s: C<T>) -> Self {
        Self {
            data: self.data.iter().map(|&v| v * s).collect(),
            ..self.clone()
        }
    }

    /// `self + s * other`, widening the band as needed.
    pub fn add_scaled(&self, other: &Self, s: C<T>) -> Result<Self> {
        self.check_dim(other.dim)?;
        let mut out = Self::zeros(
            self.dim,
            self.lower.max(other.lower),
            self.upper.max(other.upper),
        );
        for i in 0..self.dim {
            let (first, row) = self.row(i);
            for (k, &v) in row.iter().enumerate() {
                out.set(i, first + k, v);
            }
            let (first, row) = other.row(i);
            for (k, &v) in row.iter().enumerate() {
                let j = first + k;
                let cur = out.get(i, j);
                out.set(i, j, cur + v * s);
            }
        }
        Ok(out)
    }

    /// Banded product; bandwidths add.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        self.check_dim(other.dim)?;
        let lower = (self.lower + other.lower).min(self.dim.saturating_sub(1));
        let upper = (self.upper + other.upper).min(self.dim.saturating_sub(1));
        let mut out = Self::zeros(self.dim, lower, upper);
        for i in 0..self.dim {
            let (first, row) = self.row(i);
            for (k, &a) in row.iter().enumerate() {
                let l = first + k;
                let (ofirst, orow) = other.row(l);
                for (kk, &b) in orow.iter().enumerate() {
                    let j = ofirst + kk;
                    let cur = out.get(i, j);
                    out.set(i, j, cur + a * b);
                }
            }
        }
        Ok(out)
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[C<T>], y: &mut [C<T>]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(y.len(), self.dim);
        for (i, yi) in y.iter_mut().enumerate() {
            let (first, row) = self.row(i);
            *yi = row
                .iter()
                .zip(&x[first..first + row.len()])
                .fold(C::zero(), |acc, (&a, &b)| acc + a * b);
        }
    }

    /// `out += alpha * A * rho` for a row-major `dim x dim` dense `rho`.
    pub fn left_mul_acc(&self, alpha: C<T>, rho: &[C<T>], out: &mut [C<T>]) {
        let d = self.dim;
        for i in 0..d {
            let (first, row) = self.row(i);
            let dst = &mut out[i * d..(i + 1) * d];
            for (k, &a) in row.iter().enumerate() {
                let coef = alpha * a;
                if coef.is_zero() {
                    continue;
                }
                let src = &rho[(first + k) * d..(first + k + 1) * d];
                for (o, &s) in dst.iter_mut().zip(src) {
                    *o += coef * s;
                }
            }
        }
    }

    /// `out += alpha * rho * A` for a row-major `dim x dim` dense `rho`.
    pub fn right_mul_acc(&self, alpha: C<T>, rho: &[C<T>], out: &mut [C<T>]) {
        let d = self.dim;
        for i in 0..d {
            let src = &rho[i * d..(i + 1) * d];
            let dst = &mut out[i * d..(i + 1) * d];
            for (l, &r) in src.iter().enumerate() {
                let coef = alpha * r;
                let (first, row) = self.row(l);
                for (o, &a) in dst[first..first + row.len()].iter_mut().zip(row) {
                    *o += coef * a;
                }
            }
        }
    }

    /// Largest absolute entry of `A - A^dagger`.
    pub fn hermiticity_error(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.dim {
            let (first, row) = self.row(i);
            for (k, &v) in row.iter().enumerate() {
                let j = first + k;
                worst = worst.max((v - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    /// Induced infinity norm (max absolute row sum), an upper bound on the
    /// spectral radius.
    pub fn max_row_sum(&self) -> T {
        (0..self.dim)
            .map(|i| self.row(i).1.iter().map(|v| v.norm()).sum::<T>())
            .fold(T::zero(), T::max)
    }

    fn check_dim(&self, other: usize) -> Result<()> {
        if self.dim != other {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn sample(dim: usize, lower: usize, upper: usize, seed: u64) -> Banded<f64> {
        let mut m = Banded::zeros(dim, lower, upper);
        let mut s = seed;
        for i in 0..dim {
            for j in i.saturating_sub(lower)..=(i + upper).min(dim - 1) {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let re = ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5;
                let im = ((s >> 3) % 997) as f64 / 997.0 - 0.5;
                m.set(i, j, C::new(re, im));
            }
        }
        m
    }

    fn max_diff(a: &Array2<C<f64>>, b: &Array2<C<f64>>) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn matmul_matches_dense_product() {
        let a = sample(7, 1, 2, 1);
        let b = sample(7, 2, 1, 2);
        let p = a.matmul(&b).unwrap();
        assert_eq!((p.lower(), p.upper()), (3, 3));
        assert!(max_diff(&p.to_dense(), &a.to_dense().dot(&b.to_dense())) < 1e-14);
    }

    #[test]
    fn dense_sandwich_products_match() {
        let a = sample(6, 1, 1, 3);
        let rho = sample(6, 5, 5, 4).to_dense();
        let flat: Vec<_> = rho.iter().copied().collect();
        let alpha = C::new(0.3, -1.1);

        let mut left = vec![C::zero(); 36];
        a.left_mul_acc(alpha, &flat, &mut left);
        let expect = a.to_dense().dot(&rho).mapv(|v| v * alpha);
        let got = Array2::from_shape_vec((6, 6), left).unwrap();
        assert!(max_diff(&got, &expect) < 1e-14);

        let mut right = vec![C::zero(); 36];
        a.right_mul_acc(alpha, &flat, &mut right);
        let expect = rho.dot(&a.to_dense()).mapv(|v| v * alpha);
        let got = Array2::from_shape_vec((6, 6), right).unwrap();
        assert!(max_diff(&got, &expect) < 1e-14);
    }

    #[test]
    fn adjoint_and_apply() {
        let a = sample(5, 1, 2, 9);
        let dense = a.to_dense();
        let adj = a.adjoint().to_dense();
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(adj[[i, j]], dense[[j, i]].conj());
            }
        }
        let x: Vec<C<f64>> = (0..5).map(|k| C::new(k as f64, 1.0 - k as f64)).collect();
        let mut y = vec![C::zero(); 5];
        a.apply(&x, &mut y);
        let expect = dense.dot(&ndarray::Array1::from(x));
        for (u, v) in y.iter().zip(expect.iter()) {
            assert!((u - v).norm() < 1e-14);
        }
    }

    #[test]
    fn out_of_band_reads_zero() {
        let a = sample(4, 0, 1, 5);
        assert_eq!(a.get(3, 0), C::zero());
        assert_eq!(a.get(0, 3), C::zero());
        assert_eq!(a.get(9, 9), C::zero());
    }
}
