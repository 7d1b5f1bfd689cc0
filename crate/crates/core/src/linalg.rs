//! Small dense matrices: exponential, symmetric eigen-decomposition, norms, inverse.

use std::ops::{Index, IndexMut};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::{cst, from_usize, Real};

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    /// 1×1 matrix.
    pub fn scalar(x: T) -> Self {
        Self { rows: 1, cols: 1, data: vec![x] }
    }

    pub fn diag(d: &[T]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &x) in d.iter().enumerate() {
            m[(i, i)] = x;
        }
        m
    }

    /// Builds from nested rows; every row must have the same length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Shape("ragged matrix rows".into()));
        }
        let data = rows.iter().flat_map(|row| row.iter().map(|&x| cst::<T>(x))).collect();
        Ok(Self { rows: r, cols: c, data })
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| crate::scalar::to_f64(self[(i, j)])).collect())
            .collect()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = self[(i, l)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(l, j)];
                }
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a - b)
    }

    pub fn scale(&self, s: T) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| x * s).collect() }
    }

    fn zip(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape mismatch");
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// `out = self · x`.
    pub fn mul_vec_into(&self, x: &[T], out: &mut [T]) {
        debug_assert_eq!(x.len(), self.cols);
        for i in 0..self.rows {
            let mut s = T::zero();
            for j in 0..self.cols {
                s += self[(i, j)] * x[j];
            }
            out[i] = s;
        }
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.rows];
        self.mul_vec_into(x, &mut out);
        out
    }

    /// `xᵀ · self · y`.
    pub fn quad(&self, x: &[T], y: &[T]) -> T {
        let mut s = T::zero();
        for i in 0..self.rows {
            for j in 0..self.cols {
                s += x[i] * self[(i, j)] * y[j];
            }
        }
        s
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    pub fn norm_one(&self) -> T {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].abs()).sum::<T>())
            .fold(T::zero(), T::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn symmetrized(&self) -> Self {
        self.add(&self.transpose()).scale(cst(0.5))
    }

    /// Largest absolute entry of `self − selfᵀ`.
    pub fn asymmetry(&self) -> T {
        self.sub(&self.transpose()).max_abs()
    }
}

impl<T> Index<(usize, usize)> for Mat<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Mat<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// `e^{tA}` by scaling and squaring with a Taylor core.
pub fn matrix_exp<T: Real>(a: &Mat<T>, t: T) -> Result<Mat<T>> {
    if !a.is_square() {
        return Err(Error::Shape("matrix_exp needs a square matrix".into()));
    }
    if !a.is_finite() || !t.is_finite() {
        return Err(Error::NonFinite("matrix_exp input".into()));
    }
    let n = a.rows();
    let m = a.scale(t);
    let norm = m.norm_one();
    let mut squarings = 0i32;
    let half = cst::<T>(0.5);
    let mut scaled_norm = norm;
    while scaled_norm > half {
        scaled_norm = scaled_norm * half;
        squarings += 1;
    }
    let m = m.scale(cst::<T>(2.0).powi(-squarings));
    let mut result = Mat::identity(n);
    let mut term = Mat::identity(n);
    for k in 1..40 {
        term = term.matmul(&m).scale(T::one() / from_usize::<T>(k));
        result = result.add(&term);
        if term.max_abs() <= T::epsilon() * result.max_abs() {
            break;
        }
    }
    for _ in 0..squarings {
        result = result.matmul(&result);
    }
    Ok(result)
}

/// Symmetric eigen-decomposition by cyclic Jacobi rotations.
///
/// Returns eigenvalues (ascending) and the matrix whose columns are the eigenvectors.
pub fn sym_eigen<T: Real>(a: &Mat<T>) -> (Vec<T>, Mat<T>) {
    let n = a.rows();
    let mut m = a.symmetrized();
    let mut v = Mat::identity(n);
    let scale = m.max_abs().max(T::min_positive_value());
    for _sweep in 0..100 {
        let mut off = T::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[(i, j)] * m[(i, j)];
            }
        }
        if off.sqrt() <= T::epsilon() * scale * cst(1e-2) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() <= T::min_positive_value() {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (cst::<T>(2.0) * apq);
                let sign = if theta >= T::zero() { T::one() } else { -T::one() };
                let tt = sign / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (tt * tt + T::one()).sqrt();
                let s = tt * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].partial_cmp(&m[(j, j)]).unwrap_or(std::cmp::Ordering::Equal));
    let vals = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vecs = Mat::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        for r in 0..n {
            vecs[(r, col)] = v[(r, i)];
        }
    }
    (vals, vecs)
}

/// Smallest eigenvalue of the symmetric part.
pub fn min_sym_eigen<T: Real>(a: &Mat<T>) -> T {
    let (vals, _) = sym_eigen(a);
    vals.first().copied().unwrap_or(T::zero())
}

/// Operator 2-norm (largest singular value).
pub fn spectral_norm<T: Real>(a: &Mat<T>) -> T {
    let (vals, _) = sym_eigen(&a.transpose().matmul(a));
    vals.last().copied().unwrap_or(T::zero()).max(T::zero()).sqrt()
}

/// Principal square root of the PSD part of a symmetric matrix.
pub fn psd_sqrt<T: Real>(a: &Mat<T>) -> Mat<T> {
    let (vals, vecs) = sym_eigen(a);
    let n = a.rows();
    let mut out = Mat::zeros(n, n);
    for (l, &lam) in vals.iter().enumerate() {
        let s = lam.max(T::zero()).sqrt();
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] += vecs[(i, l)] * s * vecs[(j, l)];
            }
        }
    }
    out
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
pub fn inverse<T: Real>(a: &Mat<T>) -> Result<Mat<T>> {
    if !a.is_square() {
        return Err(Error::Shape("inverse needs a square matrix".into()));
    }
    let n = a.rows();
    let mut m = a.clone();
    let mut inv = Mat::identity(n);
    let tiny = T::epsilon() * a.max_abs().max(T::min_positive_value());
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[(i, col)].abs().partial_cmp(&m[(j, col)].abs()).unwrap_or(std::cmp::Ordering::Equal))
            .unwrap_or(col);
        if m[(pivot, col)].abs() <= tiny {
            return Err(Error::Singular("matrix is numerically singular".into()));
        }
        if pivot != col {
            for j in 0..n {
                m.data.swap(pivot * n + j, col * n + j);
                inv.data.swap(pivot * n + j, col * n + j);
            }
        }
        let d = m[(col, col)];
        for j in 0..n {
            m[(col, j)] /= d;
            inv[(col, j)] /= d;
        }
        for i in 0..n {
            if i == col {
                continue;
            }
            let f = m[(i, col)];
            if f == T::zero() {
                continue;
            }
            for j in 0..n {
                let mc = m[(col, j)];
                let ic = inv[(col, j)];
                m[(i, j)] -= f * mc;
                inv[(i, j)] -= f * ic;
            }
        }
    }
    Ok(inv)
}

/// Lower bound on the real parts of the eigenvalues of `a`, via Gelfand's formula
/// applied to `e^{−a}`: `ρ(e^{−a}) = e^{−min Re λ(a)}`.
pub fn min_eigen_real_part<T: Real>(a: &Mat<T>) -> Result<T> {
    let e = matrix_exp(a, -T::one())?;
    let mut b = e;
    let mut log_norm = T::zero();
    let mut weight = T::one();
    let mut estimate = T::zero();
    for _ in 0..48 {
        let nrm = spectral_norm(&b);
        if nrm <= T::min_positive_value() {
            return Ok(T::infinity());
        }
        log_norm += nrm.ln() * weight;
        estimate = log_norm;
        b = b.scale(T::one() / nrm);
        b = b.matmul(&b);
        weight = weight * cst(0.5);
    }
    // `estimate` converges to log ρ(e^{−a}).
    Ok(-estimate)
}
