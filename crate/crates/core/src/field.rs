//! Per-path, per-node vector storage and deterministic ensemble reductions.

use rayon::prelude::*;

use crate::scalar::{from_usize, Real};

/// `n_paths × n_nodes × dim` values, path-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Field<T> {
    n_paths: usize,
    n_nodes: usize,
    dim: usize,
    data: Vec<T>,
}

impl<T: Real> Field<T> {
    pub fn zeros(n_paths: usize, n_nodes: usize, dim: usize) -> Self {
        Self { n_paths, n_nodes, dim, data: vec![T::zero(); n_paths * n_nodes * dim] }
    }

    pub fn from_fn(n_paths: usize, n_nodes: usize, dim: usize, f: impl Fn(usize, usize, usize) -> T + Sync) -> Self {
        let mut out = Self::zeros(n_paths, n_nodes, dim);
        out.par_paths_mut().enumerate().for_each(|(path, row)| {
            for node in 0..n_nodes {
                for c in 0..dim {
                    row[node * dim + c] = f(path, node, c);
                }
            }
        });
        out
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn path_len(&self) -> usize {
        self.n_nodes * self.dim
    }

    #[inline]
    pub fn at(&self, path: usize, node: usize) -> &[T] {
        let o = (path * self.n_nodes + node) * self.dim;
        &self.data[o..o + self.dim]
    }

    #[inline]
    pub fn at_mut(&mut self, path: usize, node: usize) -> &mut [T] {
        let o = (path * self.n_nodes + node) * self.dim;
        &mut self.data[o..o + self.dim]
    }

    pub fn path(&self, path: usize) -> &[T] {
        let l = self.path_len();
        &self.data[path * l..(path + 1) * l]
    }

    pub fn par_paths(&self) -> rayon::slice::Chunks<'_, T> {
        self.data.par_chunks(self.path_len().max(1))
    }

    pub fn par_paths_mut(&mut self) -> rayon::slice::ChunksMut<'_, T> {
        let l = self.path_len().max(1);
        self.data.par_chunks_mut(l)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        (self.n_paths, self.n_nodes, self.dim) == (other.n_paths, other.n_nodes, other.dim)
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T + Sync) -> Self {
        assert!(self.same_shape(other), "field shape mismatch");
        let data = self.data.par_iter().zip(other.data.par_iter()).map(|(&a, &b)| f(a, b)).collect();
        Self { data, ..*self }
    }

    pub fn map(&self, f: impl Fn(T) -> T + Sync) -> Self {
        Self { data: self.data.par_iter().map(|&a| f(a)).collect(), ..*self }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|a| a * s)
    }

    /// `self + s·other`.
    pub fn axpy(&self, s: T, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + s * b)
    }

    /// First `n` nodes of every path.
    pub fn truncate_nodes(&self, n: usize) -> Self {
        assert!(n <= self.n_nodes);
        Self::from_fn(self.n_paths, n, self.dim, |p, j, c| self.at(p, j)[c])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    /// Per-path `Σ_{node < nodes} |x|² dt`.
    pub fn path_sq_integrals(&self, dt: T, nodes: usize) -> Vec<T> {
        let nodes = nodes.min(self.n_nodes);
        let d = self.dim;
        self.par_paths()
            .map(|row| row[..nodes * d].iter().map(|&x| x * x).sum::<T>() * dt)
            .collect()
    }

    /// Monte Carlo squared 𝕙²-norm `E Σ_{node < nodes} |x|² dt`.
    pub fn h2_sq(&self, dt: T, nodes: usize) -> T {
        mean(&self.path_sq_integrals(dt, nodes))
    }
}

/// Mean with a fixed summation order.
pub fn mean<T: Real>(xs: &[T]) -> T {
    if xs.is_empty() {
        return T::zero();
    }
    pairwise_sum(xs) / from_usize(xs.len())
}

/// Pairwise summation, deterministic for a given input order.
pub fn pairwise_sum<T: Real>(xs: &[T]) -> T {
    if xs.len() <= 64 {
        return xs.iter().copied().fold(T::zero(), |a, b| a + b);
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Mean and standard error of the mean.
pub fn mean_se<T: Real>(xs: &[T]) -> (T, T) {
    let n = xs.len();
    let m = mean(xs);
    if n < 2 {
        return (m, T::zero());
    }
    let dev: Vec<T> = xs.iter().map(|&x| (x - m) * (x - m)).collect();
    let var = pairwise_sum(&dev) / from_usize(n - 1);
    (m, (var / from_usize(n)).sqrt())
}

/// Norm `sqrt(mean(x))` of per-path squared quantities, with a delta-method standard error.
pub fn root_mean_se<T: Real>(sq: &[T]) -> (T, T) {
    let (m, se) = mean_se(sq);
    let r = m.max(T::zero()).sqrt();
    if r <= T::min_positive_value() {
        // the norm is zero; bound its error by the root of the squared-mean error
        return (r, se.sqrt());
    }
    (r, se / (r + r))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_roundtrip() {
        let f = Field::<f64>::from_fn(3, 4, 2, |p, n, c| (100 * p + 10 * n + c) as f64);
        assert_eq!(f.at(2, 3), &[230.0, 231.0]);
        assert_eq!(f.path(1)[2], 110.0);
    }

    #[test]
    fn mean_se_known() {
        let (m, se) = mean_se(&[1.0f64, 2.0, 3.0, 4.0]);
        assert!((m - 2.5).abs() < 1e-15);
        // sample variance 5/3, SE = sqrt(5/12)
        assert!((se - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn h2_norm_of_constant() {
        let f = Field::<f64>::from_fn(5, 11, 1, |_, _, _| 2.0);
        // 10 cells, dt = 0.1: Σ 4·0.1 = 4
        assert!((f.h2_sq(0.1, 10) - 4.0).abs() < 1e-12);
    }
}
