//! Conditional expectations by cross-sectional least squares on per-node features.
//!
//! Features are built from exogenous quantities only (signal, price, filter output),
//! so every projector is a fixed linear map on the ensemble.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::field::Field;
use crate::filter::KalmanOutput;
use crate::linalg::{sym_eigen, Mat};
use crate::scalar::{cst, from_usize, Real};
use crate::sim::PathEnsemble;

/// Information set a process is adapted to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Info {
    /// Generated by observed prices (broker).
    Observation,
    /// Full market information (trader).
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSpec {
    /// 1: affine; 2: affine plus pairwise products.
    pub degree: usize,
    /// Relative spectral cutoff of the pseudo-inverse: eigenvalues of the standardized
    /// Gram matrix below `ridge·λ_max` are discarded, the rest are inverted exactly,
    /// so every projector stays an orthogonal projection.
    pub ridge: f64,
}

impl Default for BasisSpec {
    fn default() -> Self {
        Self { degree: 2, ridge: 1e-8 }
    }
}

/// Running left-endpoint integrals `Σ_{i<j} x_i dt` and `Σ_{i<j} (t_j − t_i) x_i dt`.
fn running_moments<T: Real>(x: &[T], k: usize, dt: T) -> (Vec<T>, Vec<T>) {
    let nodes = x.len() / k;
    let mut a1 = vec![T::zero(); x.len()];
    let mut a2 = vec![T::zero(); x.len()];
    for j in 0..nodes.saturating_sub(1) {
        for c in 0..k {
            a1[(j + 1) * k + c] = a1[j * k + c] + x[j * k + c] * dt;
            a2[(j + 1) * k + c] = a2[j * k + c] + dt * a1[(j + 1) * k + c];
        }
    }
    (a1, a2)
}

/// Observation features per node: α̂, z − z_0, and two running moments of α̂.
pub fn observation_features<T: Real>(ens: &PathEnsemble<T>, kf: &KalmanOutput<T>) -> Field<T> {
    let k = kf.mean.dim();
    let n1 = ens.grid.n_nodes();
    let dt = ens.grid.dt;
    let mut f = Field::zeros(ens.n_paths, n1, 4 * k);
    f.par_paths_mut().enumerate().for_each(|(p, row)| {
        let m = kf.mean.path(p);
        let z = ens.z.path(p);
        let (a1, a2) = running_moments(m, k, dt);
        for j in 0..n1 {
            let o = j * 4 * k;
            for c in 0..k {
                row[o + c] = m[j * k + c];
                row[o + k + c] = z[j * k + c] - z[c];
                row[o + 2 * k + c] = a1[j * k + c];
                row[o + 3 * k + c] = a2[j * k + c];
            }
        }
    });
    f
}

/// Full-information features: observation features plus α and its running moments.
pub fn full_features<T: Real>(ens: &PathEnsemble<T>, kf: &KalmanOutput<T>) -> Field<T> {
    let obs = observation_features(ens, kf);
    let k = kf.mean.dim();
    let n1 = ens.grid.n_nodes();
    let dt = ens.grid.dt;
    let mut f = Field::zeros(ens.n_paths, n1, 7 * k);
    f.par_paths_mut().enumerate().for_each(|(p, row)| {
        let a = ens.alpha.path(p);
        let (a1, a2) = running_moments(a, k, dt);
        for j in 0..n1 {
            let o = j * 7 * k;
            row[o..o + 4 * k].copy_from_slice(obs.at(p, j));
            for c in 0..k {
                row[o + 4 * k + c] = a[j * k + c];
                row[o + 5 * k + c] = a1[j * k + c];
                row[o + 6 * k + c] = a2[j * k + c];
            }
        }
    });
    f
}

/// Active base features followed (for degree 2) by their pairwise products.
fn expand<T: Real>(base: &[T], active: &[usize], degree: usize, out: &mut Vec<T>) {
    out.clear();
    out.extend(active.iter().map(|&i| base[i]));
    if degree >= 2 {
        for (a, &i) in active.iter().enumerate() {
            for &j in &active[a..] {
                out.push(base[i] * base[j]);
            }
        }
    }
}

fn varies<T: Real>(var_over_n: T, mean: T) -> bool {
    var_over_n.sqrt() > cst::<T>(1e-12) * (T::one() + mean.abs())
}

#[derive(Clone, Debug)]
struct NodeFit<T> {
    /// Base features that are not constant across paths.
    active: Vec<usize>,
    kept: Vec<usize>,
    mean: Vec<T>,
    inv_sd: Vec<T>,
    /// Whitened regressors `u_i = Λ^{-1/2}Vᵀz_i`, `n_paths × rank`, with `(1/n)Σ u_i u_iᵀ = I`.
    basis: Vec<T>,
    rank: usize,
    rank_deficient: bool,
}

/// Per-node projector onto the span of {1, features}.
#[derive(Clone, Debug)]
pub struct Projector<T> {
    pub info: Info,
    base: Field<T>,
    degree: usize,
    fits: Vec<NodeFit<T>>,
}

const CHUNK: usize = 512;

impl<T: Real> Projector<T> {
    pub fn new(info: Info, base: Field<T>, spec: BasisSpec) -> Self {
        let degree = spec.degree.clamp(1, 2);
        let ridge = cst::<T>(spec.ridge.max(0.0));
        let fits = (0..base.n_nodes()).into_par_iter().map(|j| fit_node(&base, j, degree, ridge)).collect();
        Self { info, base, degree, fits }
    }

    pub fn n_nodes(&self) -> usize {
        self.fits.len()
    }

    pub fn n_paths(&self) -> usize {
        self.base.n_paths()
    }

    /// Raw (unexpanded) features per node.
    pub fn base(&self) -> &Field<T> {
        &self.base
    }

    /// Number of regressors (including the constant) at `node`.
    pub fn n_regressors(&self, node: usize) -> usize {
        self.fits[node].kept.len() + 1
    }

    pub fn rank_deficient_nodes(&self) -> Vec<usize> {
        self.fits.iter().enumerate().filter(|(_, f)| f.rank_deficient).map(|(j, _)| j).collect()
    }

    fn standardized(&self, path: usize, node: usize, buf: &mut Vec<T>, out: &mut Vec<T>) {
        let fit = &self.fits[node];
        expand(self.base.at(path, node), &fit.active, self.degree, buf);
        out.clear();
        out.extend(fit.kept.iter().zip(fit.mean.iter().zip(&fit.inv_sd)).map(|(&i, (&m, &s))| (buf[i] - m) * s));
    }

    /// Fitted values at one node for `m` targets stored path-major in `y` (`n_paths × m`).
    pub fn project_node(&self, node: usize, y: &[T], m: usize) -> Vec<T> {
        let n = self.n_paths();
        let fit = &self.fits[node];
        let r = fit.rank;
        let nt = from_usize::<T>(n);
        let ybar: Vec<T> = (0..m)
            .map(|c| crate::field::pairwise_sum(&(0..n).map(|i| y[i * m + c]).collect::<Vec<_>>()) / nt)
            .collect();
        let mut out: Vec<T> = (0..n * m).map(|i| ybar[i % m]).collect();
        if r == 0 {
            return out;
        }
        // (1/n) Σ u_i y_iᵀ, accumulated chunk by chunk in a fixed order
        let mut coef = vec![T::zero(); r * m];
        let mut part = vec![T::zero(); r * m];
        for start in (0..n).step_by(CHUNK) {
            part.iter_mut().for_each(|x| *x = T::zero());
            for i in start..(start + CHUNK).min(n) {
                let u = &fit.basis[i * r..(i + 1) * r];
                let yi = &y[i * m..(i + 1) * m];
                for (l, &ul) in u.iter().enumerate() {
                    for c in 0..m {
                        part[l * m + c] += ul * yi[c];
                    }
                }
            }
            for (a, &b) in coef.iter_mut().zip(&part) {
                *a += b;
            }
        }
        coef.iter_mut().for_each(|x| *x /= nt);
        for i in 0..n {
            let u = &fit.basis[i * r..(i + 1) * r];
            for c in 0..m {
                let mut v = T::zero();
                for (l, &ul) in u.iter().enumerate() {
                    v += ul * coef[l * m + c];
                }
                out[i * m + c] += v;
            }
        }
        out
    }

    /// Node-wise projection of every component; node `j` of the target uses the fit at node `j`.
    pub fn project(&self, target: &Field<T>) -> Field<T> {
        assert_eq!(target.n_paths(), self.n_paths(), "projection path count mismatch");
        assert!(target.n_nodes() <= self.n_nodes(), "projection beyond the feature grid");
        let m = target.dim();
        let nodes: Vec<Vec<T>> = (0..target.n_nodes())
            .into_par_iter()
            .map(|j| {
                let mut y = Vec::with_capacity(target.n_paths() * m);
                for p in 0..target.n_paths() {
                    y.extend_from_slice(target.at(p, j));
                }
                self.project_node(j, &y, m)
            })
            .collect();
        let mut out = Field::zeros(target.n_paths(), target.n_nodes(), m);
        out.par_paths_mut().enumerate().for_each(|(p, row)| {
            for (j, vals) in nodes.iter().enumerate() {
                row[j * m..(j + 1) * m].copy_from_slice(&vals[p * m..(p + 1) * m]);
            }
        });
        out
    }

    /// Largest normalized normal-equation residual `|Zᵀ(y − ŷ)|/n` at `node`.
    pub fn normal_equation_residual(&self, node: usize, y: &[T]) -> T {
        let fitted = self.project_node(node, y, 1);
        let n = self.n_paths();
        let mut buf = Vec::new();
        let mut z = Vec::new();
        let p = self.fits[node].kept.len();
        let mut acc = vec![T::zero(); p + 1];
        for i in 0..n {
            self.standardized(i, node, &mut buf, &mut z);
            let r = y[i] - fitted[i];
            acc[0] += r;
            for (l, &zl) in z.iter().enumerate() {
                acc[l + 1] += zl * r;
            }
        }
        acc.iter().fold(T::zero(), |m, &a| m.max((a / from_usize(n)).abs()))
    }
}

fn fit_node<T: Real>(base: &Field<T>, node: usize, degree: usize, ridge: T) -> NodeFit<T> {
    let n = base.n_paths();
    let nt = from_usize::<T>(n);
    let nb = base.dim();
    let bmean: Vec<T> = (0..nb).map(|f| (0..n).map(|i| base.at(i, node)[f]).sum::<T>() / nt).collect();
    let active: Vec<usize> = (0..nb)
        .filter(|&f| {
            let v = (0..n).map(|i| (base.at(i, node)[f] - bmean[f]).powi(2)).sum::<T>() / nt;
            varies(v, bmean[f])
        })
        .collect();
    let mut buf = Vec::new();
    expand(base.at(0, node), &active, degree, &mut buf);
    let q = buf.len();
    let mut mean = vec![T::zero(); q];
    for i in 0..n {
        expand(base.at(i, node), &active, degree, &mut buf);
        for (m, &x) in mean.iter_mut().zip(&buf) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= nt);
    let mut var = vec![T::zero(); q];
    for i in 0..n {
        expand(base.at(i, node), &active, degree, &mut buf);
        for ((v, &x), &m) in var.iter_mut().zip(&buf).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    let kept: Vec<usize> = (0..q)
        .filter(|&i| varies(var[i] / nt, mean[i]))
        .collect();
    let inv_sd: Vec<T> = kept.iter().map(|&i| T::one() / (var[i] / nt).sqrt()).collect();
    let kmean: Vec<T> = kept.iter().map(|&i| mean[i]).collect();
    let p = kept.len();
    let mut gram = Mat::zeros(p, p);
    let mut z = vec![T::zero(); p];
    for i in 0..n {
        expand(base.at(i, node), &active, degree, &mut buf);
        for (l, &idx) in kept.iter().enumerate() {
            z[l] = (buf[idx] - kmean[l]) * inv_sd[l];
        }
        for a in 0..p {
            for b in a..p {
                gram[(a, b)] += z[a] * z[b];
            }
        }
    }
    for a in 0..p {
        for b in a..p {
            let v = gram[(a, b)] / nt;
            gram[(a, b)] = v;
            gram[(b, a)] = v;
        }
    }
    let (vals, vecs) = sym_eigen(&gram);
    let top = vals.last().copied().unwrap_or(T::zero());
    let cutoff = ridge.max(cst(1e-12)) * top;
    let rank_deficient = vals.iter().any(|&lam| lam <= cutoff);
    let keep: Vec<usize> = (0..p).filter(|&l| vals[l] > cutoff).collect();
    let rank = keep.len();
    let scale: Vec<T> = keep.iter().map(|&l| T::one() / vals[l].sqrt()).collect();
    let mut basis = vec![T::zero(); n * rank];
    for i in 0..n {
        expand(base.at(i, node), &active, degree, &mut buf);
        for (l, &idx) in kept.iter().enumerate() {
            z[l] = (buf[idx] - kmean[l]) * inv_sd[l];
        }
        for (o, (&e, &w)) in keep.iter().zip(&scale).enumerate() {
            let mut v = T::zero();
            for a in 0..p {
                v += vecs[(a, e)] * z[a];
            }
            basis[i * rank + o] = v * w;
        }
    }
    NodeFit { active, kept, mean: kmean, inv_sd, basis, rank, rank_deficient }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_base(n: usize) -> Field<f64> {
        // two features per node, deterministic pseudo-random
        Field::from_fn(n, 3, 2, |p, j, c| (((p * 37 + j * 11 + c * 5) % 101) as f64 / 50.0 - 1.0) * (1.0 + c as f64))
    }

    #[test]
    fn idempotent_on_span() {
        let base = toy_base(400);
        let pr = Projector::new(Info::Observation, base.clone(), BasisSpec { degree: 2, ridge: 0.0 });
        let target = Field::from_fn(400, 3, 1, |p, j, _| {
            let x = base.at(p, j);
            1.0 + 2.0 * x[0] - 0.5 * x[1] + 0.3 * x[0] * x[1]
        });
        let fit = pr.project(&target);
        assert!(fit.sub(&target).max_abs() < 1e-8);
        let again = pr.project(&fit);
        assert!(again.sub(&fit).max_abs() < 1e-8);
    }

    #[test]
    fn zero_and_constant_targets() {
        let pr = Projector::new(Info::Full, toy_base(100), BasisSpec::default());
        let zero = Field::zeros(100, 3, 1);
        assert_eq!(pr.project(&zero).max_abs(), 0.0);
        let c = Field::from_fn(100, 3, 2, |_, _, c| 3.0 + c as f64);
        assert!(pr.project(&c).sub(&c).max_abs() < 1e-12);
    }

    #[test]
    fn constant_features_are_dropped() {
        let base = Field::from_fn(50, 2, 1, |p, j, _| if j == 0 { 1.0 } else { p as f64 });
        let pr = Projector::new(Info::Observation, base, BasisSpec::default());
        assert_eq!(pr.n_regressors(0), 1);
        assert_eq!(pr.n_regressors(1), 3);
        assert!(pr.rank_deficient_nodes().is_empty());
    }
}
