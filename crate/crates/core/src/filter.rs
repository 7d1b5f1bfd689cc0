//! Broker-side signal filtering: discrete Kalman recursion and a bootstrap particle oracle.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{mean, mean_se, Field};
use crate::linalg::{inverse, psd_sqrt, Mat};
use crate::model::{ModelParams, TimeGrid};
use crate::scalar::{cst, from_usize, to_f64, Real};
use crate::sim::{normal, stream_rng, OuStep, PathEnsemble, DOMAIN_PARTICLES};

/// Conditional law of α_t given price observations up to `t`, on every node.
#[derive(Clone, Debug)]
pub struct KalmanOutput<T> {
    /// α̂ per node.
    pub mean: Field<T>,
    /// Conditional covariance per node (path independent).
    pub cov: Vec<Mat<T>>,
    /// Innovation covariance per cell.
    pub innovation_cov: Vec<Mat<T>>,
}

/// Deterministic part of the recursion: covariances and gains.
struct Gains<T> {
    cov: Vec<Mat<T>>,
    innovation_cov: Vec<Mat<T>>,
    gain: Vec<Mat<T>>,
}

fn gains<T: Real>(params: &ModelParams<T>, grid: &TimeGrid<T>, ou: &OuStep<T>) -> Result<Gains<T>> {
    let dt = grid.dt;
    let r = params.sigma.matmul(&params.sigma.transpose()).scale(dt);
    inverse(&r).map_err(|_| Error::Singular("σσᵀdt is not invertible".into()))?;
    let mut p = params.signal.alpha0_var.clone();
    let mut cov = Vec::with_capacity(grid.n_steps + 1);
    let mut innovation_cov = Vec::with_capacity(grid.n_steps);
    let mut gain = Vec::with_capacity(grid.n_steps);
    for _ in 0..grid.n_steps {
        cov.push(p.clone());
        let s = p.scale(dt * dt).add(&r);
        let g = p.scale(dt).matmul(&inverse(&s)?);
        let p_post = p.sub(&g.matmul(&p).scale(dt)).symmetrized();
        p = ou.mean_map.matmul(&p_post).matmul(&ou.mean_map.transpose()).add(&ou.cov).symmetrized();
        innovation_cov.push(s);
        gain.push(g);
    }
    cov.push(p);
    Ok(Gains { cov, innovation_cov, gain })
}

/// Kalman recursion for `Δz_k = α_k dt + σ ΔW_k` with exact OU prediction;
/// the mean at node `k` conditions on `z_0, …, z_k`.
pub fn kalman_filter<T: Real>(params: &ModelParams<T>, ens: &PathEnsemble<T>) -> Result<KalmanOutput<T>> {
    let grid = &ens.grid;
    let ou = OuStep::new(params, grid.dt)?;
    let g = gains(params, grid, &ou)?;
    let (k, n, dt) = (params.k, grid.n_steps, grid.dt);
    let theta = &params.signal.theta;
    let mut m = Field::zeros(ens.n_paths, n + 1, k);
    m.par_paths_mut().enumerate().for_each(|(path, row)| {
        row[..k].copy_from_slice(&params.signal.alpha0_mean);
        let mut innov = vec![T::zero(); k];
        let mut upd = vec![T::zero(); k];
        let mut dev = vec![T::zero(); k];
        for j in 0..n {
            for c in 0..k {
                innov[c] = ens.z.at(path, j + 1)[c] - ens.z.at(path, j)[c] - row[j * k + c] * dt;
            }
            g.gain[j].mul_vec_into(&innov, &mut upd);
            for c in 0..k {
                dev[c] = row[j * k + c] + upd[c] - theta[c];
            }
            let (_, next) = row.split_at_mut((j + 1) * k);
            ou.mean_map.mul_vec_into(&dev, &mut next[..k]);
            for c in 0..k {
                next[c] += theta[c];
            }
        }
    });
    Ok(KalmanOutput { mean: m, cov: g.cov, innovation_cov: g.innovation_cov })
}

/// Innovations `Δz_k − α̂_k dt` per cell.
pub fn innovations<T: Real>(ens: &PathEnsemble<T>, kf: &KalmanOutput<T>) -> Field<T> {
    let dt = ens.grid.dt;
    let k = kf.mean.dim();
    Field::from_fn(ens.n_paths, ens.grid.n_steps, k, |p, j, c| {
        ens.z.at(p, j + 1)[c] - ens.z.at(p, j)[c] - kf.mean.at(p, j)[c] * dt
    })
}

/// Innovations of the first component scaled to unit variance, one path.
pub fn standardized_innovations<T: Real>(ens: &PathEnsemble<T>, kf: &KalmanOutput<T>, path: usize) -> Vec<T> {
    let inn = innovations(ens, kf);
    (0..ens.grid.n_steps).map(|j| inn.at(path, j)[0] / kf.innovation_cov[j][(0, 0)].sqrt()).collect()
}

/// Sample autocorrelation at `lag`.
pub fn autocorrelation<T: Real>(xs: &[T], lag: usize) -> T {
    let n = xs.len();
    if lag >= n {
        return T::zero();
    }
    let m = mean(xs);
    let var: T = xs.iter().map(|&x| (x - m) * (x - m)).sum();
    if var <= T::zero() {
        return T::zero();
    }
    let cov: T = (0..n - lag).map(|i| (xs[i] - m) * (xs[i + lag] - m)).sum();
    cov / var
}

/// Stationary variance of the discrete scalar recursion: the positive root of
/// `dt P² + (σ²(1 − F²) − Q dt) P − Q σ² = 0`.
pub fn stationary_variance_discrete(kappa: f64, sigma_alpha: f64, sigma: f64, dt: f64) -> f64 {
    let f = (-kappa * dt).exp();
    let q = if kappa.abs() < 1e-14 {
        sigma_alpha * sigma_alpha * dt
    } else {
        sigma_alpha * sigma_alpha * (1.0 - f * f) / (2.0 * kappa)
    };
    let s2 = sigma * sigma;
    let bq = s2 * (1.0 - f * f) - q * dt;
    (-bq + (bq * bq + 4.0 * dt * q * s2).sqrt()) / (2.0 * dt)
}

/// Stationary variance of the continuous filter: root of `−2κP + σ_α² − P²/σ² = 0`.
pub fn stationary_variance_continuous(kappa: f64, sigma_alpha: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    s2 * (-kappa + (kappa * kappa + sigma_alpha * sigma_alpha / s2).sqrt())
}

/// Particle estimate of E[α_t | price path], with Monte Carlo standard errors
/// taken from the dispersion of independent particle groups.
#[derive(Clone, Debug, Serialize)]
pub struct ParticleOutput {
    pub mean: Vec<Vec<f64>>,
    pub std_error: Vec<Vec<f64>>,
    pub n_particles: usize,
    pub n_groups: usize,
    pub warnings: Vec<String>,
}

pub fn particle_filter_oracle<T: Real>(
    params: &ModelParams<T>,
    grid: &TimeGrid<T>,
    z_path: &[Vec<T>],
    n_particles: usize,
    n_groups: usize,
    seed: u64,
) -> Result<ParticleOutput> {
    let (k, n, dt) = (params.k, grid.n_steps, grid.dt);
    if z_path.len() != n + 1 || z_path.iter().any(|z| z.len() != k) {
        return Err(Error::Shape("price path must have N+1 nodes of K components".into()));
    }
    if n_groups < 2 || n_particles < n_groups {
        return Err(Error::InvalidArgument("need at least two particle groups".into()));
    }
    let ou = OuStep::new(params, dt)?;
    let r_inv = inverse(&params.sigma.matmul(&params.sigma.transpose()).scale(dt))
        .map_err(|_| Error::Singular("σσᵀdt is not invertible".into()))?;
    let init_sqrt = psd_sqrt(&params.signal.alpha0_var);
    let per_group = n_particles / n_groups;
    let theta = &params.signal.theta;

    let results: Vec<(Vec<Vec<T>>, Option<String>)> = (0..n_groups)
        .into_par_iter()
        .map(|group| {
            let mut rng = stream_rng(seed, DOMAIN_PARTICLES, group as u64);
            let mut parts: Vec<Vec<T>> = (0..per_group)
                .map(|_| {
                    let xi: Vec<T> = (0..k).map(|_| normal(&mut rng)).collect();
                    let d = init_sqrt.mul_vec(&xi);
                    (0..k).map(|c| params.signal.alpha0_mean[c] + d[c]).collect()
                })
                .collect();
            let mut logw = vec![T::zero(); per_group];
            let mut every_step = false;
            let mut warning = None;
            let mut means = Vec::with_capacity(n + 1);
            means.push(weighted_mean(&parts, &normalized(&logw), k));
            for j in 0..n {
                let dz: Vec<T> = (0..k).map(|c| z_path[j + 1][c] - z_path[j][c]).collect();
                for (lw, a) in logw.iter_mut().zip(&parts) {
                    let e: Vec<T> = (0..k).map(|c| dz[c] - a[c] * dt).collect();
                    *lw -= cst::<T>(0.5) * r_inv.quad(&e, &e);
                }
                let w = normalized(&logw);
                let ess = T::one() / w.iter().map(|&x| x * x).sum::<T>();
                let np = from_usize::<T>(per_group);
                if ess < cst::<T>(0.01) * np && !every_step {
                    every_step = true;
                    warning = Some(format!("group {group}: ESS below 1% at step {j}; resampling every step"));
                }
                if every_step || ess < cst::<T>(0.5) * np {
                    parts = systematic_resample(&parts, &w, &mut rng);
                    logw.iter_mut().for_each(|x| *x = T::zero());
                }
                for a in parts.iter_mut() {
                    let dev: Vec<T> = (0..k).map(|c| a[c] - theta[c]).collect();
                    let xi: Vec<T> = (0..k).map(|_| normal(&mut rng)).collect();
                    let m = ou.mean_map.mul_vec(&dev);
                    let s = ou.cov_sqrt.mul_vec(&xi);
                    for c in 0..k {
                        a[c] = theta[c] + m[c] + s[c];
                    }
                }
                means.push(weighted_mean(&parts, &normalized(&logw), k));
            }
            (means, warning)
        })
        .collect();

    let mut mean_out = vec![vec![0.0; k]; n + 1];
    let mut se_out = vec![vec![0.0; k]; n + 1];
    for j in 0..=n {
        for c in 0..k {
            let xs: Vec<T> = results.iter().map(|(m, _)| m[j][c]).collect();
            let (m, se) = mean_se(&xs);
            mean_out[j][c] = to_f64(m);
            se_out[j][c] = to_f64(se);
        }
    }
    let warnings = results.into_iter().filter_map(|(_, w)| w).collect();
    Ok(ParticleOutput { mean: mean_out, std_error: se_out, n_particles: per_group * n_groups, n_groups, warnings })
}

fn normalized<T: Real>(logw: &[T]) -> Vec<T> {
    let mx = logw.iter().copied().fold(T::neg_infinity(), T::max);
    let w: Vec<T> = logw.iter().map(|&l| (l - mx).exp()).collect();
    let s: T = w.iter().copied().sum();
    w.into_iter().map(|x| x / s).collect()
}

fn weighted_mean<T: Real>(parts: &[Vec<T>], w: &[T], k: usize) -> Vec<T> {
    (0..k).map(|c| parts.iter().zip(w).map(|(a, &wi)| a[c] * wi).sum()).collect()
}

fn systematic_resample<T: Real>(parts: &[Vec<T>], w: &[T], rng: &mut impl Rng) -> Vec<Vec<T>> {
    let n = parts.len();
    let u0: f64 = rng.gen::<f64>() / n as f64;
    let mut out = Vec::with_capacity(n);
    let mut cum = to_f64(w[0]);
    let mut i = 0;
    for m in 0..n {
        let u = u0 + m as f64 / n as f64;
        while u > cum && i + 1 < n {
            i += 1;
            cum += to_f64(w[i]);
        }
        out.push(parts[i].clone());
    }
    out
}

/// Filter diagnostics per node: covariance and cross-sectional innovation moments.
#[derive(Clone, Debug, Serialize)]
pub struct FilterDiagnosticsRow {
    pub t: f64,
    pub cov: Vec<f64>,
    pub innovation_mean: f64,
    pub innovation_var: f64,
}

pub fn filter_diagnostics<T: Real>(ens: &PathEnsemble<T>, kf: &KalmanOutput<T>) -> Vec<FilterDiagnosticsRow> {
    let inn = innovations(ens, kf);
    (0..=ens.grid.n_steps)
        .map(|j| {
            let (im, iv) = if j < ens.grid.n_steps {
                let xs: Vec<T> = (0..ens.n_paths).map(|p| inn.at(p, j)[0]).collect();
                let m = mean(&xs);
                let v = mean(&xs.iter().map(|&x| (x - m) * (x - m)).collect::<Vec<_>>());
                (to_f64(m), to_f64(v))
            } else {
                (0.0, 0.0)
            };
            FilterDiagnosticsRow {
                t: to_f64(ens.grid.times[j]),
                cov: kf.cov[j].as_slice().iter().map(|&x| to_f64(x)).collect(),
                innovation_mean: im,
                innovation_var: iv,
            }
        })
        .collect()
}
