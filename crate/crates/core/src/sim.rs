//! Path ensembles of the signal, unimpacted price and derived market states.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::linalg::{matrix_exp, psd_sqrt, Mat};
use crate::model::{ensure_valid, ModelParams, TimeGrid};
use crate::scalar::{cst, Real};

/// Independent random stream keyed by `(seed, domain, index)`.
pub fn stream_rng(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut x = seed ^ domain.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    // splitmix64 finaliser
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^= x >> 31;
    let mut rng = ChaCha8Rng::seed_from_u64(x);
    rng.set_stream(index);
    rng
}

pub const DOMAIN_PATHS: u64 = 1;
pub const DOMAIN_PARTICLES: u64 = 2;
pub const DOMAIN_PROBES: u64 = 3;

#[inline]
pub fn normal<T: Real>(rng: &mut ChaCha8Rng) -> T {
    let x: f64 = StandardNormal.sample(rng);
    cst(x)
}

/// Exact one-step transition of the OU signal.
#[derive(Clone, Debug)]
pub struct OuStep<T> {
    /// `e^{−κ dt}`.
    pub mean_map: Mat<T>,
    pub cov: Mat<T>,
    pub cov_sqrt: Mat<T>,
}

impl<T: Real> OuStep<T> {
    pub fn new(params: &ModelParams<T>, dt: T) -> Result<Self> {
        let k = params.k;
        let s = &params.signal;
        let ss = s.sigma_alpha.matmul(&s.sigma_alpha.transpose());
        // Van Loan block exponential
        let mut m = Mat::zeros(2 * k, 2 * k);
        for i in 0..k {
            for j in 0..k {
                m[(i, j)] = s.kappa[(i, j)];
                m[(i, k + j)] = ss[(i, j)];
                m[(k + i, k + j)] = -s.kappa[(j, i)];
            }
        }
        let e = matrix_exp(&m, dt)?;
        let mut e12 = Mat::zeros(k, k);
        let mut e22 = Mat::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                e12[(i, j)] = e[(i, k + j)];
                e22[(i, j)] = e[(k + i, k + j)];
            }
        }
        let mean_map = e22.transpose();
        let cov = mean_map.matmul(&e12).symmetrized();
        let cov_sqrt = psd_sqrt(&cov);
        Ok(Self { mean_map, cov, cov_sqrt })
    }
}

/// Simulated exogenous randomness: signal, unimpacted price, Brownian increments.
#[derive(Clone, Debug)]
pub struct PathEnsemble<T> {
    pub grid: TimeGrid<T>,
    pub n_paths: usize,
    pub seed: u64,
    /// α per node, `K` components.
    pub alpha: Field<T>,
    /// z per node, `K` components.
    pub z: Field<T>,
    /// ΔW per cell, `D` components.
    pub dw: Field<T>,
}

pub fn simulate_signal_and_price<T: Real>(
    params: &ModelParams<T>,
    grid: &TimeGrid<T>,
    n_paths: usize,
    seed: u64,
) -> Result<PathEnsemble<T>> {
    ensure_valid(params)?;
    if n_paths == 0 {
        return Err(Error::InvalidArgument("n_paths must be positive".into()));
    }
    let (k, d, n) = (params.k, params.d, grid.n_steps);
    let dt = grid.dt;
    let sqrt_dt = dt.sqrt();
    let ou = OuStep::new(params, dt)?;
    let init_sqrt = psd_sqrt(&params.signal.alpha0_var);
    let theta = &params.signal.theta;

    let mut alpha = Field::zeros(n_paths, n + 1, k);
    let mut z = Field::zeros(n_paths, n + 1, k);
    let mut dw = Field::zeros(n_paths, n, d);
    alpha
        .par_paths_mut()
        .zip(z.par_paths_mut())
        .zip(dw.par_paths_mut())
        .enumerate()
        .for_each(|(path, ((a_row, z_row), w_row))| {
            let mut rng = stream_rng(seed, DOMAIN_PATHS, path as u64);
            let mut xi = vec![T::zero(); k];
            let mut tmp = vec![T::zero(); k];
            let mut dev = vec![T::zero(); k];
            let mut w = vec![T::zero(); d];
            for x in xi.iter_mut() {
                *x = normal(&mut rng);
            }
            init_sqrt.mul_vec_into(&xi, &mut tmp);
            for c in 0..k {
                a_row[c] = params.signal.alpha0_mean[c] + tmp[c];
                z_row[c] = params.z0[c];
            }
            for step in 0..n {
                for x in xi.iter_mut() {
                    *x = normal(&mut rng);
                }
                for x in w.iter_mut() {
                    *x = normal::<T>(&mut rng) * sqrt_dt;
                }
                w_row[step * d..(step + 1) * d].copy_from_slice(&w);
                let (cur, next) = a_row.split_at_mut((step + 1) * k);
                let cur = &cur[step * k..];
                for c in 0..k {
                    dev[c] = cur[c] - theta[c];
                }
                ou.mean_map.mul_vec_into(&dev, &mut tmp);
                let mut noise = vec![T::zero(); k];
                ou.cov_sqrt.mul_vec_into(&xi, &mut noise);
                for c in 0..k {
                    next[c] = theta[c] + tmp[c] + noise[c];
                }
                params.sigma.mul_vec_into(&w, &mut tmp);
                for c in 0..k {
                    z_row[(step + 1) * k + c] = z_row[step * k + c] + cur[c] * dt + tmp[c];
                }
            }
        });
    if !(alpha.is_finite() && z.is_finite()) {
        return Err(Error::NonFinite("simulated paths".into()));
    }
    Ok(PathEnsemble { grid: grid.clone(), n_paths, seed, alpha, z, dw })
}

/// `Y_{k+1} = e^{−p dt}(Y_k + h ν_k dt)`, i.e. the left-endpoint sum
/// `Y_{t_k} = e^{−t_k p} y + Σ_{j<k} e^{(t_j−t_k)p} h ν_j dt`.
pub fn impact_from<T: Real>(nu: &Field<T>, h: &Mat<T>, y0: &[T], decay_step: &Mat<T>, dt: T) -> Field<T> {
    let (np, n, k) = (nu.n_paths(), nu.n_nodes(), nu.dim());
    let mut y = Field::zeros(np, n + 1, k);
    y.par_paths_mut().enumerate().for_each(|(path, row)| {
        row[..k].copy_from_slice(y0);
        let mut hv = vec![T::zero(); k];
        let mut acc = vec![T::zero(); k];
        for j in 0..n {
            h.mul_vec_into(nu.at(path, j), &mut hv);
            for c in 0..k {
                acc[c] = row[j * k + c] + hv[c] * dt;
            }
            let (_, next) = row.split_at_mut((j + 1) * k);
            decay_step.mul_vec_into(&acc, &mut next[..k]);
        }
    });
    y
}

pub fn propagate_transient_impact<T: Real>(
    params: &ModelParams<T>,
    grid: &TimeGrid<T>,
    nu: &Field<T>,
) -> Result<Field<T>> {
    check_strategy(nu, grid, params.k, "nu")?;
    let decay = matrix_exp(&params.p, -grid.dt)?;
    Ok(impact_from(nu, &params.h, &params.y0, &decay, grid.dt))
}

pub(crate) fn check_strategy<T: Real>(s: &Field<T>, grid: &TimeGrid<T>, k: usize, name: &str) -> Result<()> {
    if s.n_nodes() != grid.n_steps || s.dim() != k {
        return Err(Error::Shape(format!(
            "{name}: expected {} cells × {k}, got {} × {}",
            grid.n_steps,
            s.n_nodes(),
            s.dim()
        )));
    }
    if !s.is_finite() {
        return Err(Error::NonFinite(name.into()));
    }
    Ok(())
}

/// Forward Euler inventory from a rate: `Q_{k+1} = Q_k + rate_k dt`.
pub fn integrate_rate<T: Real>(rate: &Field<T>, q0: &[T], dt: T) -> Field<T> {
    let (np, n, k) = (rate.n_paths(), rate.n_nodes(), rate.dim());
    let mut q = Field::zeros(np, n + 1, k);
    q.par_paths_mut().enumerate().for_each(|(path, row)| {
        row[..k].copy_from_slice(q0);
        for j in 0..n {
            let r = rate.at(path, j);
            for c in 0..k {
                row[(j + 1) * k + c] = row[j * k + c] + r[c] * dt;
            }
        }
    });
    q
}

/// Inventories and cash of both agents on every node.
#[derive(Clone, Debug)]
pub struct Books<T> {
    pub q_b: Field<T>,
    pub q_i: Field<T>,
    pub x_b: Field<T>,
    pub x_i: Field<T>,
}

pub fn propagate_inventories_and_cash<T: Real>(
    params: &ModelParams<T>,
    grid: &TimeGrid<T>,
    nu: &Field<T>,
    eta: &Field<T>,
    z: &Field<T>,
    y: &Field<T>,
) -> Result<Books<T>> {
    let k = params.k;
    check_strategy(nu, grid, k, "nu")?;
    check_strategy(eta, grid, k, "eta")?;
    let n = grid.n_steps;
    for (name, f) in [("z", z), ("Y", y)] {
        if f.n_nodes() != n + 1 || f.dim() != k || f.n_paths() != nu.n_paths() {
            return Err(Error::Shape(format!("{name} must have {} nodes × {k}", n + 1)));
        }
    }
    if eta.n_paths() != nu.n_paths() {
        return Err(Error::Shape("strategy path counts differ".into()));
    }
    let dt = grid.dt;
    let flow = nu.sub(eta);
    let q_b = integrate_rate(&flow, &params.q_b0, dt);
    let q_i = integrate_rate(eta, &params.q_i0, dt);
    let np = nu.n_paths();
    let mut x_b = Field::zeros(np, n + 1, 1);
    let mut x_i = Field::zeros(np, n + 1, 1);
    x_b.par_paths_mut().zip(x_i.par_paths_mut()).enumerate().for_each(|(path, (xb, xi))| {
        xb[0] = params.x_b0;
        xi[0] = params.x_i0;
        let mut s = vec![T::zero(); k];
        for j in 0..n {
            let (v, e) = (nu.at(path, j), eta.at(path, j));
            for c in 0..k {
                s[c] = y.at(path, j)[c] + z.at(path, j)[c];
            }
            let sv: T = (0..k).map(|c| s[c] * v[c]).sum();
            let se: T = (0..k).map(|c| s[c] * e[c]).sum();
            let bought_i = se + params.b.quad(e, e);
            let paid_b = sv + params.a.quad(v, v);
            xb[j + 1] = xb[j] + (bought_i - paid_b) * dt;
            xi[j + 1] = xi[j] - bought_i * dt;
        }
    });
    Ok(Books { q_b, q_i, x_b, x_i })
}

/// Full market state along given strategies.
#[derive(Clone, Debug)]
pub struct MarketStates<T> {
    pub y: Field<T>,
    pub s: Field<T>,
    pub books: Books<T>,
}

pub fn market_states<T: Real>(
    params: &ModelParams<T>,
    ens: &PathEnsemble<T>,
    nu: &Field<T>,
    eta: &Field<T>,
) -> Result<MarketStates<T>> {
    let y = propagate_transient_impact(params, &ens.grid, nu)?;
    let s = y.add(&ens.z);
    let books = propagate_inventories_and_cash(params, &ens.grid, nu, eta, &ens.z, &y)?;
    Ok(MarketStates { y, s, books })
}

/// Parallel-safe check that every value of `f` at a node is identical across paths.
pub fn node_is_deterministic<T: Real>(f: &Field<T>, node: usize) -> bool {
    let first = f.at(0, node).to_vec();
    (0..f.n_paths()).into_par_iter().all(|p| f.at(p, node) == first.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ScalarSpec;

    #[test]
    fn deterministic_drift_without_noise() {
        let params: ModelParams<f64> = ScalarSpec {
            sigma: 0.0,
            alpha0_mean: 0.3,
            z0: 1.0,
            ..ScalarSpec::trivial()
        }
        .build();
        let grid = TimeGrid::new(1.0, 50).unwrap();
        let ens = simulate_signal_and_price(&params, &grid, 3, 1).unwrap();
        for p in 0..3 {
            for (j, &t) in grid.times.iter().enumerate() {
                assert!((ens.z.at(p, j)[0] - (1.0 + 0.3 * t)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn deterministic_ou_decay() {
        let params: ModelParams<f64> =
            ScalarSpec { kappa: 1.0, alpha0_mean: 1.0, ..ScalarSpec::trivial() }.build();
        let grid = TimeGrid::new(2.0, 40).unwrap();
        let ens = simulate_signal_and_price(&params, &grid, 2, 9).unwrap();
        for (j, &t) in grid.times.iter().enumerate() {
            assert!((ens.alpha.at(1, j)[0] - (-t).exp()).abs() < 1e-13);
        }
    }

    #[test]
    fn ou_step_variance_matches_scalar_formula() {
        let params: ModelParams<f64> =
            ScalarSpec { kappa: 2.0, sigma_alpha: 0.7, ..ScalarSpec::trivial() }.build();
        let s = OuStep::new(&params, 0.1).unwrap();
        let want = 0.49 * (1.0 - (-0.4f64).exp()) / 4.0;
        assert!((s.cov[(0, 0)] - want).abs() < 1e-15);
        assert!((s.mean_map[(0, 0)] - (-0.2f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn same_seed_same_paths() {
        let params: ModelParams<f64> = ScalarSpec::baseline().build();
        let grid = TimeGrid::new(0.25, 20).unwrap();
        let a = simulate_signal_and_price(&params, &grid, 50, 7).unwrap();
        let b = simulate_signal_and_price(&params, &grid, 50, 7).unwrap();
        assert_eq!(a.alpha, b.alpha);
        assert_eq!(a.z, b.z);
        let c = simulate_signal_and_price(&params, &grid, 50, 8).unwrap();
        assert_ne!(a.z, c.z);
    }

    #[test]
    fn impact_homogeneous_and_linear() {
        let mut params: ModelParams<f64> = ScalarSpec { p: 0.7, h: 1.0, phi: 1.0, ..ScalarSpec::trivial() }.build();
        params.y0 = vec![2.0];
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let y = propagate_transient_impact(&params, &grid, &Field::zeros(1, 10, 1)).unwrap();
        for (j, &t) in grid.times.iter().enumerate() {
            assert!((y.at(0, j)[0] - 2.0 * (-0.7 * t).exp()).abs() < 1e-14);
        }
        params.p = Mat::scalar(0.0);
        params.y0 = vec![0.0];
        let nu = Field::from_fn(1, 10, 1, |_, _, _| 2.0);
        let y = propagate_transient_impact(&params, &grid, &nu).unwrap();
        assert!((y.at(0, 10)[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn inventories_and_cash_constant_rate() {
        let params: ModelParams<f64> = ScalarSpec { q_b0: 0.5, ..ScalarSpec::trivial() }.build();
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let nu = Field::from_fn(1, 8, 1, |_, _, _| 1.0);
        let eta = Field::zeros(1, 8, 1);
        let zero = Field::zeros(1, 9, 1);
        let books = propagate_inventories_and_cash(&params, &grid, &nu, &eta, &zero, &zero).unwrap();
        for (j, &t) in grid.times.iter().enumerate() {
            assert!((books.x_b.at(0, j)[0] + t).abs() < 1e-14);
            assert!((books.q_b.at(0, j)[0] - (0.5 + t)).abs() < 1e-14);
            assert_eq!(books.q_i.at(0, j)[0], 0.0);
        }
    }
}
