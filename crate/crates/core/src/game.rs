//! Everything a solver needs about one simulated market, computed once.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::filter::{kalman_filter, KalmanOutput};
use crate::linalg::Mat;
use crate::model::{contraction_constant, ensure_valid, Derived, ModelParams};
use crate::projection::{full_features, observation_features, BasisSpec, Info, Projector};
use crate::scalar::{cst, from_usize, Real};
use crate::sim::{stream_rng, PathEnsemble, DOMAIN_PROBES};

#[derive(Clone, Debug)]
pub struct Game<T> {
    pub params: ModelParams<T>,
    pub derived: Derived<T>,
    pub ens: Arc<PathEnsemble<T>>,
    pub kalman: Arc<KalmanOutput<T>>,
    pub obs: Arc<Projector<T>>,
    pub full: Arc<Projector<T>>,
    /// `Σ_{k>j} e^{−κ(t_k − t_j)} dt` per cell `j`.
    pub alpha_tail: Arc<Vec<Mat<T>>>,
}

impl<T: Real> Game<T> {
    pub fn new(params: ModelParams<T>, ens: PathEnsemble<T>, basis: BasisSpec) -> Result<Self> {
        ensure_valid(&params)?;
        if ens.alpha.dim() != params.k || ens.dw.dim() != params.d {
            return Err(Error::Shape("ensemble dimensions disagree with parameters".into()));
        }
        let kalman = kalman_filter(&params, &ens)?;
        let obs = Projector::new(Info::Observation, observation_features(&ens, &kalman), basis);
        let full = Projector::new(Info::Full, full_features(&ens, &kalman), basis);
        let derived = Derived::new(&params, &ens.grid)?;
        let n = ens.grid.n_steps;
        let dt = ens.grid.dt;
        let mut tail = vec![Mat::zeros(params.k, params.k); n];
        for j in (0..n.saturating_sub(1)).rev() {
            // S_j = F (dt I + S_{j+1})
            let inner = Mat::identity(params.k).scale(dt).add(&tail[j + 1]);
            tail[j] = derived.ou_step.matmul(&inner);
        }
        Ok(Self {
            params,
            derived,
            ens: Arc::new(ens),
            kalman: Arc::new(kalman),
            obs: Arc::new(obs),
            full: Arc::new(full),
            alpha_tail: Arc::new(tail),
        })
    }

    /// Same market and projectors with different game constants (signal, σ and grid unchanged).
    pub fn with_params(&self, params: ModelParams<T>) -> Result<Self> {
        ensure_valid(&params)?;
        if params.signal != self.params.signal || params.sigma != self.params.sigma || params.horizon != self.params.horizon {
            return Err(Error::InvalidArgument("signal, σ and horizon must match the simulated market".into()));
        }
        Ok(Self { derived: Derived::new(&params, &self.ens.grid)?, params, ..self.clone() })
    }

    /// Same game with a scalar impact strength `h·I`.
    pub fn with_impact(&self, h: T) -> Result<Self> {
        let mut p = self.params.clone();
        p.h = Mat::identity(p.k).scale(h);
        self.with_params(p)
    }

    pub fn n_paths(&self) -> usize {
        self.ens.n_paths
    }

    pub fn n_steps(&self) -> usize {
        self.ens.grid.n_steps
    }

    pub fn dt(&self) -> T {
        self.ens.grid.dt
    }

    pub fn k(&self) -> usize {
        self.params.k
    }

    pub fn contraction_constant(&self) -> Result<T> {
        contraction_constant(&self.params)
    }

    pub fn projector(&self, info: Info) -> &Projector<T> {
        match info {
            Info::Observation => &self.obs,
            Info::Full => &self.full,
        }
    }

    /// `E[Σ_{k>j} α_k dt | info at j]` per cell, exact under the OU law.
    pub fn alpha_tail_expectation(&self, info: Info) -> Field<T> {
        let (k, n, dt) = (self.k(), self.n_steps(), self.dt());
        let theta = &self.params.signal.theta;
        let src = match info {
            Info::Observation => &self.kalman.mean,
            Info::Full => &self.ens.alpha,
        };
        let mut out = Field::zeros(self.n_paths(), n, k);
        out.par_paths_mut().enumerate().for_each(|(p, row)| {
            let mut dev = vec![T::zero(); k];
            let mut tmp = vec![T::zero(); k];
            for j in 0..n {
                let m = src.at(p, j);
                for c in 0..k {
                    dev[c] = m[c] - theta[c];
                }
                self.alpha_tail[j].mul_vec_into(&dev, &mut tmp);
                let span = from_usize::<T>(n - 1 - j) * dt;
                for c in 0..k {
                    row[j * k + c] = span * theta[c] + tmp[c];
                }
            }
        });
        out
    }

    /// Random adapted process on `nodes` nodes: time-varying combination of the
    /// standardized features of the information set plus a deterministic part.
    pub fn random_process(&self, info: Info, nodes: usize, seed: u64, index: u64) -> Field<T> {
        let base = self.projector(info).base();
        let nb = base.dim();
        let k = self.k();
        let horizon = self.ens.grid.horizon();
        let scale: Vec<T> = (0..nb)
            .map(|f| {
                let xs: Vec<T> = base.as_slice().iter().skip(f).step_by(nb).copied().collect();
                let m = crate::field::mean(&xs);
                let v = crate::field::mean(&xs.iter().map(|&x| (x - m) * (x - m)).collect::<Vec<_>>());
                if v > T::zero() {
                    T::one() / v.sqrt()
                } else {
                    T::zero()
                }
            })
            .collect();
        let mut rng = stream_rng(seed, DOMAIN_PROBES, index);
        let mut coef = |n: usize| -> Vec<T> { (0..n).map(|_| cst::<T>(rng.gen::<f64>() * 2.0 - 1.0)).collect() };
        // per output component: intercept (2) and slope in time for each feature (2·nb)
        let c0 = coef(2 * k);
        let cf = coef(2 * nb * k);
        let times = &self.ens.grid.times;
        Field::from_fn(self.n_paths(), nodes, k, |p, j, c| {
            let s = times[j.min(times.len() - 1)] / horizon;
            let x = base.at(p, j.min(base.n_nodes() - 1));
            let mut v = c0[2 * c] + c0[2 * c + 1] * s;
            for f in 0..nb {
                let w = cf[(c * nb + f) * 2] + cf[(c * nb + f) * 2 + 1] * s;
                v += w * x[f] * scale[f];
            }
            v
        })
    }
}
