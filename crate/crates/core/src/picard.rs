//! The best-response map Φ on the product space of strategies and states, its
//! fixed point, contraction diagnostics and the FBSDE residual check.
//!
//! Φ is built from the exact first-order conditions of the discrete criteria:
//! a strategy on cell `j` is the conditional expectation, given the agent's
//! information at `t_j`, of the sum over later cells of the marginal running
//! reward, plus the own-inventory terms. Hence a fixed point of Φ solves the
//! discrete first-order conditions up to regression error.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::criteria::decay_kernel;
use crate::error::{Error, Result};
use crate::field::{mean_se, root_mean_se, Field};
use crate::game::Game;
use crate::linalg::{matrix_exp, Mat};
use crate::projection::Info;
use crate::scalar::{cst, to_f64, Real};
use crate::sim::{impact_from, integrate_rate};

/// `Υ = (ν, η, Y, Q^B, Q^I)`; strategies on cells, states on nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct StateBundle<T> {
    pub nu: Field<T>,
    pub eta: Field<T>,
    pub y: Field<T>,
    pub q_b: Field<T>,
    pub q_i: Field<T>,
}

pub const COMPONENTS: [&str; 5] = ["nu", "eta", "Y", "Q_B", "Q_I"];

impl<T: Real> StateBundle<T> {
    pub fn zeros(game: &Game<T>) -> Self {
        let (np, n, k) = (game.n_paths(), game.n_steps(), game.k());
        Self {
            nu: Field::zeros(np, n, k),
            eta: Field::zeros(np, n, k),
            y: Field::zeros(np, n + 1, k),
            q_b: Field::zeros(np, n + 1, k),
            q_i: Field::zeros(np, n + 1, k),
        }
    }

    fn parts(&self) -> [&Field<T>; 5] {
        [&self.nu, &self.eta, &self.y, &self.q_b, &self.q_i]
    }

    fn combine(&self, other: &Self, f: impl Fn(&Field<T>, &Field<T>) -> Field<T>) -> Self {
        Self {
            nu: f(&self.nu, &other.nu),
            eta: f(&self.eta, &other.eta),
            y: f(&self.y, &other.y),
            q_b: f(&self.q_b, &other.q_b),
            q_i: f(&self.q_i, &other.q_i),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.combine(other, |a, b| a.add(b))
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.combine(other, |a, b| a.sub(b))
    }

    pub fn axpy(&self, s: T, other: &Self) -> Self {
        self.combine(other, |a, b| a.axpy(s, b))
    }

    pub fn scale(&self, s: T) -> Self {
        self.combine(self, |a, _| a.scale(s))
    }

    /// Squared 𝕙²-norms of the five components over nodes `0..N`.
    pub fn component_sq(&self, dt: T) -> [T; 5] {
        let n = self.nu.n_nodes();
        self.parts().map(|f| f.h2_sq(dt, n))
    }

    /// Discrete 𝕋-norm.
    pub fn norm(&self, dt: T) -> T {
        self.component_sq(dt).iter().copied().sum::<T>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.parts().iter().all(|f| f.is_finite())
    }

    fn check(&self, game: &Game<T>) -> Result<()> {
        let (np, n, k) = (game.n_paths(), game.n_steps(), game.k());
        for (i, f) in self.parts().iter().enumerate() {
            let nodes = if i < 2 { n } else { n + 1 };
            if (f.n_paths(), f.n_nodes(), f.dim()) != (np, nodes, k) {
                return Err(Error::Shape(format!("bundle component {} has the wrong shape", COMPONENTS[i])));
            }
        }
        if !self.is_finite() {
            return Err(Error::NonFinite("state bundle".into()));
        }
        Ok(())
    }
}

/// `x ↦ m x` applied to every node of every path.
pub fn apply_mat<T: Real>(m: &Mat<T>, f: &Field<T>) -> Field<T> {
    let k = f.dim();
    let mut out = Field::zeros(f.n_paths(), f.n_nodes(), k);
    out.par_paths_mut().zip(f.par_paths()).for_each(|(o, x)| {
        for (oc, xc) in o.chunks_mut(k).zip(x.chunks(k)) {
            m.mul_vec_into(xc, oc);
        }
    });
    out
}

/// Game plus the signal contributions to Φ, which do not depend on the iterate.
#[derive(Clone, Debug)]
pub struct Solver<T> {
    pub game: Game<T>,
    alpha_obs: Arc<Field<T>>,
    alpha_full: Arc<Field<T>>,
}

impl<T: Real> Solver<T> {
    pub fn new(game: Game<T>) -> Self {
        let alpha_obs = Arc::new(game.alpha_tail_expectation(Info::Observation));
        let alpha_full = Arc::new(game.alpha_tail_expectation(Info::Full));
        Self { game, alpha_obs, alpha_full }
    }

    /// Same market with different game constants.
    pub fn with_game(&self, game: Game<T>) -> Self {
        Self { game, ..self.clone() }
    }

    pub fn with_impact(&self, h: T) -> Result<Self> {
        Ok(self.with_game(self.game.with_impact(h)?))
    }

    /// One application of Φ.
    pub fn apply_phi(&self, x: &StateBundle<T>) -> Result<StateBundle<T>> {
        x.check(&self.game)?;
        let g = &self.game;
        let pr = &g.params;
        let (np, n, k, dt) = (g.n_paths(), g.n_steps(), g.k(), g.dt());
        let two = cst::<T>(2.0);
        let mut tb = Field::zeros(np, n, k);
        let mut ti = Field::zeros(np, n, k);
        let mut mi = Field::zeros(np, n, k);
        tb.par_paths_mut()
            .zip(ti.par_paths_mut())
            .zip(mi.par_paths_mut())
            .enumerate()
            .for_each(|(path, ((tb, ti), mi))| {
                let (nu, eta) = (x.nu.path(path), x.eta.path(path));
                let (y, qb, qi) = (x.y.path(path), x.q_b.path(path), x.q_i.path(path));
                let mut buf = vec![T::zero(); k];
                let mut flow_total = vec![T::zero(); k];
                for j in 0..n {
                    for c in 0..k {
                        flow_total[c] += (nu[j * k + c] - eta[j * k + c]) * dt;
                    }
                }
                // running integrands of the broker and trader targets, per cell
                let mut ib = vec![T::zero(); n * k];
                let mut ii = vec![T::zero(); n * k];
                for j in 0..n {
                    let cell = j * k..(j + 1) * k;
                    pr.p.mul_vec_into(&y[cell.clone()], &mut buf);
                    for c in 0..k {
                        ib[j * k + c] = -buf[c];
                        ii[j * k + c] = -buf[c];
                    }
                    pr.h.mul_vec_into(&eta[cell.clone()], &mut buf);
                    for c in 0..k {
                        ib[j * k + c] += buf[c];
                    }
                    pr.r_b.mul_vec_into(&qb[cell.clone()], &mut buf);
                    for c in 0..k {
                        ib[j * k + c] -= two * buf[c];
                    }
                    pr.h.mul_vec_into(&nu[cell.clone()], &mut buf);
                    for c in 0..k {
                        ii[j * k + c] += buf[c];
                    }
                    pr.r_i.mul_vec_into(&qi[cell.clone()], &mut buf);
                    for c in 0..k {
                        ii[j * k + c] -= two * buf[c];
                    }
                    pr.psi.mul_vec_into(&eta[cell], &mut buf);
                    for c in 0..k {
                        ii[j * k + c] -= two * buf[c];
                    }
                }
                let kern = decay_kernel(g, qb);
                let mut tail_b = vec![T::zero(); k];
                let mut tail_i = vec![T::zero(); k];
                let mut excl = vec![T::zero(); k];
                let mut own = pr.q_i0.clone();
                for j in (0..n).rev() {
                    let cell = j * k..(j + 1) * k;
                    for c in 0..k {
                        excl[c] = pr.q_b0[c] + flow_total[c] - (nu[j * k + c] - eta[j * k + c]) * dt;
                    }
                    g.derived.two_phi_minus_h.mul_vec_into(&excl, &mut buf);
                    for c in 0..k {
                        tb[j * k + c] = tail_b[c] - buf[c];
                        ti[j * k + c] = tail_i[c];
                    }
                    pr.h.mul_vec_into(&kern[cell], &mut buf);
                    for c in 0..k {
                        tb[j * k + c] -= buf[c];
                        tail_b[c] += ib[j * k + c] * dt;
                        tail_i[c] += ii[j * k + c] * dt;
                    }
                }
                for j in 0..n {
                    pr.psi.mul_vec_into(&own, &mut buf);
                    for c in 0..k {
                        mi[j * k + c] = -two * buf[c];
                        own[c] += eta[j * k + c] * dt;
                    }
                }
            });
        let pb = g.obs.project(&tb).add(&self.alpha_obs);
        let pi = g.full.project(&ti).add(&mi).add(&self.alpha_full);
        let out = StateBundle {
            nu: apply_mat(&g.derived.a_inv_half, &pb),
            eta: apply_mat(&g.derived.b_inv_half, &pi),
            y: impact_from(&x.nu, &pr.h, &pr.y0, &g.derived.decay_step, dt),
            q_b: integrate_rate(&x.nu.sub(&x.eta), &pr.q_b0, dt),
            q_i: integrate_rate(&x.eta, &pr.q_i0, dt),
        };
        if !out.is_finite() {
            return Err(Error::NonFinite("Φ output".into()));
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 200 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub delta: f64,
    pub components: [f64; 5],
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceTrace {
    pub records: Vec<IterationRecord>,
    pub converged: bool,
    pub contraction_constant: f64,
    /// `C(T) ≥ 1`: the iteration still runs, without a convergence guarantee.
    pub outside_guarantee: bool,
    /// `exp` of the least-squares slope of `log δ_n` against `n`.
    pub fitted_ratio: Option<f64>,
    /// `‖Φ(Υ) − Υ‖_𝕋` at the returned iterate.
    pub final_residual: f64,
}

impl ConvergenceTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }
}

/// Least-squares geometric ratio of a decreasing sequence, ignoring values at the rounding floor.
pub fn fitted_ratio(deltas: &[f64]) -> Option<f64> {
    let top = deltas.iter().copied().fold(0.0f64, f64::max);
    let pts: Vec<(f64, f64)> = deltas
        .iter()
        .enumerate()
        .filter(|(_, &d)| d > 1e-12 * top && d > 0.0)
        .map(|(i, &d)| (i as f64, d.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Some((sxy / sxx).exp())
}

/// Banach iteration `Υ ← map(Υ)` from `start` until successive iterates are within `tol`.
pub fn iterate_to_fixed_point<T: Real>(
    map: impl Fn(&StateBundle<T>) -> Result<StateBundle<T>>,
    start: StateBundle<T>,
    dt: T,
    opts: PicardOptions,
) -> Result<(StateBundle<T>, Vec<IterationRecord>, bool)> {
    let mut x = start;
    let mut records = Vec::new();
    for it in 1..=opts.max_iter.max(1) {
        let next = map(&x)?;
        let d = next.sub(&x);
        let comps = d.component_sq(dt).map(|c| to_f64(c).sqrt());
        let delta = comps.iter().map(|c| c * c).sum::<f64>().sqrt();
        records.push(IterationRecord { iteration: it, delta, components: comps });
        x = next;
        if delta < opts.tol {
            return Ok((x, records, true));
        }
    }
    Ok((x, records, false))
}

#[derive(Clone, Debug)]
pub struct Equilibrium<T> {
    pub bundle: StateBundle<T>,
    pub trace: ConvergenceTrace,
}

/// Picard iteration of Φ from zero.
pub fn solve_fixed_point<T: Real>(solver: &Solver<T>, opts: PicardOptions) -> Result<Equilibrium<T>> {
    let g = &solver.game;
    let c = to_f64(g.contraction_constant()?);
    let (bundle, records, converged) =
        iterate_to_fixed_point(|x| solver.apply_phi(x), StateBundle::zeros(g), g.dt(), opts)?;
    let final_residual = to_f64(solver.apply_phi(&bundle)?.sub(&bundle).norm(g.dt()));
    let deltas: Vec<f64> = records.iter().map(|r| r.delta).collect();
    Ok(Equilibrium {
        bundle,
        trace: ConvergenceTrace {
            fitted_ratio: fitted_ratio(&deltas),
            records,
            converged,
            contraction_constant: c,
            outside_guarantee: c >= 1.0,
            final_residual,
        },
    })
}

/// Random bundle with every component adapted to its information set.
pub fn random_bundle<T: Real>(game: &Game<T>, seed: u64, index: u64) -> StateBundle<T> {
    let n = game.n_steps();
    let i = 5 * index;
    StateBundle {
        nu: game.random_process(Info::Observation, n, seed, i),
        eta: game.random_process(Info::Full, n, seed, i + 1),
        y: game.random_process(Info::Observation, n + 1, seed, i + 2),
        q_b: game.random_process(Info::Full, n + 1, seed, i + 3),
        q_i: game.random_process(Info::Full, n + 1, seed, i + 4),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ContractionReport {
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
    pub bound: f64,
    pub slack: f64,
    pub passed: bool,
}

/// Measured `‖Φ(Υ) − Φ(Υ̂)‖²/‖Υ − Υ̂‖²` over random pairs.
pub fn contraction_probe<T: Real>(solver: &Solver<T>, n_pairs: usize, seed: u64, slack: f64) -> Result<ContractionReport> {
    let g = &solver.game;
    let dt = g.dt();
    let mut ratios = Vec::with_capacity(n_pairs);
    for i in 0..n_pairs as u64 {
        let x = random_bundle(g, seed, 2 * i);
        let y = random_bundle(g, seed, 2 * i + 1);
        let den = x.sub(&y).norm(dt);
        if den <= T::zero() {
            continue;
        }
        let num = solver.apply_phi(&x)?.sub(&solver.apply_phi(&y)?).norm(dt);
        ratios.push(to_f64((num / den).powi(2)));
    }
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    let bound = to_f64(g.contraction_constant()?);
    Ok(ContractionReport { passed: max_ratio <= bound + slack, ratios, max_ratio, bound, slack })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ResidualNorm {
    pub norm: f64,
    pub std_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl ResidualNorm {
    fn from_sq<T: Real>(sq: &[T], slack: f64) -> Self {
        let (m, se) = root_mean_se(sq);
        let (norm, std_error) = (to_f64(m), to_f64(se));
        let tolerance = 3.0 * std_error + slack;
        Self { norm, std_error, tolerance, passed: norm <= tolerance }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DriftResidual {
    pub line: String,
    /// Ensemble norm of the projected increment residuals summed over time.
    pub integrated: ResidualNorm,
    /// Per-node ensemble norm of the projected residual, divided by `dt`.
    pub per_node: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FbsdeResiduals {
    pub terminal_nu: ResidualNorm,
    pub terminal_eta: ResidualNorm,
    pub terminal_z: ResidualNorm,
    pub drifts: Vec<DriftResidual>,
}

impl FbsdeResiduals {
    pub fn terminal_passed(&self) -> bool {
        self.terminal_nu.passed && self.terminal_eta.passed && self.terminal_z.passed
    }
}

fn per_path_sq<T: Real>(f: &Field<T>, node: usize) -> Vec<T> {
    (0..f.n_paths()).map(|p| f.at(p, node).iter().map(|&x| x * x).sum()).collect()
}

/// Residuals of the FBSDE characterization at a converged fixed point.
pub fn fbsde_consistency_check<T: Real>(solver: &Solver<T>, eq: &Equilibrium<T>) -> Result<FbsdeResiduals> {
    if !eq.trace.converged {
        return Err(Error::InvalidArgument("FBSDE check requires a converged fixed point".into()));
    }
    let g = &solver.game;
    let pr = &g.params;
    let x = &eq.bundle;
    x.check(g)?;
    let (np, n, k, dt) = (g.n_paths(), g.n_steps(), g.k(), g.dt());
    let dtf = to_f64(dt);
    let eta_hat = g.obs.project(&x.eta);
    let qb_hat = g.obs.project(&x.q_b);
    let qi_hat = g.obs.project(&x.q_i);

    // Z_j = e^{t_j p}(E[X | G_j] − Σ_{i<j} e^{−t_i p} p Q̂_i dt), X the full sum; E[X | G_T] = X
    let decay: Vec<Mat<T>> = g.ens.grid.times.iter().map(|&t| matrix_exp(&pr.p, -t)).collect::<Result<_>>()?;
    let grow: Vec<Mat<T>> = g.ens.grid.times.iter().map(|&t| matrix_exp(&pr.p, t)).collect::<Result<_>>()?;
    let mut running = Field::zeros(np, n + 1, k);
    running.par_paths_mut().enumerate().for_each(|(path, row)| {
        let mut pq = vec![T::zero(); k];
        let mut w = vec![T::zero(); k];
        for j in 0..n {
            pr.p.mul_vec_into(qb_hat.at(path, j), &mut pq);
            decay[j].mul_vec_into(&pq, &mut w);
            for c in 0..k {
                row[(j + 1) * k + c] = row[j * k + c] + w[c] * dt;
            }
        }
    });
    let total = Field::from_fn(np, n + 1, k, |p, _, c| running.at(p, n)[c]);
    let mut cond = g.obs.project(&total.truncate_nodes(n));
    cond = Field::from_fn(np, n + 1, k, |p, j, c| if j < n { cond.at(p, j)[c] } else { total.at(p, n)[c] });
    let inner = cond.sub(&running);
    let mut z = Field::zeros(np, n + 1, k);
    z.par_paths_mut().enumerate().for_each(|(path, row)| {
        for j in 0..=n {
            grow[j].mul_vec_into(inner.at(path, j), &mut row[j * k..(j + 1) * k]);
        }
    });

    let nu_t = Field::from_fn(np, 1, k, |p, _, c| {
        let mut b = vec![T::zero(); k];
        g.derived.two_phi_minus_h.mul_vec_into(qb_hat.at(p, n), &mut b);
        let mut a = vec![T::zero(); k];
        g.derived.a_inv_half.mul_vec_into(&b, &mut a);
        x.nu.at(p, n - 1)[c] + a[c]
    });
    let eta_t = Field::from_fn(np, 1, k, |p, _, c| {
        let mut b = vec![T::zero(); k];
        pr.psi.mul_vec_into(x.q_i.at(p, n), &mut b);
        let mut a = vec![T::zero(); k];
        g.derived.b_inv_half.mul_vec_into(&b, &mut a);
        x.eta.at(p, n - 1)[c] + a[c] + a[c]
    });
    let slack = 2.0 * dtf;
    let terminal_nu = ResidualNorm::from_sq(&per_path_sq(&nu_t, 0), slack);
    let terminal_eta = ResidualNorm::from_sq(&per_path_sq(&eta_t, 0), slack);
    let terminal_z = ResidualNorm::from_sq(&per_path_sq(&z, n), slack);

    // drift lines: (name, process, drift, information, nodes)
    let two = cst::<T>(2.0);
    let lin = |terms: &[(&Mat<T>, &Field<T>)], nodes: usize| -> Field<T> {
        let mut out = Field::zeros(np, nodes, k);
        out.par_paths_mut().enumerate().for_each(|(path, row)| {
            let mut b = vec![T::zero(); k];
            for j in 0..nodes {
                for (m, f) in terms {
                    m.mul_vec_into(f.at(path, j), &mut b);
                    for c in 0..k {
                        row[j * k + c] += b[c];
                    }
                }
            }
        });
        out
    };
    let id = Mat::identity(k);
    let neg = |m: &Mat<T>| m.scale(-T::one());
    let r_b2h = pr.r_b.scale(two).add(&pr.h.matmul(&pr.p));
    let hp = pr.h.matmul(&pr.p);
    let r_i2 = pr.r_i.scale(two);
    let alpha_hat = &g.kalman.mean;
    let alpha = &g.ens.alpha;
    let inner_nu = lin(
        &[(&id, alpha_hat), (&neg(&r_b2h), &qb_hat), (&neg(&pr.p), &x.y), (&pr.h, &eta_hat), (&hp, &z)],
        n,
    );
    let nu_drift = apply_mat(&neg(&g.derived.a_inv_half), &inner_nu);
    let inner_eta = lin(&[(&id, alpha), (&neg(&r_i2), &x.q_i), (&pr.h, &x.nu), (&neg(&pr.p), &x.y)], n);
    let eta_drift = apply_mat(&neg(&g.derived.b_inv_half), &inner_eta);
    let inner_eta_hat = lin(&[(&id, alpha_hat), (&neg(&r_i2), &qi_hat), (&pr.h, &x.nu), (&neg(&pr.p), &x.y)], n);
    let eta_hat_drift = apply_mat(&neg(&g.derived.b_inv_half), &inner_eta_hat);
    let z_drift = lin(&[(&pr.p, &z), (&neg(&pr.p), &qb_hat)], n);
    let qb_drift = x.nu.sub(&eta_hat);
    let qi_drift = eta_hat.clone();

    let lines: Vec<(&str, &Field<T>, Field<T>, Info)> = vec![
        ("nu", &x.nu, nu_drift, Info::Observation),
        ("eta", &x.eta, eta_drift, Info::Full),
        ("Z", &z, z_drift, Info::Observation),
        ("eta_hat", &eta_hat, eta_hat_drift, Info::Observation),
        ("Q_B_hat", &qb_hat, qb_drift, Info::Observation),
        ("Q_I_hat", &qi_hat, qi_drift, Info::Observation),
    ];
    let mut drifts = Vec::new();
    for (name, proc_, drift, info) in lines {
        let steps = proc_.n_nodes() - 1;
        let inc = Field::from_fn(np, steps, k, |p, j, c| {
            proc_.at(p, j + 1)[c] - proc_.at(p, j)[c] - drift.at(p, j)[c] * dt
        });
        let res = g.projector(info).project(&inc);
        let integrated: Vec<T> = (0..np)
            .map(|p| {
                (0..k)
                    .map(|c| {
                        let s: T = (0..steps).map(|j| res.at(p, j)[c]).sum();
                        s * s
                    })
                    .sum()
            })
            .collect();
        let per_node = (0..steps).map(|j| to_f64(mean_se(&per_path_sq(&res, j)).0.sqrt()) / dtf).collect();
        let scale = to_f64(mean_se(&per_path_sq(proc_, 0)).0.sqrt()).max(1.0);
        drifts.push(DriftResidual {
            line: name.to_string(),
            integrated: ResidualNorm::from_sq(&integrated, 2.0 * dtf * scale),
            per_node,
        });
    }
    Ok(FbsdeResiduals { terminal_nu, terminal_eta, terminal_z, drifts })
}

/// Relative 𝕙²-change of `ν` under projection onto the observation features.
pub fn filtration_discipline<T: Real>(game: &Game<T>, nu: &Field<T>) -> f64 {
    let dt = game.dt();
    let n = nu.n_nodes();
    let diff = game.obs.project(nu).sub(nu).h2_sq(dt, n).sqrt();
    let base = nu.h2_sq(dt, n).sqrt();
    if base <= T::zero() {
        return to_f64(diff);
    }
    to_f64(diff / base)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ScalarSpec, TimeGrid};
    use crate::projection::BasisSpec;
    use crate::sim::simulate_signal_and_price;

    fn solver(spec: ScalarSpec, paths: usize, steps: usize) -> Solver<f64> {
        let params = spec.build::<f64>();
        let grid = TimeGrid::new(params.horizon, steps).unwrap();
        let ens = simulate_signal_and_price(&params, &grid, paths, 11).unwrap();
        Solver::new(Game::new(params, ens, BasisSpec::default()).unwrap())
    }

    #[test]
    fn zero_problem_is_fixed_at_zero() {
        let s = solver(ScalarSpec { horizon: 0.25, ..ScalarSpec::trivial() }, 50, 10);
        let eq = solve_fixed_point(&s, PicardOptions::default()).unwrap();
        assert!(eq.trace.converged);
        assert_eq!(eq.trace.iterations(), 1);
        assert_eq!(eq.bundle, StateBundle::zeros(&s.game));
    }

    #[test]
    fn fitted_ratio_of_geometric_sequence() {
        let d: Vec<f64> = (0..10).map(|i| 0.3f64.powi(i)).collect();
        assert!((fitted_ratio(&d).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn impact_component_matches_propagation() {
        let s = solver(ScalarSpec::baseline(), 40, 10);
        let mut x = StateBundle::zeros(&s.game);
        x.nu = Field::from_fn(40, 10, 1, |_, _, _| 2.0);
        let out = s.apply_phi(&x).unwrap();
        let direct = crate::sim::propagate_transient_impact(&s.game.params, &s.game.ens.grid, &x.nu).unwrap();
        assert_eq!(out.y, direct);
    }

    #[test]
    fn baseline_contracts_and_converges() {
        let s = solver(ScalarSpec::baseline(), 400, 20);
        let rep = contraction_probe(&s, 5, 3, 0.0).unwrap();
        assert!(rep.passed, "{rep:?}");
        let eq = solve_fixed_point(&s, PicardOptions { tol: 1e-10, max_iter: 100 }).unwrap();
        assert!(eq.trace.converged);
        assert!(eq.trace.final_residual < 1e-9);
        assert!(eq.trace.fitted_ratio.unwrap() <= rep.bound.sqrt() + 0.05);
        let fd = filtration_discipline(&s.game, &eq.bundle.nu);
        assert!(fd < 1e-6, "{fd}");
    }
}
