//! Expansion of the equilibrium in powers of the transient impact strength `h`
//! (single asset, single noise).
//!
//! Two constructions of the coefficients are provided:
//!
//! * [`Route::Explicit`] evaluates the closed-form Riccati solution of the
//!   linear forward-backward equations satisfied by each coefficient, with the
//!   conditional expectations realized by the exact signal law where available
//!   and by regression otherwise. Its time discretization differs from the
//!   discrete game by `O(dt)`.
//! * [`Route::Grid`] uses that the discrete best-response map is affine in `h`,
//!   `Φ_h = Φ_0 + hΨ`, and solves the coefficient recursion of the discrete
//!   game exactly. Its partial sums are Taylor polynomials of the discrete
//!   equilibrium, so remainders carry no discretization floor.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{root_mean_se, Field};
use crate::picard::{iterate_to_fixed_point, solve_fixed_point, PicardOptions, Solver, StateBundle};
use crate::projection::Info;
use crate::scalar::{cst, to_f64, Real};
use crate::sim::impact_from;

/// Solution of `f' = −f² + k`, `f(T) = −c`, for `c, k ≥ 0`.
pub fn riccati_f<T: Real>(t: T, c: T, k: T, horizon: T) -> Result<T> {
    if !(c >= T::zero() && k >= T::zero()) {
        return Err(Error::InvalidArgument(format!("riccati_f needs c, k ≥ 0, got c={c}, k={k}")));
    }
    if k == T::zero() {
        if c == T::zero() {
            return Ok(T::zero());
        }
        return Ok(-T::one() / (horizon - t + T::one() / c));
    }
    let sk = k.sqrt();
    let x = (sk + sk) * (t - horizon);
    let em = x.exp_m1();
    let ep = x.exp() + T::one();
    // √k[(√k−c)e^x − (√k+c)] / [(√k−c)e^x + (√k+c)], rearranged to avoid cancellation as k → 0
    Ok(sk * (sk * em - c * ep) / (sk * ep - c * em))
}

/// Largest `|f' + f² − k|` over interior nodes of a grid with spacing `step`,
/// with `f'` from the fourth-order central stencil.
pub fn riccati_residual(c: f64, k: f64, horizon: f64, step: f64) -> Result<f64> {
    let n = (horizon / step).round() as usize;
    let f = |i: usize| riccati_f(i as f64 * horizon / n as f64, c, k, horizon);
    let h = horizon / n as f64;
    let mut worst = 0.0f64;
    for i in 2..n.saturating_sub(1) {
        let d = (-f(i + 2)? + 8.0 * f(i + 1)? - 8.0 * f(i - 1)? + f(i - 2)?) / (12.0 * h);
        let v = f(i)?;
        worst = worst.max((d + v * v - k).abs());
    }
    Ok(worst)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Route {
    Explicit,
    Grid,
}

/// Coefficient processes `m = 0..=M`: strategies on cells, inventories on nodes.
#[derive(Clone, Debug)]
pub struct PerturbationSeries<T> {
    pub route: Route,
    pub eta: Vec<Field<T>>,
    pub nu: Vec<Field<T>>,
    pub q_i: Vec<Field<T>>,
    pub q_b: Vec<Field<T>>,
}

impl<T: Real> PerturbationSeries<T> {
    pub fn order(&self) -> usize {
        self.eta.len().saturating_sub(1)
    }
}

/// Strategy pair `(ν, η)` assembled from a series.
#[derive(Clone, Debug)]
pub struct StrategyPair<T> {
    pub nu: Field<T>,
    pub eta: Field<T>,
}

/// `Σ_{m≤M} h^m (ν^m, η^m)`.
pub fn assemble_series<T: Real>(series: &PerturbationSeries<T>, h: T, order: usize) -> Result<StrategyPair<T>> {
    if !(h >= T::zero()) {
        return Err(Error::InvalidArgument("h must be nonnegative".into()));
    }
    if order > series.order() {
        return Err(Error::InvalidArgument(format!("series has order {}, asked for {order}", series.order())));
    }
    let mut nu = series.nu[0].clone();
    let mut eta = series.eta[0].clone();
    let mut w = T::one();
    for m in 1..=order {
        w = w * h;
        nu = nu.axpy(w, &series.nu[m]);
        eta = eta.axpy(w, &series.eta[m]);
    }
    Ok(StrategyPair { nu, eta })
}

fn require_scalar<T: Real>(solver: &Solver<T>) -> Result<()> {
    let p = &solver.game.params;
    if p.k != 1 || p.d != 1 {
        return Err(Error::Unsupported("the perturbation expansion is implemented for one asset and one noise".into()));
    }
    Ok(())
}

/// Deterministic ingredients on the nodes for one `(c, k)` pair.
struct Kernel<T> {
    c: T,
    k: T,
    f: Vec<T>,
    /// `e^{∫_{t_j}^{t_{j+1}} f}`, exact.
    step: Vec<T>,
}

impl<T: Real> Kernel<T> {
    fn new(c: T, k: T, times: &[T]) -> Result<Self> {
        let horizon = *times.last().expect("nonempty grid");
        let f: Vec<T> = times.iter().map(|&t| riccati_f(t, c, k, horizon)).collect::<Result<_>>()?;
        // f = u'/u with u'' = k u, u(T) = 1, u'(T) = −c, so e^{∫_s^t f} = u(t)/u(s);
        // `scaled` is u·e^{−√k(T−t)}, finite for any horizon
        let sk = k.sqrt();
        let two = cst::<T>(2.0);
        let scaled = |t: T| -> T {
            if k == T::zero() {
                return T::one() + c * (horizon - t);
            }
            let y = -two * sk * (horizon - t);
            (T::one() + y.exp() - c * y.exp_m1() / sk) / two
        };
        let u: Vec<T> = times.iter().map(|&t| scaled(t)).collect();
        let step = (0..times.len() - 1).map(|j| (-sk * (times[j + 1] - times[j])).exp() * u[j + 1] / u[j]).collect();
        Ok(Self { c, k, f, step })
    }

    /// `∫_{t_j}^T e^{∫_{t_j}^u f − λ(u − t_j)} g(u) du` by trapezoid, for every node `j`.
    fn tail(&self, g: &[T], lambda: T, dt: T) -> Vec<T> {
        let n1 = g.len();
        let mut out = vec![T::zero(); n1];
        let half = cst::<T>(0.5) * dt;
        let decay = (-lambda * dt).exp();
        for j in (0..n1 - 1).rev() {
            let e = self.step[j] * decay;
            out[j] = half * (g[j] + e * g[j + 1]) + e * out[j + 1];
        }
        out
    }

    /// `e^{∫_{t_j}^T f}`.
    fn weight_to_end(&self) -> Vec<T> {
        let n1 = self.step.len() + 1;
        let mut out = vec![T::one(); n1];
        for j in (0..n1 - 1).rev() {
            out[j] = self.step[j] * out[j + 1];
        }
        out
    }
}

/// Solves `β_t = E[−cφ_T + Ξ + ∫_t^T (A_u − kφ_u) du | 𝒴_t]`, `φ = γ + ∫β`, where the
/// realized integrand `A` (already including any kernel terms) and `Ξ` are projected,
/// and `exact` adds a conditional term computed elsewhere (the signal part of `ℓ`).
/// Returns `(β on cells, φ on nodes)`.
#[allow(clippy::too_many_arguments)]
fn solve_linear<T: Real>(
    solver: &Solver<T>,
    info: Info,
    ker: &Kernel<T>,
    gamma: &Field<T>,
    xi: Option<&Field<T>>,
    a: &Field<T>,
    exact: Option<&Field<T>>,
) -> (Field<T>, Field<T>) {
    let g = &solver.game;
    let (np, n, dt) = (g.n_paths(), g.n_steps(), g.dt());
    let to_end = ker.weight_to_end();
    // realized ℓ before conditioning
    let mut raw = Field::zeros(np, n + 1, 1);
    raw.par_paths_mut().enumerate().for_each(|(p, row)| {
        let integrand: Vec<T> = (0..=n).map(|j| a.at(p, j)[0] - ker.k * gamma.at(p, j)[0]).collect();
        let tail = ker.tail(&integrand, T::zero(), dt);
        let end = -ker.c * gamma.at(p, n)[0] + xi.map_or(T::zero(), |x| x.at(p, 0)[0]);
        for j in 0..=n {
            row[j] = to_end[j] * end + tail[j];
        }
    });
    let mut ell = g.projector(info).project(&raw);
    if let Some(e) = exact {
        ell = ell.add(e);
    }
    // φ − γ = ∫_0^t e^{∫_u^t f} ℓ_u du. With ℓ = m + f·γ̂ the stiff part integrates
    // exactly, ∫_{t_j}^{t_{j+1}} e^{∫_u^{t_{j+1}} f} f(u) du = E_j − 1, and only the
    // smooth remainder m goes through the trapezoid rule.
    let gamma_hat = g.projector(info).project(gamma);
    let mut dev = Field::zeros(np, n + 1, 1);
    let half = cst::<T>(0.5) * dt;
    dev.par_paths_mut().enumerate().for_each(|(p, row)| {
        let gh = |j: usize| gamma_hat.at(p, j)[0];
        let m = |j: usize| ell.at(p, j)[0] - ker.f[j] * gh(j);
        for j in 0..n {
            let e = ker.step[j];
            let stiff = (e - T::one()) * cst::<T>(0.5) * (gh(j) + gh(j + 1));
            row[j + 1] = e * row[j] + half * (e * m(j) + m(j + 1)) + stiff;
        }
    });
    let beta = Field::from_fn(np, n, 1, |p, j, _| ell.at(p, j)[0] + ker.f[j] * dev.at(p, j)[0]);
    let phi = gamma.add(&dev);
    (beta, phi)
}

/// Signal part of `ℓ`: `(1/2w) E[∫_t^T e^{∫_t^u f} α_u du | info]` with the exact OU conditional mean.
fn signal_part<T: Real>(solver: &Solver<T>, info: Info, ker: &Kernel<T>, w: T) -> Field<T> {
    let g = &solver.game;
    let (np, n, dt) = (g.n_paths(), g.n_steps(), g.dt());
    let sig = &g.params.signal;
    let kappa = sig.kappa[(0, 0)];
    let theta = sig.theta[0];
    let ones = vec![T::one(); n + 1];
    let i1 = ker.tail(&ones, T::zero(), dt);
    let i2 = ker.tail(&ones, kappa, dt);
    let src = match info {
        Info::Observation => &g.kalman.mean,
        Info::Full => &g.ens.alpha,
    };
    let s = T::one() / (w + w);
    Field::from_fn(np, n + 1, 1, |p, j, _| s * (theta * i1[j] + (src.at(p, j)[0] - theta) * i2[j]))
}

/// `(1/2w)(−p e^{−t p} y)` on the nodes.
fn initial_impact_term<T: Real>(solver: &Solver<T>, w: T) -> Vec<T> {
    let g = &solver.game;
    let p = g.params.p[(0, 0)];
    let y = g.params.y0[0];
    let s = T::one() / (w + w);
    g.ens.grid.times.iter().map(|&t| -s * p * (-t * p).exp() * y).collect()
}

/// Order-0 coefficients from the closed forms.
pub fn order0_coefficients<T: Real>(solver: &Solver<T>) -> Result<(Field<T>, Field<T>, Field<T>, Field<T>)> {
    require_scalar(solver)?;
    let g = &solver.game;
    let pr = &g.params;
    let (np, n) = (g.n_paths(), g.n_steps());
    let times = &g.ens.grid.times;
    let (a, b) = (pr.a[(0, 0)], pr.b[(0, 0)]);
    let ker_i = Kernel::new(pr.psi[(0, 0)] / b, pr.r_i[(0, 0)] / b, times)?;
    let ker_b = Kernel::new(pr.phi[(0, 0)] / a, pr.r_b[(0, 0)] / a, times)?;

    let y_i = initial_impact_term(solver, b);
    let gamma_i = Field::from_fn(np, n + 1, 1, |_, _, _| pr.q_i0[0]);
    let a_i = Field::from_fn(np, n + 1, 1, |_, j, _| y_i[j]);
    let sig_i = signal_part(solver, Info::Full, &ker_i, b);
    let (eta0, q_i0) = solve_linear(solver, Info::Full, &ker_i, &gamma_i, None, &a_i, Some(&sig_i));

    let y_b = initial_impact_term(solver, a);
    let gamma_b = Field::from_fn(np, n + 1, 1, |p, j, _| pr.q_b0[0] + pr.q_i0[0] - q_i0.at(p, j)[0]);
    let a_b = Field::from_fn(np, n + 1, 1, |_, j, _| y_b[j]);
    let sig_b = signal_part(solver, Info::Observation, &ker_b, a);
    let (nu0, q_b0) = solve_linear(solver, Info::Observation, &ker_b, &gamma_b, None, &a_b, Some(&sig_b));
    Ok((eta0, q_i0, nu0, q_b0))
}

/// `∫_0^t e^{(u−t)p} ν_u du` on the nodes (left-endpoint, matching the impact recursion).
fn running_decay<T: Real>(solver: &Solver<T>, nu: &Field<T>) -> Field<T> {
    let g = &solver.game;
    let one = crate::linalg::Mat::identity(1);
    impact_from(nu, &one, &[T::zero()], &g.derived.decay_step, g.dt())
}

/// Order-`m` coefficients (`m ≥ 1`) from the closed forms, given order `m − 1`.
pub fn orderm_coefficients<T: Real>(
    solver: &Solver<T>,
    prev_eta: &Field<T>,
    prev_nu: &Field<T>,
    prev_q_b: &Field<T>,
) -> Result<(Field<T>, Field<T>, Field<T>, Field<T>)> {
    require_scalar(solver)?;
    let g = &solver.game;
    let pr = &g.params;
    let (np, n, dt) = (g.n_paths(), g.n_steps(), g.dt());
    let n_cells = prev_eta.n_nodes();
    if n_cells != n || prev_nu.n_nodes() != n || prev_q_b.n_nodes() != n + 1 {
        return Err(Error::Shape("previous order has the wrong shape".into()));
    }
    let times = &g.ens.grid.times;
    let (a, b, p) = (pr.a[(0, 0)], pr.b[(0, 0)], pr.p[(0, 0)]);
    let ker_i = Kernel::new(pr.psi[(0, 0)] / b, pr.r_i[(0, 0)] / b, times)?;
    let ker_b = Kernel::new(pr.phi[(0, 0)] / a, pr.r_b[(0, 0)] / a, times)?;
    let cell = |f: &Field<T>, pth: usize, j: usize| f.at(pth, j.min(n - 1))[0];
    let v = running_decay(solver, prev_nu);
    let zero = Field::zeros(np, n + 1, 1);

    let (two_a, two_b) = (a + a, b + b);
    let a_i = Field::from_fn(np, n + 1, 1, |q, j, _| (cell(prev_nu, q, j) - p * v.at(q, j)[0]) / two_b);
    let (eta_m, q_i_m) = solve_linear(solver, Info::Full, &ker_i, &zero, None, &a_i, None);

    // K_u = ∫_u^T e^{(u−s)p} p Q^{B,m−1}_s ds, trapezoid
    let mut kern = Field::zeros(np, n + 1, 1);
    let e = (-p * dt).exp();
    let half = cst::<T>(0.5) * dt;
    kern.par_paths_mut().enumerate().for_each(|(q, row)| {
        for j in (0..n).rev() {
            row[j] = e * row[j + 1] + half * p * (prev_q_b.at(q, j)[0] + e * prev_q_b.at(q, j + 1)[0]);
        }
    });
    let a_b = Field::from_fn(np, n + 1, 1, |q, j, _| {
        (cell(prev_eta, q, j) - p * v.at(q, j)[0] + kern.at(q, j)[0] - p * prev_q_b.at(q, j)[0]) / two_a
    });
    let gamma_b = q_i_m.scale(-T::one());
    let xi = Field::from_fn(np, 1, 1, |q, _, _| prev_q_b.at(q, n)[0] / two_a);
    let (nu_m, q_b_m) = solve_linear(solver, Info::Observation, &ker_b, &gamma_b, Some(&xi), &a_b, None);
    Ok((eta_m, q_i_m, nu_m, q_b_m))
}

/// Explicit closed-form series up to `order`.
pub fn explicit_series<T: Real>(solver: &Solver<T>, order: usize) -> Result<PerturbationSeries<T>> {
    let (e0, qi0, n0, qb0) = order0_coefficients(solver)?;
    let mut s = PerturbationSeries { route: Route::Explicit, eta: vec![e0], nu: vec![n0], q_i: vec![qi0], q_b: vec![qb0] };
    for m in 1..=order {
        let (e, qi, nu, qb) = orderm_coefficients(solver, &s.eta[m - 1], &s.nu[m - 1], &s.q_b[m - 1])?;
        s.eta.push(e);
        s.q_i.push(qi);
        s.nu.push(nu);
        s.q_b.push(qb);
    }
    Ok(s)
}

/// Taylor coefficients in `h` of the discrete equilibrium, up to `order`.
pub fn grid_series<T: Real>(solver: &Solver<T>, order: usize, opts: PicardOptions) -> Result<PerturbationSeries<T>> {
    require_scalar(solver)?;
    let s0 = solver.with_impact(T::zero())?;
    let s1 = solver.with_impact(T::one())?;
    let g = &solver.game;
    let dt = g.dt();
    let zero = StateBundle::zeros(g);
    let phi0_at_zero = s0.apply_phi(&zero)?;
    let psi_at_zero = s1.apply_phi(&zero)?.sub(&phi0_at_zero);
    let lin0 = |x: &StateBundle<T>| -> Result<StateBundle<T>> { Ok(s0.apply_phi(x)?.sub(&phi0_at_zero)) };
    let psi_lin = |x: &StateBundle<T>| -> Result<StateBundle<T>> {
        Ok(s1.apply_phi(x)?.sub(&s0.apply_phi(x)?).sub(&psi_at_zero))
    };
    let unconverged = |m: usize| Error::InvalidArgument(format!("order-{m} coefficient iteration did not converge"));
    let eq0 = solve_fixed_point(&s0, opts)?;
    if !eq0.trace.converged {
        return Err(unconverged(0));
    }
    let mut coeffs = vec![eq0.bundle];
    for m in 1..=order {
        let mut rhs = psi_lin(&coeffs[m - 1])?;
        if m == 1 {
            rhs = rhs.add(&psi_at_zero);
        }
        let (x, _, ok) = iterate_to_fixed_point(|x| Ok(lin0(x)?.add(&rhs)), StateBundle::zeros(g), dt, opts)?;
        if !ok {
            return Err(unconverged(m));
        }
        coeffs.push(x);
    }
    Ok(PerturbationSeries {
        route: Route::Grid,
        eta: coeffs.iter().map(|c| c.eta.clone()).collect(),
        nu: coeffs.iter().map(|c| c.nu.clone()).collect(),
        q_i: coeffs.iter().map(|c| c.q_i.clone()).collect(),
        q_b: coeffs.iter().map(|c| c.q_b.clone()).collect(),
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct NormEstimate {
    pub norm: f64,
    pub std_error: f64,
}

/// Ensemble 𝕙²-norm over cells with a delta-method standard error.
pub fn h2_norm<T: Real>(f: &Field<T>, dt: T) -> NormEstimate {
    let (m, se) = root_mean_se(&f.path_sq_integrals(dt, f.n_nodes()));
    NormEstimate { norm: to_f64(m), std_error: to_f64(se) }
}

#[derive(Clone, Debug, Serialize)]
pub struct ScalingRow {
    pub h: f64,
    pub converged: bool,
    pub r_eta: f64,
    pub r_nu: f64,
    pub ratio_eta: f64,
    pub ratio_nu: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScalingReport {
    pub order: usize,
    pub route: Route,
    pub rows: Vec<ScalingRow>,
    pub slope_eta: f64,
    pub slope_nu: f64,
    pub strictly_decreasing: bool,
    pub passed: bool,
    /// Grid points whose Picard solve did not converge; they are excluded.
    pub dropped: Vec<f64>,
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x.iter().zip(y).filter(|(a, b)| **a > 0.0 && **b > 0.0).map(|(a, b)| (a.ln(), b.ln())).collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Picard solutions over `h_grid` (decreasing) against the partial sums of `series`.
pub fn remainder_scaling_study<T: Real>(
    solver: &Solver<T>,
    series: &PerturbationSeries<T>,
    orders: &[usize],
    h_grid: &[f64],
    opts: PicardOptions,
) -> Result<Vec<ScalingReport>> {
    require_scalar(solver)?;
    if h_grid.iter().any(|&h| h <= 0.0) {
        return Err(Error::InvalidArgument("h_grid must be positive".into()));
    }
    let dt = solver.game.dt();
    let mut solutions = Vec::new();
    let mut dropped = Vec::new();
    for &h in h_grid {
        let s = solver.with_impact(cst(h))?;
        let eq = solve_fixed_point(&s, opts)?;
        if eq.trace.converged {
            solutions.push((h, eq.bundle));
        } else {
            dropped.push(h);
        }
    }
    let mut reports = Vec::new();
    for &order in orders {
        let mut rows = Vec::new();
        for (h, sol) in &solutions {
            let pair = assemble_series(series, cst(*h), order)?;
            let r_eta = h2_norm(&sol.eta.sub(&pair.eta), dt).norm;
            let r_nu = h2_norm(&sol.nu.sub(&pair.nu), dt).norm;
            let hm = h.powi(order as i32);
            rows.push(ScalingRow { h: *h, converged: true, r_eta, r_nu, ratio_eta: r_eta / hm, ratio_nu: r_nu / hm });
        }
        let hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
        let slope_eta = loglog_slope(&hs, &rows.iter().map(|r| r.r_eta).collect::<Vec<_>>());
        let slope_nu = loglog_slope(&hs, &rows.iter().map(|r| r.r_nu).collect::<Vec<_>>());
        // rows follow h_grid; order them by decreasing h for the monotonicity check
        let mut by_h: Vec<&ScalingRow> = rows.iter().collect();
        by_h.sort_by(|a, b| b.h.total_cmp(&a.h));
        let strictly_decreasing =
            by_h.windows(2).all(|w| w[1].ratio_eta < w[0].ratio_eta && w[1].ratio_nu < w[0].ratio_nu);
        let target = order as f64 + 0.5;
        let passed = rows.len() >= 2 && dropped.is_empty() && strictly_decreasing && slope_eta >= target && slope_nu >= target;
        reports.push(ScalingReport {
            order,
            route: series.route,
            rows,
            slope_eta,
            slope_nu,
            strictly_decreasing,
            passed,
            dropped: dropped.clone(),
        });
    }
    Ok(reports)
}

/// Default geometric grid `h_ref·2^{−j}`, `j = 0..count`.
pub fn geometric_h_grid(h_ref: f64, count: usize) -> Vec<f64> {
    (0..count).map(|j| h_ref / f64::powi(2.0, j as i32)).collect()
}

/// `‖ν_a − ν_b‖`, `‖η_a − η_b‖` with standard errors.
pub fn strategy_distance<T: Real>(nu_a: &Field<T>, nu_b: &Field<T>, eta_a: &Field<T>, eta_b: &Field<T>, dt: T) -> (NormEstimate, NormEstimate) {
    (h2_norm(&nu_a.sub(nu_b), dt), h2_norm(&eta_a.sub(eta_b), dt))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn riccati_terminal_and_branches() {
        for &(c, k) in &[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (2.0, 3.0), (5.0, 0.5)] {
            assert!((riccati_f::<f64>(1.0, c, k, 1.0).unwrap() + c).abs() < 1e-12);
        }
        assert!((riccati_f::<f64>(0.0, 1.0, 0.0, 1.0).unwrap() + 0.5).abs() < 1e-15);
        assert!((riccati_f::<f64>(0.0, 0.0, 1.0, 1.0).unwrap() + 1f64.tanh()).abs() < 1e-14);
        assert!(riccati_f::<f64>(0.0, -1.0, 0.0, 1.0).is_err());
        assert!(riccati_f::<f64>(0.0, 0.0, -1e-3, 1.0).is_err());
    }

    #[test]
    fn riccati_continuity_in_k() {
        for &c in &[0.0, 0.3, 2.0] {
            for &t in &[0.0, 0.4, 0.9] {
                let lim = riccati_f::<f64>(t, c, 0.0, 1.0).unwrap();
                let near = riccati_f::<f64>(t, c, 1e-14, 1.0).unwrap();
                assert!((lim - near).abs() < 1e-6, "c={c} t={t}: {lim} vs {near}");
            }
        }
    }

    #[test]
    fn riccati_matches_ode_integration() {
        // RK4 backwards from f(T) = −c
        let (c, k, horizon) = (0.7, 2.0, 1.0);
        let n = 10_000;
        let h = horizon / n as f64;
        let rhs = |f: f64| -f * f + k;
        let mut f = -c;
        for _ in 0..n {
            let k1 = rhs(f);
            let k2 = rhs(f - 0.5 * h * k1);
            let k3 = rhs(f - 0.5 * h * k2);
            let k4 = rhs(f - h * k3);
            f -= h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        assert!((riccati_f::<f64>(0.0, c, k, horizon).unwrap() - f).abs() < 1e-10);
    }

    #[test]
    fn loglog_slope_of_power() {
        let x = [1.0, 0.5, 0.25];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powi(2)).collect();
        assert!((loglog_slope(&x, &y) - 2.0).abs() < 1e-12);
    }
}
