//! The verification battery shared by `verify`, `scaling-study` and the acceptance suite.

use anyhow::{ensure, Result};
use equinash_core::criteria::{concavity_probe, gradient, pairing_paths, unilateral_deviation, Agent, Strategy};
use equinash_core::field::mean_se;
use equinash_core::filter::{autocorrelation, particle_filter_oracle, standardized_innovations};
use equinash_core::perturbation::{
    grid_series, h2_norm, order0_coefficients, remainder_scaling_study, riccati_f, riccati_residual, strategy_distance,
    ScalingReport,
};
use equinash_core::picard::{contraction_probe, fbsde_consistency_check, solve_fixed_point, Equilibrium, Solver};
use equinash_core::projection::{BasisSpec, Info};
use equinash_core::sim::{simulate_signal_and_price, stream_rng};
use equinash_core::{Market, PathField};
use rand::Rng;
use serde::Serialize;

use crate::config::ExperimentConfig;

const DOMAIN_RICCATI: u64 = 0x52_49_43;

#[derive(Clone, Debug, Serialize)]
pub struct CheckRecord {
    pub name: String,
    pub value: f64,
    pub std_error: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// Reported for context; does not decide the criterion.
    pub informational: bool,
}

impl CheckRecord {
    pub fn new(name: impl Into<String>, value: f64, std_error: f64, tolerance: f64, passed: bool) -> Self {
        Self { name: name.into(), value, std_error, tolerance, passed, informational: false }
    }

    /// `value ≤ tolerance`.
    pub fn at_most(name: impl Into<String>, value: f64, std_error: f64, tolerance: f64) -> Self {
        Self::new(name, value, std_error, tolerance, value <= tolerance)
    }

    fn informational(mut self) -> Self {
        self.informational = true;
        self
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CriterionReport {
    pub id: usize,
    pub title: String,
    pub passed: bool,
    pub summary: String,
    pub checks: Vec<CheckRecord>,
}

impl CriterionReport {
    fn new(id: usize, title: &str, summary: String, checks: Vec<CheckRecord>) -> Self {
        let passed = !checks.is_empty() && checks.iter().filter(|c| !c.informational).all(|c| c.passed);
        Self { id, title: title.into(), passed, summary, checks }
    }

    pub fn line(&self) -> String {
        format!("criterion {:>2} {}: {} ({})", self.id, if self.passed { "PASS" } else { "FAIL" }, self.title, self.summary)
    }
}

/// Simulated market plus solver for one configuration.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub solver: Solver<f64>,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let params = config.params()?;
        let grid = config.grid()?;
        let ens = simulate_signal_and_price(&params, &grid, config.n_paths, config.seed)?;
        let basis: BasisSpec = config.solver.basis;
        let game = Market::new(params, ens, basis)?;
        Ok(Self { config, solver: Solver::new(game) })
    }

    pub fn game(&self) -> &Market {
        &self.solver.game
    }

    pub fn solve(&self) -> Result<Equilibrium<f64>> {
        Ok(solve_fixed_point(&self.solver, self.config.picard())?)
    }
}

fn max_by<I: Iterator<Item = f64>>(it: I) -> f64 {
    it.fold(f64::NEG_INFINITY, f64::max)
}

pub fn riccati(cfg: &ExperimentConfig) -> Result<CriterionReport> {
    let mut rng = stream_rng(cfg.seed, DOMAIN_RICCATI, 0);
    let (mut worst_res, mut worst_end) = (0.0f64, 0.0f64);
    for _ in 0..cfg.verify.riccati_pairs {
        let c = 5.0 * rng.gen::<f64>();
        let k = 5.0 * rng.gen::<f64>();
        worst_res = worst_res.max(riccati_residual(c, k, 1.0, 1e-3)?);
        worst_end = worst_end.max((riccati_f(1.0, c, k, 1.0)? + c).abs());
    }
    let checks = vec![
        CheckRecord::at_most("max |f' + f² - k| over interior nodes", worst_res, 0.0, 1e-6),
        CheckRecord::at_most("max |f(T) + c|", worst_end, 0.0, 1e-12),
    ];
    let summary = format!("{} pairs, residual {worst_res:.2e}, terminal {worst_end:.2e}", cfg.verify.riccati_pairs);
    Ok(CriterionReport::new(1, "Riccati correctness", summary, checks))
}

pub fn contraction(exp: &Experiment) -> Result<CriterionReport> {
    let v = &exp.config.verify;
    let r = contraction_probe(&exp.solver, v.contraction_pairs, exp.config.seed, v.contraction_slack)?;
    let checks = vec![CheckRecord::at_most(
        "max ‖Φ(x)−Φ(y)‖²/‖x−y‖²",
        r.max_ratio,
        0.0,
        r.bound + r.slack,
    )];
    let summary = format!("{} pairs, max ratio {:.4} vs C(T)+{} = {:.4}", r.ratios.len(), r.max_ratio, r.slack, r.bound + r.slack);
    Ok(CriterionReport::new(2, "contraction", summary, checks))
}

pub fn fixed_point(eq: &Equilibrium<f64>) -> CriterionReport {
    let t = &eq.trace;
    let bound = t.contraction_constant.sqrt() + 0.05;
    let ratio = t.fitted_ratio.unwrap_or(f64::NAN);
    let checks = vec![
        CheckRecord::new("converged", t.iterations() as f64, 0.0, 0.0, t.converged),
        CheckRecord::new("fitted per-iteration ratio", ratio, 0.0, bound, ratio <= bound),
        CheckRecord::at_most("final residual", t.final_residual, 0.0, 1e-5),
    ];
    let summary = format!(
        "{} iterations, fitted ratio {ratio:.4} vs {bound:.4}, residual {:.2e}",
        t.iterations(),
        t.final_residual
    );
    CriterionReport::new(3, "Picard fixed point", summary, checks)
}

fn agent_info(agent: Agent) -> Info {
    match agent {
        Agent::Broker => Info::Observation,
        Agent::Trader => Info::Full,
    }
}

fn agent_name(agent: Agent) -> &'static str {
    match agent {
        Agent::Broker => "broker",
        Agent::Trader => "trader",
    }
}

fn pair(eq: &Equilibrium<f64>) -> (Strategy<f64>, Strategy<f64>) {
    (Strategy::observation(eq.bundle.nu.clone()), Strategy::full(eq.bundle.eta.clone()))
}

fn own(info: Info, rate: PathField) -> Strategy<f64> {
    Strategy { rate, info }
}

pub fn optimality(exp: &Experiment, eq: &Equilibrium<f64>) -> Result<CriterionReport> {
    let g = exp.game();
    let v = &exp.config.verify;
    let seed = exp.config.seed;
    let (nu, eta) = pair(eq);
    let n = g.n_steps();
    let dt = g.dt();
    let mut checks = Vec::new();
    let mut worst = 0.0f64;
    for (a, agent) in [Agent::Trader, Agent::Broker].into_iter().enumerate() {
        let info = agent_info(agent);
        let grad = gradient(g, agent, &nu, &eta)?;
        for i in 0..v.gateaux_directions {
            let d = g.random_process(info, n, seed, (a * 1000 + i) as u64);
            let (m, se) = mean_se(&pairing_paths(&grad, &d, dt));
            let tol = 3.0 * se + 0.02 * h2_norm(&d, dt).norm;
            worst = worst.max(m.abs() / tol);
            checks.push(CheckRecord::at_most(format!("{} Gâteaux pairing {i}", agent_name(agent)), m.abs(), se, tol));
        }
        for i in 0..v.deviations {
            let d = own(info, g.random_process(info, n, seed, (a * 1000 + 500 + i) as u64));
            let step = if i % 2 == 0 { v.deviation_step } else { -v.deviation_step };
            for dev in unilateral_deviation(g, agent, &nu, &eta, &d, &[step])? {
                checks.push(CheckRecord::new(
                    format!("{} deviation {i}", agent_name(agent)),
                    dev.gain,
                    dev.std_error,
                    3.0 * dev.std_error,
                    dev.passed,
                ));
            }
        }
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    let summary = format!("{} checks, {failed} failed, worst pairing at {:.2} of its tolerance", checks.len(), worst);
    Ok(CriterionReport::new(4, "optimality", summary, checks))
}

pub fn filter(exp: &Experiment) -> Result<CriterionReport> {
    let g = exp.game();
    let v = &exp.config.verify;
    let ens = &g.ens;
    let path = v.filter_path;
    let z_path: Vec<Vec<f64>> = (0..=g.n_steps()).map(|j| ens.z.at(path, j).to_vec()).collect();
    let pf = particle_filter_oracle(&g.params, &ens.grid, &z_path, v.particles, v.particle_groups, exp.config.seed)?;
    let mut worst = 0.0f64;
    for j in 0..=g.n_steps() {
        for c in 0..g.k() {
            let gap = (g.kalman.mean.at(path, j)[c] - pf.mean[j][c]).abs();
            let se = pf.std_error[j][c];
            let z = if se > 0.0 { gap / se } else if gap <= 1e-12 { 0.0 } else { f64::INFINITY };
            worst = worst.max(z);
        }
    }
    let mut checks = vec![CheckRecord::at_most("max |Kalman − particle| / SE", worst, 0.0, 5.0)];
    let inn = standardized_innovations(ens, &g.kalman, path);
    let band = 3.0 / (inn.len() as f64).sqrt();
    for lag in 1..=v.autocorrelation_lags {
        let rho = autocorrelation(&inn, lag);
        checks.push(CheckRecord::at_most(format!("|innovation autocorrelation| lag {lag}"), rho.abs(), 0.0, band));
    }
    let worst_acf = max_by(checks[1..].iter().map(|c| c.value));
    let summary = format!(
        "{} particles, worst gap {worst:.2} SE, worst autocorrelation {worst_acf:.3} vs {band:.3}{}",
        pf.n_particles,
        if pf.warnings.is_empty() { String::new() } else { format!(", {} warnings", pf.warnings.len()) }
    );
    Ok(CriterionReport::new(5, "filter", summary, checks))
}

pub fn cross_solver(exp: &Experiment) -> Result<CriterionReport> {
    let s0 = exp.solver.with_impact(0.0)?;
    let eq = solve_fixed_point(&s0, exp.config.picard())?;
    ensure!(eq.trace.converged, "Picard at h = 0 did not converge");
    let (eta0, _, nu0, _) = order0_coefficients(&s0)?;
    let dt = s0.game.dt();
    let (dn, de) = strategy_distance(&eq.bundle.nu, &nu0, &eq.bundle.eta, &eta0, dt);
    let checks = vec![
        CheckRecord::at_most("‖ν_picard − ν⁰‖", dn.norm, dn.std_error, 3.0 * dn.std_error + 2.0 * dt),
        CheckRecord::at_most("‖η_picard − η⁰‖", de.norm, de.std_error, 3.0 * de.std_error + 2.0 * dt),
    ];
    let summary = format!("‖Δν‖ {:.2e}, ‖Δη‖ {:.2e}, 2dt {:.2e}", dn.norm, de.norm, 2.0 * dt);
    Ok(CriterionReport::new(6, "cross-solver at h = 0", summary, checks))
}

pub fn scaling(exp: &Experiment) -> Result<(CriterionReport, Vec<ScalingReport>)> {
    let p = &exp.config.perturbation;
    let mut opts = exp.config.picard();
    opts.tol = opts.tol.min(p.tol);
    let series = match p.route {
        equinash_core::perturbation::Route::Grid => grid_series(&exp.solver, p.order, opts)?,
        equinash_core::perturbation::Route::Explicit => {
            equinash_core::perturbation::explicit_series(&exp.solver, p.order)?
        }
    };
    let orders: Vec<usize> = (0..=p.order).collect();
    let reports = remainder_scaling_study(&exp.solver, &series, &orders, &p.h_grid(), opts)?;
    let mut checks = Vec::new();
    for r in &reports {
        let m = r.order as f64;
        checks.push(CheckRecord::new(format!("M={} ratios strictly decreasing", r.order), 0.0, 0.0, 0.0, r.strictly_decreasing));
        checks.push(CheckRecord::new(format!("M={} slope η", r.order), r.slope_eta, 0.0, m + 0.5, r.slope_eta >= m + 0.5));
        checks.push(CheckRecord::new(format!("M={} slope ν", r.order), r.slope_nu, 0.0, m + 0.5, r.slope_nu >= m + 0.5));
        checks.push(CheckRecord::new(format!("M={} no dropped points", r.order), r.dropped.len() as f64, 0.0, 0.0, r.dropped.is_empty()));
    }
    let summary = reports
        .iter()
        .map(|r| format!("M={}: slopes {:.2}/{:.2}", r.order, r.slope_eta, r.slope_nu))
        .collect::<Vec<_>>()
        .join(", ");
    Ok((CriterionReport::new(7, "remainder scaling", summary, checks), reports))
}

pub fn concavity(exp: &Experiment, eq: &Equilibrium<f64>) -> Result<CriterionReport> {
    let g = exp.game();
    let v = &exp.config.verify;
    let seed = exp.config.seed;
    let (nu, eta) = pair(eq);
    let n = g.n_steps();
    let mut checks = Vec::new();
    for (a, agent) in [Agent::Trader, Agent::Broker].into_iter().enumerate() {
        let info = agent_info(agent);
        for i in 0..v.concavity_pairs {
            let base = (a * 1000 + 2000 + 2 * i) as u64;
            let x = own(info, g.random_process(info, n, seed, base));
            let y = own(info, g.random_process(info, n, seed, base + 1));
            for probe in concavity_probe(g, agent, &nu, &eta, &x, &y, &[0.25, 0.5, 0.75])? {
                checks.push(CheckRecord::new(
                    format!("{} chord {i} ρ={}", agent_name(agent), probe.rho),
                    probe.gap,
                    probe.std_error,
                    -3.0 * probe.std_error,
                    probe.passed,
                ));
            }
        }
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    Ok(CriterionReport::new(8, "concavity", format!("{} chord tests, {failed} failed", checks.len()), checks))
}

pub fn fbsde(exp: &Experiment, eq: &Equilibrium<f64>) -> Result<CriterionReport> {
    let r = fbsde_consistency_check(&exp.solver, eq)?;
    let term = |name: &str, x: &equinash_core::picard::ResidualNorm| {
        CheckRecord::new(name, x.norm, x.std_error, x.tolerance, x.passed)
    };
    let mut checks = vec![
        term("|Z_T|", &r.terminal_z),
        term("|η_T + b⁻¹ψ Q^I_T|", &r.terminal_eta),
        term("|ν_T + ½a⁻¹(2φ−h) Q̂^B_T|", &r.terminal_nu),
    ];
    for d in &r.drifts {
        checks.push(term(&format!("drift {}", d.line), &d.integrated).informational());
    }
    let summary = format!(
        "terminal residuals ν {:.2e}, η {:.2e}, Z {:.2e} vs {:.2e}",
        r.terminal_nu.norm, r.terminal_eta.norm, r.terminal_z.norm, r.terminal_nu.tolerance
    );
    Ok(CriterionReport::new(9, "FBSDE characterization", summary, checks))
}
