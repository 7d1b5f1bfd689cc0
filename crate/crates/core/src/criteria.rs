//! Objective functionals, their Gâteaux derivatives, and concavity probes.
//!
//! All functionals are the discrete ones on the simulation grid: strategies are
//! constant on cells, inventories and impact live on nodes, and the running
//! cost is a left-endpoint sum. Gradients are the exact derivatives of these sums.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{mean_se, Field};
use crate::game::Game;
use crate::projection::Info;
use crate::scalar::{cst, to_f64, Real};
use crate::sim::{check_strategy, impact_from, integrate_rate, market_states};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Agent {
    Broker,
    Trader,
}

/// A trading rate together with the information set it is declared adapted to.
#[derive(Clone, Debug)]
pub struct Strategy<T> {
    pub rate: Field<T>,
    pub info: Info,
}

impl<T: Real> Strategy<T> {
    pub fn observation(rate: Field<T>) -> Self {
        Self { rate, info: Info::Observation }
    }

    pub fn full(rate: Field<T>) -> Self {
        Self { rate, info: Info::Full }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CriterionValue {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
}

impl CriterionValue {
    fn from_paths<T: Real>(xs: &[T]) -> Self {
        let (m, se) = mean_se(xs);
        Self { mean: to_f64(m), std_error: to_f64(se), n_paths: xs.len() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Form {
    /// Left-endpoint running-cost sum.
    Running,
    /// Terminal wealth minus penalties.
    Terminal,
}

fn check_pair<T: Real>(game: &Game<T>, nu: &Strategy<T>, eta: &Strategy<T>) -> Result<()> {
    if nu.info != Info::Observation {
        return Err(Error::Filtration("broker strategy must be adapted to the observation filtration".into()));
    }
    check_strategy(&nu.rate, &game.ens.grid, game.k(), "nu")?;
    check_strategy(&eta.rate, &game.ens.grid, game.k(), "eta")?;
    if nu.rate.n_paths() != game.n_paths() || eta.rate.n_paths() != game.n_paths() {
        return Err(Error::Shape("strategy path count differs from the ensemble".into()));
    }
    Ok(())
}

fn dot<T: Real>(x: &[T], y: &[T]) -> T {
    x.iter().zip(y).map(|(&a, &b)| a * b).sum()
}

/// Per-path criterion values.
pub fn criterion_paths<T: Real>(
    game: &Game<T>,
    agent: Agent,
    form: Form,
    nu: &Strategy<T>,
    eta: &Strategy<T>,
) -> Result<Vec<T>> {
    check_pair(game, nu, eta)?;
    let pr = &game.params;
    let ens = &game.ens;
    let st = market_states(pr, ens, &nu.rate, &eta.rate)?;
    let (n, k, dt) = (game.n_steps(), game.k(), game.dt());
    let two = cst::<T>(2.0);
    let s0: Vec<T> = (0..k).map(|c| pr.y0[c] + pr.z0[c]).collect();
    let vals = (0..game.n_paths())
        .into_par_iter()
        .map(|path| {
            let mut buf = vec![T::zero(); k];
            let mut acc = T::zero();
            match (agent, form) {
                (Agent::Trader, Form::Running) => {
                    for j in 0..n {
                        let (v, e) = (nu.rate.at(path, j), eta.rate.at(path, j));
                        let q = st.books.q_i.at(path, j);
                        let y = st.y.at(path, j);
                        let al = ens.alpha.at(path, j);
                        let mut lin = vec![T::zero(); k];
                        pr.h.mul_vec_into(v, &mut buf);
                        for c in 0..k {
                            lin[c] = al[c] + buf[c];
                        }
                        pr.p.mul_vec_into(y, &mut buf);
                        for c in 0..k {
                            lin[c] -= buf[c];
                        }
                        pr.psi.mul_vec_into(e, &mut buf);
                        for c in 0..k {
                            lin[c] -= two * buf[c];
                        }
                        pr.r_i.mul_vec_into(q, &mut buf);
                        for c in 0..k {
                            lin[c] -= buf[c];
                        }
                        acc += (dot(&lin, q) - pr.b.quad(e, e)) * dt;
                    }
                    pr.x_i0 + dot(&s0, &pr.q_i0) - pr.psi.quad(&pr.q_i0, &pr.q_i0) + acc
                }
                (Agent::Broker, Form::Running) => {
                    for j in 0..n {
                        let (v, e) = (nu.rate.at(path, j), eta.rate.at(path, j));
                        let q = st.books.q_b.at(path, j);
                        let y = st.y.at(path, j);
                        let al = ens.alpha.at(path, j);
                        let mut lin = al.to_vec();
                        game.derived.two_phi_minus_h.mul_vec_into(v, &mut buf);
                        for c in 0..k {
                            lin[c] -= buf[c];
                        }
                        pr.p.mul_vec_into(y, &mut buf);
                        for c in 0..k {
                            lin[c] -= buf[c];
                        }
                        pr.phi.mul_vec_into(e, &mut buf);
                        for c in 0..k {
                            lin[c] += two * buf[c];
                        }
                        pr.r_b.mul_vec_into(q, &mut buf);
                        for c in 0..k {
                            lin[c] -= buf[c];
                        }
                        acc += (dot(&lin, q) - pr.a.quad(v, v) + pr.b.quad(e, e)) * dt;
                    }
                    pr.x_b0 + dot(&s0, &pr.q_b0) - pr.phi.quad(&pr.q_b0, &pr.q_b0) + acc
                }
                (_, Form::Terminal) => {
                    let (q, x, pen, r) = match agent {
                        Agent::Trader => (&st.books.q_i, &st.books.x_i, &pr.psi, &pr.r_i),
                        Agent::Broker => (&st.books.q_b, &st.books.x_b, &pr.phi, &pr.r_b),
                    };
                    for j in 0..n {
                        let qj = q.at(path, j);
                        acc += r.quad(qj, qj) * dt;
                    }
                    let qn = q.at(path, n);
                    x.at(path, n)[0] + dot(st.s.at(path, n), qn) - pen.quad(qn, qn) - acc
                }
            }
        })
        .collect();
    Ok(vals)
}

pub fn evaluate_criterion<T: Real>(
    game: &Game<T>,
    agent: Agent,
    form: Form,
    nu: &Strategy<T>,
    eta: &Strategy<T>,
) -> Result<CriterionValue> {
    Ok(CriterionValue::from_paths(&criterion_paths(game, agent, form, nu, eta)?))
}

pub fn evaluate_ji<T: Real>(game: &Game<T>, nu: &Strategy<T>, eta: &Strategy<T>) -> Result<CriterionValue> {
    evaluate_criterion(game, Agent::Trader, Form::Running, nu, eta)
}

pub fn evaluate_jb<T: Real>(game: &Game<T>, nu: &Strategy<T>, eta: &Strategy<T>) -> Result<CriterionValue> {
    evaluate_criterion(game, Agent::Broker, Form::Running, nu, eta)
}

/// Difference between the running and terminal forms, per agent.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FormAgreement {
    pub agent: Agent,
    pub running: CriterionValue,
    pub terminal: CriterionValue,
    pub difference: f64,
    pub difference_se: f64,
}

pub fn form_agreement<T: Real>(
    game: &Game<T>,
    agent: Agent,
    nu: &Strategy<T>,
    eta: &Strategy<T>,
) -> Result<FormAgreement> {
    let r = criterion_paths(game, agent, Form::Running, nu, eta)?;
    let t = criterion_paths(game, agent, Form::Terminal, nu, eta)?;
    let d: Vec<T> = r.iter().zip(&t).map(|(&a, &b)| a - b).collect();
    let (m, se) = mean_se(&d);
    Ok(FormAgreement {
        agent,
        running: CriterionValue::from_paths(&r),
        terminal: CriterionValue::from_paths(&t),
        difference: to_f64(m),
        difference_se: to_f64(se),
    })
}

/// Backward tail sums `Σ_{k>j} x_k` over cells `j < n`, for one path.
fn tail_sums<T: Real>(x: &[T], n: usize, k: usize) -> Vec<T> {
    let mut out = vec![T::zero(); n * k];
    for j in (0..n.saturating_sub(1)).rev() {
        for c in 0..k {
            out[j * k + c] = out[(j + 1) * k + c] + x[(j + 1) * k + c];
        }
    }
    out
}

/// `Σ_{k>j} e^{(t_j − t_k)p} p Q_k dt` for cells `j < n`, one path (`q` holds nodes).
pub(crate) fn decay_kernel<T: Real>(game: &Game<T>, q: &[T]) -> Vec<T> {
    let (n, k, dt) = (game.n_steps(), game.k(), game.dt());
    let mut out = vec![T::zero(); n * k];
    let mut pq = vec![T::zero(); k];
    let mut acc = vec![T::zero(); k];
    for j in (0..n.saturating_sub(1)).rev() {
        game.params.p.mul_vec_into(&q[(j + 1) * k..(j + 2) * k], &mut pq);
        for c in 0..k {
            acc[c] = out[(j + 1) * k + c] + pq[c] * dt;
        }
        game.derived.decay_step.mul_vec_into(&acc, &mut out[j * k..(j + 1) * k]);
    }
    out
}

/// Gradient field `g` with `⟨DJ, ζ⟩ = E Σ_j g_j·ζ_j dt` for the given agent.
pub fn gradient<T: Real>(game: &Game<T>, agent: Agent, nu: &Strategy<T>, eta: &Strategy<T>) -> Result<Field<T>> {
    check_pair(game, nu, eta)?;
    let pr = &game.params;
    let st = market_states(pr, &game.ens, &nu.rate, &eta.rate)?;
    let (n, k, dt) = (game.n_steps(), game.k(), game.dt());
    let two = cst::<T>(2.0);
    let mut g = Field::zeros(game.n_paths(), n, k);
    g.par_paths_mut().enumerate().for_each(|(path, row)| {
        let mut buf = vec![T::zero(); k];
        // per-cell running integrand whose tail sum enters the gradient
        let mut integrand = vec![T::zero(); n * k];
        let (q, own) = match agent {
            Agent::Trader => (st.books.q_i.path(path), eta.rate.path(path)),
            Agent::Broker => (st.books.q_b.path(path), nu.rate.path(path)),
        };
        for j in 0..n {
            let (v, e) = (nu.rate.at(path, j), eta.rate.at(path, j));
            let qj = &q[j * k..(j + 1) * k];
            let cell = &mut integrand[j * k..(j + 1) * k];
            cell.copy_from_slice(game.ens.alpha.at(path, j));
            pr.p.mul_vec_into(st.y.at(path, j), &mut buf);
            for c in 0..k {
                cell[c] -= buf[c];
            }
            match agent {
                Agent::Trader => {
                    pr.h.mul_vec_into(v, &mut buf);
                    for c in 0..k {
                        cell[c] += buf[c];
                    }
                    pr.psi.mul_vec_into(e, &mut buf);
                    for c in 0..k {
                        cell[c] -= two * buf[c];
                    }
                    pr.r_i.mul_vec_into(qj, &mut buf);
                    for c in 0..k {
                        cell[c] -= two * buf[c];
                    }
                }
                Agent::Broker => {
                    pr.phi.mul_vec_into(e, &mut buf);
                    for c in 0..k {
                        cell[c] += two * buf[c];
                    }
                    game.derived.two_phi_minus_h.mul_vec_into(v, &mut buf);
                    for c in 0..k {
                        cell[c] -= buf[c];
                    }
                    pr.r_b.mul_vec_into(qj, &mut buf);
                    for c in 0..k {
                        cell[c] -= two * buf[c];
                    }
                }
            }
            for c in 0..k {
                cell[c] *= dt;
            }
        }
        let tail = tail_sums(&integrand, n, k);
        let kern = if agent == Agent::Broker { decay_kernel(game, q) } else { Vec::new() };
        let mut hk = vec![T::zero(); k];
        for j in 0..n {
            let qj = &q[j * k..(j + 1) * k];
            let out = &mut row[j * k..(j + 1) * k];
            match agent {
                Agent::Trader => {
                    pr.b.mul_vec_into(&own[j * k..(j + 1) * k], &mut buf);
                    pr.psi.mul_vec_into(qj, &mut hk);
                    for c in 0..k {
                        out[c] = tail[j * k + c] - two * buf[c] - two * hk[c];
                    }
                }
                Agent::Broker => {
                    pr.a.mul_vec_into(&own[j * k..(j + 1) * k], &mut buf);
                    for c in 0..k {
                        out[c] = tail[j * k + c] - two * buf[c];
                    }
                    game.derived.two_phi_minus_h.mul_vec_into(qj, &mut buf);
                    pr.h.mul_vec_into(&kern[j * k..(j + 1) * k], &mut hk);
                    for c in 0..k {
                        out[c] -= buf[c] + hk[c];
                    }
                }
            }
        }
    });
    Ok(g)
}

/// Per-path pairing `Σ_j g_j·ζ_j dt`.
pub fn pairing_paths<T: Real>(g: &Field<T>, dir: &Field<T>, dt: T) -> Vec<T> {
    assert!(g.same_shape(dir));
    g.par_paths().zip(dir.par_paths()).map(|(a, b)| dot(a, b) * dt).collect()
}

fn check_direction<T: Real>(agent: Agent, dir: &Strategy<T>) -> Result<()> {
    if agent == Agent::Broker && dir.info != Info::Observation {
        return Err(Error::Filtration("broker perturbation must be observation-adapted".into()));
    }
    Ok(())
}

fn perturbed<T: Real>(
    agent: Agent,
    nu: &Strategy<T>,
    eta: &Strategy<T>,
    dir: &Field<T>,
    s: T,
) -> (Strategy<T>, Strategy<T>) {
    match agent {
        Agent::Broker => (Strategy { rate: nu.rate.axpy(s, dir), info: nu.info }, eta.clone()),
        Agent::Trader => (nu.clone(), Strategy { rate: eta.rate.axpy(s, dir), info: eta.info }),
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct GateauxCheck {
    pub agent: Agent,
    pub analytic: f64,
    pub analytic_se: f64,
    pub finite_difference: f64,
    /// Standard error of the per-path difference between the two.
    pub difference_se: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Analytic Gâteaux derivative against a central difference with step `eps`.
pub fn gateaux_check<T: Real>(
    game: &Game<T>,
    agent: Agent,
    nu: &Strategy<T>,
    eta: &Strategy<T>,
    dir: &Strategy<T>,
    eps: f64,
) -> Result<GateauxCheck> {
    check_direction(agent, dir)?;
    let g = gradient(game, agent, nu, eta)?;
    let an = pairing_paths(&g, &dir.rate, game.dt());
    let e = cst::<T>(eps);
    let (np, ep) = perturbed(agent, nu, eta, &dir.rate, e);
    let (nm, em) = perturbed(agent, nu, eta, &dir.rate, -e);
    let jp = criterion_paths(game, agent, Form::Running, &np, &ep)?;
    let jm = criterion_paths(game, agent, Form::Running, &nm, &em)?;
    let fd: Vec<T> = jp.iter().zip(&jm).map(|(&a, &b)| (a - b) / (e + e)).collect();
    let diff: Vec<T> = an.iter().zip(&fd).map(|(&a, &b)| a - b).collect();
    let (am, ase) = mean_se(&an);
    let (fm, _) = mean_se(&fd);
    let (_, dse) = mean_se(&diff);
    let (analytic, finite_difference) = (to_f64(am), to_f64(fm));
    let tolerance = 3.0 * to_f64(dse) + eps * (1.0 + analytic.abs());
    Ok(GateauxCheck {
        agent,
        analytic,
        analytic_se: to_f64(ase),
        finite_difference,
        difference_se: to_f64(dse),
        tolerance,
        passed: (analytic - finite_difference).abs() <= tolerance,
    })
}

/// `Σ_j dt [Δ·cΔ + 2Δ·mΔQ + ΔQ·rΔQ (+ ΔY·pΔQ)]`, the negated quadratic part of the
/// criterion in the agent's own control, evaluated at a difference `Δ`.
pub fn quadratic_form_paths<T: Real>(game: &Game<T>, agent: Agent, delta: &Field<T>) -> Vec<T> {
    let pr = &game.params;
    let (n, k, dt) = (game.n_steps(), game.k(), game.dt());
    let zero = vec![T::zero(); k];
    let dq = integrate_rate(delta, &zero, dt);
    let dy = match agent {
        Agent::Broker => Some(impact_from(delta, &pr.h, &zero, &game.derived.decay_step, dt)),
        Agent::Trader => None,
    };
    let (c, r) = match agent {
        Agent::Trader => (&pr.b, &pr.r_i),
        Agent::Broker => (&pr.a, &pr.r_b),
    };
    let two = cst::<T>(2.0);
    (0..game.n_paths())
        .into_par_iter()
        .map(|path| {
            let mut buf = vec![T::zero(); k];
            let mut acc = T::zero();
            for j in 0..n {
                let d = delta.at(path, j);
                let q = dq.at(path, j);
                let cross = match agent {
                    Agent::Trader => {
                        pr.psi.mul_vec_into(q, &mut buf);
                        two * dot(d, &buf)
                    }
                    Agent::Broker => {
                        game.derived.two_phi_minus_h.mul_vec_into(q, &mut buf);
                        let a = dot(d, &buf);
                        pr.p.mul_vec_into(q, &mut buf);
                        a + dot(dy.as_ref().expect("broker impact").at(path, j), &buf)
                    }
                };
                acc += (c.quad(d, d) + cross + r.quad(q, q)) * dt;
            }
            acc
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ConcavityProbe {
    pub agent: Agent,
    pub rho: f64,
    /// `J(ρx + (1−ρ)y) − ρJ(x) − (1−ρ)J(y)`, ensemble mean.
    pub gap: f64,
    pub std_error: f64,
    /// `ρ(1−ρ)` times the quadratic-form decomposition, ensemble mean.
    pub oracle: f64,
    /// Largest per-path `|gap − oracle|`.
    pub max_path_discrepancy: f64,
    pub passed: bool,
}

/// Chord test of concavity in the agent's own control along `x`, `y`.
pub fn concavity_probe<T: Real>(
    game: &Game<T>,
    agent: Agent,
    nu: &Strategy<T>,
    eta: &Strategy<T>,
    x: &Strategy<T>,
    y: &Strategy<T>,
    rhos: &[f64],
) -> Result<Vec<ConcavityProbe>> {
    check_direction(agent, x)?;
    check_direction(agent, y)?;
    let with = |s: &Strategy<T>| -> (Strategy<T>, Strategy<T>) {
        match agent {
            Agent::Broker => (s.clone(), eta.clone()),
            Agent::Trader => (nu.clone(), s.clone()),
        }
    };
    let eval = |s: &Strategy<T>| {
        let (a, b) = with(s);
        criterion_paths(game, agent, Form::Running, &a, &b)
    };
    let jx = eval(x)?;
    let jy = eval(y)?;
    let quad = quadratic_form_paths(game, agent, &x.rate.sub(&y.rate));
    let mut out = Vec::with_capacity(rhos.len());
    for &rho in rhos {
        let r = cst::<T>(rho);
        let mix = Strategy { rate: x.rate.scale(r).axpy(T::one() - r, &y.rate), info: x.info };
        let jm = eval(&mix)?;
        let w = r * (T::one() - r);
        let gap: Vec<T> = (0..jm.len()).map(|i| jm[i] - r * jx[i] - (T::one() - r) * jy[i]).collect();
        let oracle: Vec<T> = quad.iter().map(|&q| w * q).collect();
        let disc = gap.iter().zip(&oracle).fold(0.0f64, |m, (&g, &o)| m.max(to_f64((g - o).abs())));
        let (gm, gse) = mean_se(&gap);
        let (om, _) = mean_se(&oracle);
        out.push(ConcavityProbe {
            agent,
            rho,
            gap: to_f64(gm),
            std_error: to_f64(gse),
            oracle: to_f64(om),
            max_path_discrepancy: disc,
            passed: to_f64(gm) >= -3.0 * to_f64(gse),
        });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct DeviationCheck {
    pub agent: Agent,
    pub step: f64,
    /// `J(deviation) − J(candidate)`, ensemble mean.
    pub gain: f64,
    pub std_error: f64,
    pub passed: bool,
}

/// Unilateral deviations `s ↦ J(own + s·ζ)` at each step; a Nash point shows no significant gain.
pub fn unilateral_deviation<T: Real>(
    game: &Game<T>,
    agent: Agent,
    nu: &Strategy<T>,
    eta: &Strategy<T>,
    dir: &Strategy<T>,
    steps: &[f64],
) -> Result<Vec<DeviationCheck>> {
    check_direction(agent, dir)?;
    let base = criterion_paths(game, agent, Form::Running, nu, eta)?;
    steps
        .iter()
        .map(|&s| {
            let (a, b) = perturbed(agent, nu, eta, &dir.rate, cst(s));
            let j = criterion_paths(game, agent, Form::Running, &a, &b)?;
            let d: Vec<T> = j.iter().zip(&base).map(|(&x, &y)| x - y).collect();
            let (m, se) = mean_se(&d);
            let (gain, std_error) = (to_f64(m), to_f64(se));
            Ok(DeviationCheck { agent, step: s, gain, std_error, passed: gain <= 3.0 * std_error })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ScalarSpec, TimeGrid};
    use crate::projection::BasisSpec;
    use crate::sim::simulate_signal_and_price;

    fn small_game(spec: ScalarSpec) -> Game<f64> {
        let params = spec.build::<f64>();
        let grid = TimeGrid::new(params.horizon, 20).unwrap();
        let ens = simulate_signal_and_price(&params, &grid, 300, 7).unwrap();
        Game::new(params, ens, BasisSpec { degree: 1, ridge: 1e-8 }).unwrap()
    }

    fn constant(game: &Game<f64>, v: f64) -> Field<f64> {
        Field::from_fn(game.n_paths(), game.n_steps(), 1, |_, _, _| v)
    }

    #[test]
    fn full_information_broker_is_rejected() {
        let g = small_game(ScalarSpec::baseline());
        let nu = Strategy::full(constant(&g, 0.0));
        let eta = Strategy::full(constant(&g, 0.0));
        assert!(matches!(evaluate_ji(&g, &nu, &eta), Err(Error::Filtration(_))));
    }

    #[test]
    fn idle_trader_value_is_deterministic() {
        // zero trading, zero inventory: only the initial cash remains
        let spec = ScalarSpec { q_i0: 0.0, x_i0: 3.0, ..ScalarSpec::baseline() };
        let g = small_game(spec);
        let z = Strategy::observation(constant(&g, 0.0));
        let v = evaluate_ji(&g, &z, &Strategy::full(constant(&g, 0.0))).unwrap();
        assert!((v.mean - 3.0).abs() < 1e-14 && v.std_error < 1e-14);
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let g = small_game(ScalarSpec::baseline());
        let nu = Strategy::observation(g.random_process(Info::Observation, g.n_steps(), 1, 0));
        let eta = Strategy::full(g.random_process(Info::Full, g.n_steps(), 1, 1));
        for (agent, info) in [(Agent::Trader, Info::Full), (Agent::Broker, Info::Observation)] {
            let dir = Strategy { rate: g.random_process(info, g.n_steps(), 2, 0), info };
            let c = gateaux_check(&g, agent, &nu, &eta, &dir, 1e-4).unwrap();
            assert!(c.passed, "{c:?}");
            assert!((c.analytic - c.finite_difference).abs() < 1e-7 * (1.0 + c.analytic.abs()), "{c:?}");
        }
    }

    #[test]
    fn chord_gap_equals_quadratic_form() {
        let g = small_game(ScalarSpec::baseline());
        let nu = Strategy::observation(g.random_process(Info::Observation, g.n_steps(), 3, 0));
        let eta = Strategy::full(g.random_process(Info::Full, g.n_steps(), 3, 1));
        let x = Strategy::observation(g.random_process(Info::Observation, g.n_steps(), 4, 0));
        let y = Strategy::observation(g.random_process(Info::Observation, g.n_steps(), 4, 1));
        for agent in [Agent::Broker, Agent::Trader] {
            for p in concavity_probe(&g, agent, &nu, &eta, &x, &y, &[0.25, 0.5, 0.75]).unwrap() {
                assert!(p.passed && p.gap > 0.0, "{p:?}");
                assert!(p.max_path_discrepancy < 1e-10 * (1.0 + p.oracle.abs()), "{p:?}");
            }
        }
    }
}
