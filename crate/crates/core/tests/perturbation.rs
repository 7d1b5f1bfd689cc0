use equinash_core::model::{ScalarSpec, TimeGrid};
use equinash_core::perturbation::{
    assemble_series, explicit_series, grid_series, order0_coefficients, orderm_coefficients, strategy_distance,
};
use equinash_core::picard::{solve_fixed_point, PicardOptions, Solver};
use equinash_core::projection::BasisSpec;
use equinash_core::sim::simulate_signal_and_price;
use equinash_core::{Ensemble, Market, Params};

fn solver(spec: ScalarSpec, n_paths: usize, n_steps: usize) -> Solver<f64> {
    let params: Params = spec.build();
    let grid = TimeGrid::new(spec.horizon, n_steps).unwrap();
    let ens: Ensemble = simulate_signal_and_price(&params, &grid, n_paths, 11).unwrap();
    Solver::new(Market::new(params, ens, BasisSpec::default()).unwrap())
}

fn deterministic_spec() -> ScalarSpec {
    ScalarSpec { sigma_alpha: 0.0, alpha0_var: 0.0, q_b0: 0.3, ..ScalarSpec::baseline() }
}

/// RK4 on a linear system `x' = A x + g(t)` from `x0`, sampled every `every` steps.
fn rk4(a: &[Vec<f64>], g: &dyn Fn(f64) -> Vec<f64>, x0: &[f64], horizon: f64, steps: usize, every: usize) -> Vec<Vec<f64>> {
    let n = x0.len();
    let rhs = |t: f64, x: &[f64]| -> Vec<f64> {
        let gt = g(t);
        (0..n).map(|i| (0..n).map(|j| a[i][j] * x[j]).sum::<f64>() + gt[i]).collect()
    };
    let h = horizon / steps as f64;
    let mut x = x0.to_vec();
    let mut out = vec![x.clone()];
    for s in 0..steps {
        let t = s as f64 * h;
        let k1 = rhs(t, &x);
        let x2: Vec<f64> = (0..n).map(|i| x[i] + 0.5 * h * k1[i]).collect();
        let k2 = rhs(t + 0.5 * h, &x2);
        let x3: Vec<f64> = (0..n).map(|i| x[i] + 0.5 * h * k2[i]).collect();
        let k3 = rhs(t + 0.5 * h, &x3);
        let x4: Vec<f64> = (0..n).map(|i| x[i] + h * k3[i]).collect();
        let k4 = rhs(t + h, &x4);
        for i in 0..n {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if (s + 1) % every == 0 {
            out.push(x.clone());
        }
    }
    out
}

fn solve_small(m: &[Vec<f64>], rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    let mut a: Vec<Vec<f64>> = m.iter().zip(rhs).map(|(r, &b)| r.iter().copied().chain([b]).collect()).collect();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i][c].abs().partial_cmp(&a[j][c].abs()).unwrap()).unwrap();
        a.swap(c, piv);
        for r in 0..n {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..=n {
                    a[r][k] -= f * a[c][k];
                }
            }
        }
    }
    (0..n).map(|i| a[i][n] / a[i][i]).collect()
}

/// Deterministic first-order conditions, state `(Q^I, η⁰, Q^B, ν⁰, V, Q^{I,1}, η¹)`:
/// `Q^I' = η⁰`, `η⁰' = −(α − 2r^I Q^I)/2b`, `Q^B' = ν⁰ − η⁰`, `ν⁰' = −(α − 2r^B Q^B)/2a`,
/// `V' = ν⁰ − pV`, `Q^{I,1}' = η¹`, `η¹' = −(ν⁰ − pV − 2r^I Q^{I,1})/2b`, with the
/// three terminal conditions `η + (ψ/b)Q^I = 0`, `ν + (φ/a)Q^B = 0`, `η¹ + (ψ/b)Q^{I,1} = 0`
/// met by linear shooting on `(η⁰_0, ν⁰_0, η¹_0)`.
fn bvp_oracle(s: &ScalarSpec, n_steps: usize) -> Vec<Vec<f64>> {
    let refine = 400;
    let (a, b) = (s.a, s.b);
    let mut m = vec![vec![0.0; 7]; 7];
    m[0][1] = 1.0;
    m[1][0] = s.r_i / b;
    m[2][3] = 1.0;
    m[2][1] = -1.0;
    m[3][2] = s.r_b / a;
    m[4][3] = 1.0;
    m[4][4] = -s.p;
    m[5][6] = 1.0;
    m[6][3] = -1.0 / (2.0 * b);
    m[6][4] = s.p / (2.0 * b);
    m[6][5] = s.r_i / b;
    let alpha = |t: f64| s.theta + (s.alpha0_mean - s.theta) * (-s.kappa * t).exp();
    let g = |t: f64| vec![0.0, -alpha(t) / (2.0 * b), 0.0, -alpha(t) / (2.0 * a), 0.0, 0.0, 0.0];
    let zero = |_: f64| vec![0.0; 7];
    let terminal = |x: &[f64]| [x[1] + s.psi / b * x[0], x[3] + s.phi / a * x[2], x[6] + s.psi / b * x[5]];
    let base0 = [s.q_i0, 0.0, s.q_b0, 0.0, 0.0, 0.0, 0.0];
    let steps = n_steps * refine;
    let end = |x0: &[f64], forced: bool| {
        let path = if forced { rk4(&m, &g, x0, s.horizon, steps, steps) } else { rk4(&m, &zero, x0, s.horizon, steps, steps) };
        terminal(path.last().unwrap())
    };
    let r0 = end(&base0, true);
    let mut jac = vec![vec![0.0; 3]; 3];
    for (col, idx) in [1usize, 3, 6].into_iter().enumerate() {
        let mut e = [0.0; 7];
        e[idx] = 1.0;
        let r = end(&e, false);
        for row in 0..3 {
            jac[row][col] = r[row];
        }
    }
    let shots = solve_small(&jac, &[-r0[0], -r0[1], -r0[2]]);
    let mut x0 = base0;
    x0[1] = shots[0];
    x0[3] = shots[1];
    x0[6] = shots[2];
    rk4(&m, &g, &x0, s.horizon, steps, refine)
}

#[test]
fn zero_problem_has_zero_coefficients() {
    let s = solver(ScalarSpec::trivial(), 200, 20);
    let series = explicit_series(&s, 2).unwrap();
    for m in 0..=2 {
        assert_eq!(series.eta[m].max_abs(), 0.0);
        assert_eq!(series.nu[m].max_abs(), 0.0);
    }
}

#[test]
fn trader_without_penalties_or_signal_holds() {
    let spec = ScalarSpec { psi: 0.0, r_i: 0.0, q_i0: 2.0, ..ScalarSpec::trivial() };
    let s = solver(spec, 200, 20);
    let (eta0, q_i0, _, _) = order0_coefficients(&s).unwrap();
    assert!(eta0.max_abs() < 1e-14);
    assert!(q_i0.as_slice().iter().all(|&q| (q - 2.0).abs() < 1e-14));
}

fn check_against_oracle(spec: ScalarSpec, n: usize) {
    let s = solver(spec, 300, n);
    let series = explicit_series(&s, 1).unwrap();
    let oracle = bvp_oracle(&spec, n);
    let dt = spec.horizon / n as f64;
    let scale = oracle.iter().map(|x| x[1].abs().max(x[3].abs())).fold(0.0, f64::max);
    let scale1 = oracle.iter().map(|x| x[6].abs()).fold(0.0, f64::max);
    let (mut e0, mut e1, mut e2) = (0.0f64, 0.0f64, 0.0f64);
    for j in 0..n {
        for p in [0, 123, 299] {
            e0 = e0.max((series.eta[0].at(p, j)[0] - oracle[j][1]).abs());
            e1 = e1.max((series.nu[0].at(p, j)[0] - oracle[j][3]).abs());
            e2 = e2.max((series.eta[1].at(p, j)[0] - oracle[j][6]).abs());
        }
    }
    assert!(e0 <= 2.0 * dt * scale, "η⁰ gap {e0}");
    assert!(e1 <= 2.0 * dt * scale, "ν⁰ gap {e1}");
    assert!(e2 <= 2.0 * dt * scale1, "η¹ gap {e2}");
}

#[test]
fn order_zero_and_one_match_deterministic_oracle() {
    check_against_oracle(deterministic_spec(), 50);
}

#[test]
fn stiff_terminal_penalty_matches_deterministic_oracle() {
    check_against_oracle(ScalarSpec { psi: 50.0, phi: 20.0, ..deterministic_spec() }, 50);
}

#[test]
fn zero_previous_order_gives_zero() {
    let s = solver(ScalarSpec::baseline(), 300, 20);
    let g = &s.game;
    let cells = equinash_core::PathField::zeros(g.n_paths(), g.n_steps(), 1);
    let nodes = equinash_core::PathField::zeros(g.n_paths(), g.n_steps() + 1, 1);
    let (e, qi, nu, qb) = orderm_coefficients(&s, &cells, &cells, &nodes).unwrap();
    for f in [&e, &qi, &nu, &qb] {
        assert!(f.max_abs() < 1e-14);
    }
}

#[test]
fn higher_orders_start_without_inventory() {
    let s = solver(ScalarSpec::baseline(), 300, 20);
    let series = explicit_series(&s, 2).unwrap();
    for m in 1..=2 {
        for p in 0..s.game.n_paths() {
            assert_eq!(series.q_i[m].at(p, 0)[0], 0.0);
            assert_eq!(series.q_b[m].at(p, 0)[0], 0.0);
        }
    }
}

#[test]
fn assembly_identities() {
    let s = solver(ScalarSpec::baseline(), 300, 20);
    let series = explicit_series(&s, 1).unwrap();
    let at_zero = assemble_series(&series, 0.0, 1).unwrap();
    assert_eq!(at_zero.eta.as_slice(), series.eta[0].as_slice());
    assert_eq!(at_zero.nu.as_slice(), series.nu[0].as_slice());
    let h = 0.01;
    let m0 = assemble_series(&series, h, 0).unwrap();
    let m1 = assemble_series(&series, h, 1).unwrap();
    let diff = m1.eta.sub(&m0.eta).sub(&series.eta[1].scale(h));
    assert!(diff.max_abs() < 1e-15);
    assert!(assemble_series(&series, -0.1, 1).is_err());
    assert!(assemble_series(&series, 0.1, 2).is_err());
}

#[test]
fn series_approaches_picard_as_order_grows() {
    let s = solver(ScalarSpec::baseline(), 1000, 40);
    let opts = PicardOptions { tol: 1e-10, max_iter: 200 };
    let series = grid_series(&s, 2, opts).unwrap();
    let h = 0.25;
    let eq = solve_fixed_point(&s.with_impact(h).unwrap(), opts).unwrap();
    let dt = s.game.dt();
    let gaps: Vec<f64> = (0..=2)
        .map(|m| {
            let pair = assemble_series(&series, h, m).unwrap();
            let (dn, de) = strategy_distance(&eq.bundle.nu, &pair.nu, &eq.bundle.eta, &pair.eta, dt);
            dn.norm + de.norm
        })
        .collect();
    assert!(gaps[1] < gaps[0] && gaps[2] < gaps[1], "{gaps:?}");
}
