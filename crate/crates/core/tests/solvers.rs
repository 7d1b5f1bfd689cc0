use equinash_core::criteria::{evaluate_ji, Strategy};
use equinash_core::model::{ScalarSpec, TimeGrid};
use equinash_core::perturbation::order0_coefficients;
use equinash_core::picard::{
    contraction_probe, fbsde_consistency_check, filtration_discipline, solve_fixed_point, PicardOptions, Solver, StateBundle,
};
use equinash_core::projection::BasisSpec;
use equinash_core::sim::simulate_signal_and_price;
use equinash_core::{Market, PathField};

fn solver(spec: ScalarSpec, n_paths: usize, n_steps: usize) -> Solver<f64> {
    let params = spec.build();
    let grid = TimeGrid::new(spec.horizon, n_steps).unwrap();
    let ens = simulate_signal_and_price(&params, &grid, n_paths, 3).unwrap();
    Solver::new(Market::new(params, ens, BasisSpec::default()).unwrap())
}

fn mean_abs_terminal(q: &PathField) -> f64 {
    let n = q.n_nodes() - 1;
    (0..q.n_paths()).map(|p| q.at(p, n)[0].abs()).sum::<f64>() / q.n_paths() as f64
}

#[test]
fn zero_problem_is_a_fixed_point_of_phi() {
    let s = solver(ScalarSpec::trivial(), 200, 20);
    let zero = StateBundle::zeros(&s.game);
    let image = s.apply_phi(&zero).unwrap();
    assert_eq!(image.norm(s.game.dt()), 0.0);
    let eq = solve_fixed_point(&s, PicardOptions::default()).unwrap();
    assert!(eq.trace.converged);
    let res = fbsde_consistency_check(&s, &eq).unwrap();
    assert!(res.terminal_passed());
    assert_eq!(res.terminal_nu.norm + res.terminal_eta.norm + res.terminal_z.norm, 0.0);
}

#[test]
fn measured_contraction_grows_like_horizon_squared() {
    let ratios: Vec<f64> = [0.125, 0.25, 0.5]
        .iter()
        .map(|&horizon| {
            let s = solver(ScalarSpec { horizon, ..ScalarSpec::baseline() }, 1000, 40);
            let r = contraction_probe(&s, 10, 1, 0.05).unwrap();
            assert!(r.passed, "T={horizon}: {} > {}", r.max_ratio, r.bound);
            r.max_ratio
        })
        .collect();
    for w in ratios.windows(2) {
        let growth = w[1] / w[0];
        assert!((3.0..6.0).contains(&growth), "growth {growth} over a doubled horizon");
    }
}

#[test]
fn equilibrium_is_filtration_consistent_and_satisfies_terminal_conditions() {
    let s = solver(ScalarSpec::baseline(), 2000, 40);
    let eq = solve_fixed_point(&s, PicardOptions::default()).unwrap();
    assert!(eq.trace.converged);
    assert!(eq.trace.final_residual <= 1e-5);
    assert!(filtration_discipline(&s.game, &eq.bundle.nu) < 1e-6);
    let res = fbsde_consistency_check(&s, &eq).unwrap();
    assert!(res.terminal_passed());
    assert!(res.drifts.iter().all(|d| d.integrated.passed));
}

#[test]
fn equilibrium_beats_holding_for_the_trader() {
    let s = solver(ScalarSpec::baseline(), 2000, 40);
    let eq = solve_fixed_point(&s, PicardOptions::default()).unwrap();
    let nu = Strategy::observation(eq.bundle.nu.clone());
    let at_eq = evaluate_ji(&s.game, &nu, &Strategy::full(eq.bundle.eta.clone())).unwrap();
    let hold = evaluate_ji(&s.game, &nu, &Strategy::full(PathField::zeros(2000, 40, 1))).unwrap();
    assert!(at_eq.mean > hold.mean);
}

#[test]
fn terminal_penalty_drives_trader_inventory_down() {
    // Picard inside its converging range.
    let held: Vec<f64> = [0.25, 0.5, 1.0, 2.0]
        .iter()
        .map(|&psi| {
            let s = solver(ScalarSpec { psi, phi: psi.max(0.05), ..ScalarSpec::baseline() }, 1000, 40);
            let eq = solve_fixed_point(&s, PicardOptions::default()).unwrap();
            assert!(eq.trace.converged, "ψ={psi}");
            mean_abs_terminal(&eq.bundle.q_i)
        })
        .collect();
    assert!(held.windows(2).all(|w| w[1] < w[0]), "{held:?}");

    // Closed-form trader equilibrium without impact covers arbitrarily large penalties.
    let held0: Vec<f64> = [0.5, 8.0, 32.0, 1000.0]
        .iter()
        .map(|&psi| {
            let s = solver(ScalarSpec { psi, h: 0.0, ..ScalarSpec::baseline() }, 500, 40);
            let (_, q_i, _, _) = order0_coefficients(&s).unwrap();
            mean_abs_terminal(&q_i)
        })
        .collect();
    assert!(held0.windows(2).all(|w| w[1] < w[0]), "{held0:?}");
    assert!(held0[3] < 1e-2 * held0[0], "{held0:?}");
}
