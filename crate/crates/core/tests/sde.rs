use kuramoto_mfg::bifurcation::{solve_branch, PhysicalParams};
use kuramoto_mfg::sde::*;
use kuramoto_mfg::*;

fn solve(lambda: f64, zeta: f64) -> HjbSolution {
    let g = make_grid(256).unwrap();
    solve_hjb(ModelParams::new(lambda, zeta).unwrap(), &g, &SolverOptions::default()).unwrap()
}

fn equilibrium(phys: &PhysicalParams) -> HjbSolution {
    let g = make_grid(256).unwrap();
    let opts = SolverOptions::default();
    let p = solve_branch(phys, &g, &opts).unwrap().point().cloned().unwrap();
    solve_hjb(ModelParams::new(phys.lambda(), p.zeta_star).unwrap(), &g, &opts).unwrap()
}

#[test]
fn uniform_law_is_invariant() {
    let law = simulate_stationary(&solve(1.0, 0.0), &SimConfig::default()).unwrap();
    assert!(law.l1_to_density <= 0.02, "L1 = {}", law.l1_to_density);
    assert!((law.masses.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
}

#[test]
fn equilibrium_density_is_invariant() {
    let law = simulate_stationary(&solve(1.0, 2.0), &SimConfig::default()).unwrap();
    assert!(law.l1_to_density <= 0.05, "L1 = {}", law.l1_to_density);
    // No upward drift across time windows beyond the per-window noise.
    let noise = law.window_l1.iter().fold(0.0f64, |m, x| m.max(*x));
    assert!(law.window_trend() <= noise, "{:?}", law.window_l1);
}

#[test]
fn same_seed_gives_identical_histograms() {
    let sol = solve(1.0, 2.0);
    let cfg = SimConfig { n_paths: 8, horizon: 20.0, burn_in: 1.0, ..Default::default() };
    let a = simulate_stationary_with(&sol, &cfg, Execution::Parallel).unwrap();
    let b = simulate_stationary_with(&sol, &cfg, Execution::Sequential).unwrap();
    assert_eq!(a.masses, b.masses);
    let c = simulate_stationary(&sol, &SimConfig { seed: cfg.seed + 1, ..cfg }).unwrap();
    assert_ne!(a.masses, c.masses);
}

#[test]
fn halving_the_step_stays_within_noise() {
    let sol = solve(1.0, 2.0);
    let coarse = simulate_stationary(&sol, &SimConfig { dt: 2e-3, ..Default::default() }).unwrap();
    let fine = simulate_stationary(&sol, &SimConfig { dt: 1e-3, seed: 99, ..Default::default() }).unwrap();
    let gap: f64 = coarse.masses.iter().zip(&fine.masses).map(|(a, b)| (a - b).abs()).sum();
    assert!(gap <= 0.05, "L1 between step sizes {gap}");
}

#[test]
fn invalid_configs_are_rejected() {
    let sol = solve(1.0, 0.5);
    for cfg in [
        SimConfig { dt: 0.1, ..Default::default() },
        SimConfig { burn_in: 300.0, ..Default::default() },
        SimConfig { bins: 0, ..Default::default() },
        SimConfig { n_paths: 0, ..Default::default() },
    ] {
        assert!(matches!(simulate_stationary(&sol, &cfg), Err(Error::InvalidConfig(_))));
    }
}

#[test]
fn zero_perturbation_gives_identical_costs() {
    let phys = PhysicalParams::new(1.0, 1.0, 3.0).unwrap();
    let sol = equilibrium(&phys);
    let zero = GridFn::constant(sol.grid(), 0.0);
    let cfg = SimConfig { n_paths: 200, ..Default::default() };
    let r = policy_cost(&sol, &phys, &zero, &cfg).unwrap();
    assert_eq!(r.j_opt, r.j_pert);
    assert_eq!(r.ci_diff, 0.0);
    assert!(r.best_response_holds);
    assert_eq!(r.offset, 3.0);
}

#[test]
fn optimal_feedback_beats_perturbation_and_matches_value() {
    let phys = PhysicalParams::new(1.0, 1.0, 3.0).unwrap();
    let sol = equilibrium(&phys);
    let pert = GridFn::from_fn(sol.grid(), |x| 0.5 * x.sin());
    let cfg = SimConfig { n_paths: 10_000, ..Default::default() };
    let r = policy_cost(&sol, &phys, &pert, &cfg).unwrap();
    assert!(r.j_opt + r.ci_opt < r.j_pert - r.ci_pert, "{r:?}");
    assert!(r.coupling_mismatch.abs() <= 1e-8);
    assert!((r.j_opt - r.hjb_value).abs() <= 3.0 * r.ci_opt, "{r:?}");
}

#[test]
fn canned_perturbations_are_suboptimal() {
    let phys = PhysicalParams::new(1.0, 1.0, 3.0).unwrap();
    let sol = equilibrium(&phys);
    let cfg = SimConfig { n_paths: DEFAULT_COST_PATHS, ..Default::default() };
    let perts = canned_perturbations(&sol);
    assert_eq!(perts.len(), 5);
    for (name, p) in perts {
        let r = policy_cost(&sol, &phys, &p, &cfg).unwrap();
        assert!(r.best_response_holds, "{name}: {r:?}");
    }
}

#[test]
fn mismatched_parameters_are_rejected() {
    let sol = solve(1.0, 2.0);
    let phys = PhysicalParams::new(1.0, 1.0, 3.0).unwrap();
    let zero = GridFn::constant(sol.grid(), 0.0);
    assert!(matches!(policy_cost(&sol, &phys, &zero, &SimConfig::default()), Err(Error::InvalidConfig(_))));
}
