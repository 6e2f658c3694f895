use kuramoto_mfg::bifurcation::*;
use kuramoto_mfg::*;

fn grid() -> std::sync::Arc<TorusGrid> {
    make_grid(256).unwrap()
}

#[test]
fn critical_coupling_values() {
    assert_eq!(critical_coupling(1.0, 1.0).unwrap(), 1.5);
    assert!((critical_coupling(0.5, 2f64.sqrt()).unwrap() - 3.0).abs() < 1e-14);
    assert!((critical_coupling(1e-12, 1.0).unwrap() - 0.5).abs() < 1e-11);
}

#[test]
fn dimensionless_substitution() {
    let p = to_dimensionless(1.0, 2f64.sqrt(), 1.0).unwrap();
    assert!((p.lambda - 1.0).abs() < 1e-15 && (p.zeta - 1.0).abs() < 1e-15);
    let p = to_dimensionless(2.0, 1.0, 0.25).unwrap();
    assert_eq!((p.lambda, p.zeta), (4.0, 1.0));
    for (b, s, g) in [(0.3, 0.7, 1.9), (5.0, 2.5, 0.01)] {
        let (b2, g2) = from_dimensionless(to_dimensionless(b, s, g).unwrap(), s).unwrap();
        assert!((b2 - b).abs() <= 1e-15 * b && (g2 - g).abs() <= 1e-15 * g.max(1.0));
    }
    assert!(to_dimensionless(-1.0, 1.0, 0.0).is_err());
}

#[test]
fn self_consistency_map_properties() {
    let g = grid();
    let opts = SolverOptions::default();
    let phys = PhysicalParams::new(1.0, 1.0, 2.0).unwrap();
    assert!(self_consistency_map(&phys, 0.0, &g, &opts).unwrap().abs() <= 1e-14);
    let h = 1e-5;
    let slope = self_consistency_map(&phys, h, &g, &opts).unwrap() / h;
    let expected = phys.kappa / phys.kappa_c();
    assert!((slope / expected - 1.0).abs() <= 1e-4, "{slope} vs {expected}");
    for gamma in [0.1, 1.0, 10.0] {
        assert!(self_consistency_map(&phys, gamma, &g, &opts).unwrap() <= phys.kappa);
    }
}

#[test]
fn subcritical_coupling_has_no_synchronized_state() {
    let phys = PhysicalParams::new(1.0, 1.0, 1.4).unwrap();
    let out = solve_branch(&phys, &grid(), &SolverOptions::default()).unwrap();
    assert_eq!(out, BranchOutcome::NoSynchronizedEquilibrium { kappa: 1.4, kappa_c: 1.5 });
}

#[test]
fn supercritical_fixed_point_is_unique() {
    let g = grid();
    let opts = SolverOptions::default();
    let solver = BranchSolver::with_reach(1.0, 1.0, 1.6, &g, &opts).unwrap();
    let p = solver.solve(1.6).unwrap().point().cloned().unwrap();
    assert!(p.gamma_star > 0.0 && p.residual <= 1e-9 && p.gprime < 0.0);
    let scan: Vec<f64> = solver.scan_g(1.6, 200).unwrap().into_iter().map(|(_, g)| g).collect();
    assert_eq!(sign_changes(&scan), 1);
    // The fixed point does not move under grid refinement.
    let fine = solve_branch(&PhysicalParams::new(1.0, 1.0, 1.6).unwrap(), &make_grid(512).unwrap(), &opts)
        .unwrap()
        .point()
        .cloned()
        .unwrap();
    assert!((fine.gamma_star - p.gamma_star).abs() <= 1e-8);
}

#[test]
fn branch_shrinks_toward_threshold() {
    let g = grid();
    let opts = SolverOptions::default();
    let solver = BranchSolver::with_reach(1.0, 1.0, 1.6, &g, &opts).unwrap();
    let near = solver.solve(1.501).unwrap().point().cloned().unwrap();
    let far = solver.solve(1.6).unwrap().point().cloned().unwrap();
    assert!(near.gamma_star <= far.gamma_star);
    assert!(near.a_star <= 0.05);
    // Near the threshold f ~ (1 + 2 A cos x) / (2 pi), up to O(A) relative
    // corrections.
    let predicted = near.a_star / std::f64::consts::PI;
    assert!((near.sup_dist_uniform / predicted - 1.0).abs() < 2.0 * near.a_star);
}

#[test]
fn branch_sweep_trends() {
    let g = grid();
    let opts = SolverOptions::default();
    let kappas = [1.52, 1.6, 2.0, 3.0];
    let (pts, rep) = branch_sweep(1.0, 1.0, &kappas, &g, &opts, Execution::default()).unwrap();
    assert_eq!(pts.len(), 4);
    assert!(rep.zeta_monotone && rep.gamma_nondecreasing && rep.sup_dist_decreasing);
    let (seq, _) = branch_sweep(1.0, 1.0, &kappas, &g, &opts, Execution::Sequential).unwrap();
    assert_eq!(pts, seq);
    assert!(branch_sweep(1.0, 1.0, &[1.4, 2.0], &g, &opts, Execution::Sequential).is_err());
}

#[test]
fn strong_coupling_synchronizes() {
    let phys = PhysicalParams::new(1.0, 1.0, 75.0).unwrap();
    let p = solve_branch(&phys, &make_grid(512).unwrap(), &SolverOptions::default())
        .unwrap()
        .point()
        .cloned()
        .unwrap();
    assert!(p.a_star >= 0.8, "A* = {}", p.a_star);
}
