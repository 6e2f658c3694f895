use kuramoto_mfg::margin::{Checked, DEFAULT_REL_TOL};
use kuramoto_mfg::sensitivity::{first_variation, variations};
use kuramoto_mfg::shape::*;
use kuramoto_mfg::*;

fn solve(lambda: f64, zeta: f64, m: usize) -> HjbSolution {
    let g = make_grid(m).unwrap();
    solve_hjb(ModelParams::new(lambda, zeta).unwrap(), &g, &SolverOptions::default()).unwrap()
}

fn assert_all_above(r: &MarginReport, floor: f64) {
    for m in &r.margins {
        assert!(m.min_margin >= floor, "{} = {:e} at {}", m.name, m.min_margin, m.argmin_x);
        assert!(m.pass, "{}", m.name);
    }
}

#[test]
fn u_shape_at_reference_point() {
    let r = verify_u_shape(&solve(1.0, 2.0, 512)).unwrap();
    assert_eq!(r.len(), 5);
    assert_all_above(&r, -1e-9);
}

#[test]
fn u_shape_near_threshold() {
    let (lambda, zeta) = (1.0, 1e-3);
    let sol = solve(lambda, zeta, 256);
    assert_all_above(&verify_u_shape(&sol).unwrap(), -1e-9);
    // u / sin x is nearly the constant zeta / (lambda + 1).
    let p = sol.grid().pi_index();
    for j in 1..p {
        let q = sol.u.at(j) / sol.grid().sin_at(j);
        assert!((q / (zeta / (lambda + 1.0)) - 1.0).abs() < 1e-2, "node {j}: {q}");
    }
}

#[test]
fn flipped_concavity_is_detected() {
    let sol = solve(1.0, 5.0, 512);
    let p = sol.grid().pi_index();
    let uxx = sol.u.diff().diff();
    let flipped = Checked::nodes(&uxx, 1, p - 1).margin("u_convex", DEFAULT_REL_TOL, Some(&uxx));
    assert!(!flipped.pass);
    let r = verify_u_shape(&sol).unwrap();
    assert!(r.get("u_concave").unwrap().pass);
    assert!(-uxx.at(p - 1) > 0.0);
}

#[test]
fn wronskian_and_curvature_at_reference_point() {
    let sol = solve(1.0, 2.0, 512);
    let r = verify_wk(&sol).unwrap();
    assert!(r.get("W_nonneg").unwrap().min_margin >= -1e-9);
    assert!(r.get("K_nonneg").unwrap().min_margin >= -1e-8);
    assert!(r.get("K_at_pi").unwrap().min_margin >= -1e-6);
    assert!(r.all_pass(), "{:?}", r.failures());
    assert!(wk_ode_defect(&sol) <= 1e-8);
}

#[test]
fn endpoint_balance_from_taylor_fit() {
    let sol = solve(1.0, 2.0, 512);
    let alpha = endpoint_slope(&sol);
    let (lambda, zeta) = (sol.lambda(), sol.zeta());
    let fit = lambda * alpha - alpha * alpha - zeta - 6.0 * taylor_cubic_at_pi(&sol);
    assert!(fit.abs() <= 1e-4, "fit balance {fit}");
    let spectral = lambda * alpha - alpha * alpha - zeta - 6.0 * spectral_cubic_at_pi(&sol);
    assert!(spectral.abs() <= 1e-8, "spectral balance {spectral}");
}

#[test]
fn z_bounds_at_reference_point() {
    let sol = solve(1.0, 2.0, 512);
    let var = first_variation(&sol).unwrap();
    let r = verify_z_bounds(&sol, &var).unwrap();
    assert_all_above(&r, -1e-9);
    assert!(z_flux_defect(&sol, &var) <= 1e-7);
}

#[test]
fn z_bounds_near_threshold() {
    let (lambda, zeta) = (1.0, 1e-3);
    let sol = solve(lambda, zeta, 256);
    let var = first_variation(&sol).unwrap();
    let r = verify_z_bounds(&sol, &var).unwrap();
    assert!(r.get("Z_lower").unwrap().min_margin >= -1e-9);
    // At zeta = 0, Z = 1 / (lambda + 1).
    assert!((var.zq.at(0) - 1.0 / (lambda + 1.0)).abs() < 1e-2);
}

#[test]
fn shape_suite_passes_across_parameters() {
    for (lambda, zeta) in [(0.1, 0.1), (0.1, 20.0), (10.0, 0.1), (10.0, 20.0), (1.0, 5.0)] {
        let sol = solve(lambda, zeta, 512);
        let var = variations(&sol).unwrap();
        let r = verify_shape(&sol, &var).unwrap();
        assert!(r.all_pass(), "({lambda}, {zeta}): {:?}", r.failures());
    }
}
