use std::f64::consts::{FRAC_PI_2, PI};

use kuramoto_mfg::moments::*;
use kuramoto_mfg::quadrature::{gauss_legendre, integrate};
use kuramoto_mfg::sensitivity::{first_variation, variations, VariationState};
use kuramoto_mfg::*;

fn setup(lambda: f64, zeta: f64, m: usize) -> (HjbSolution, VariationState) {
    let g = make_grid(m).unwrap();
    let sol = solve_hjb(ModelParams::new(lambda, zeta).unwrap(), &g, &SolverOptions::default()).unwrap();
    let var = variations(&sol).unwrap();
    (sol, var)
}

#[test]
fn increments_near_threshold() {
    let (sol, var) = setup(1.0, 1e-3, 256);
    let inc = increments(&sol, &var).unwrap();
    assert!((inc.delta - 1.0).abs() < 1e-2);
    let g = sol.grid();
    assert!(inc.c.max_abs_diff(&GridFn::cos(g)) < 1e-2);
    let sin2 = GridFn::from_fn(g, |x| x.sin().powi(2));
    assert!(inc.s.max_abs_diff(&sin2) < 1e-2);
    // H = e^{-v} sqrt(D0 Dpi) / sin with D0 Dpi = sin^2 / 4 at leading order.
    let half_ev = sol.v.map(|v| 0.5 * (-v).exp());
    let p = g.pi_index();
    for j in 0..=p {
        assert!((inc.h.at(j) / half_ev.at(j) - 1.0).abs() < 1e-2, "node {j}");
    }
}

#[test]
fn increments_telescope() {
    let (sol, var) = setup(1.0, 2.0, 512);
    let inc = increments(&sol, &var).unwrap();
    let sum = &inc.delta0 + &inc.deltapi;
    for &s in sum.values() {
        assert!((s - inc.delta).abs() <= 1e-12);
    }
    assert!(cx_defect(&inc) <= 1e-10);
    assert!(s_identity_defect(&inc) <= 1e-12);
}

#[test]
fn c_is_a_decreasing_bijection() {
    let (sol, var) = setup(1.0, 2.0, 512);
    let inc = increments(&sol, &var).unwrap();
    let c_mid = inc.c.eval_offgrid(FRAC_PI_2);
    assert!(c_mid > -1.0 && c_mid < 1.0);
    let cx = inc.c.diff();
    let p = sol.grid().pi_index();
    assert!((1..p).all(|j| cx.at(j) < 0.0));
    assert!((inc.c.at(0) - 1.0).abs() < 1e-14 && (inc.c.at(p) + 1.0).abs() < 1e-14);
}

#[test]
fn geometric_mean_is_nonincreasing() {
    let (sol, var) = setup(1.0, 2.0, 512);
    let inc = increments(&sol, &var).unwrap();
    let r = verify_geometric_mean(&sol, &inc);
    for m in &r.margins {
        assert!(m.min_margin >= -1e-8 * m.tol.max(1.0), "{m:?}");
    }
    // -S H_x / H equals S (u + cot) + C C_x on the interior.
    let (geo, _) = eta_monotone_terms(&sol, &inc);
    let hl = h_log_derivative(&sol, &inc);
    let p = sol.grid().pi_index();
    for j in 2..=p - 2 {
        let lhs = inc.s.at(j) * hl.at(j);
        assert!((lhs - geo.at(j)).abs() <= 1e-9 * geo.at(j).abs().max(1.0), "node {j}");
    }
}

#[test]
fn geometric_mean_near_threshold() {
    let (sol, var) = setup(1.0, 1e-3, 256);
    let inc = increments(&sol, &var).unwrap();
    let r = verify_geometric_mean(&sol, &inc);
    assert!(r.get("H_nonincreasing_discrete").unwrap().min_margin >= -1e-9);
}

#[test]
fn i_profiles_solve_their_odes() {
    for (lambda, zeta) in [(1.0, 2.0), (0.1, 20.0), (10.0, 0.1)] {
        let (sol, _) = setup(lambda, zeta, 512);
        assert!(i_ode_defect(&sol) <= 1e-8, "({lambda}, {zeta})");
        let r = verify_i_bounds(&sol).unwrap();
        assert!(r.all_pass(), "({lambda}, {zeta}): {:?}", r.failures());
    }
    let (sol, _) = setup(1.0, 2.0, 512);
    let r = verify_i_bounds(&sol).unwrap();
    assert!(r.get("I0_lower").unwrap().min_margin >= -1e-8);
    assert!(r.get("Ipi_upper").unwrap().min_margin >= -1e-8);
    assert!(r.get("t_gt_u_interval").unwrap().pass);
}

#[test]
fn pushforward_is_nearly_uniform_at_small_coupling() {
    let (sol, var) = setup(1.0, 1e-3, 256);
    let inc = increments(&sol, &var).unwrap();
    let eta = eta_density(&sol, &inc).unwrap();
    let g = sol.grid();
    for (j, (&th, &e)) in eta.theta_nodes.iter().zip(&eta.eta_values).enumerate() {
        assert!((th - g.node(j)).abs() < 1e-2);
        assert!((e * PI - 1.0).abs() < 1e-2);
    }
}

#[test]
fn pushforward_is_a_probability_density() {
    let (sol, var) = setup(1.0, 5.0, 512);
    let inc = increments(&sol, &var).unwrap();
    let eta = eta_density(&sol, &inc).unwrap();
    assert!((eta.mass - 1.0).abs() <= 1e-8);
    assert!(eta.cbar >= 0.0);
}

#[test]
fn eta_is_nonincreasing_and_split_holds() {
    let (sol, var) = setup(1.0, 2.0, 512);
    let inc = increments(&sol, &var).unwrap();
    let eta = eta_density(&sol, &inc).unwrap();
    let r = verify_eta_monotone(&sol, &inc, &eta);
    let full = r.get("eta_monotone").unwrap().min_margin;
    let geo = r.get("eta_split_geometric").unwrap().min_margin;
    let z = r.get("eta_split_z").unwrap().min_margin;
    assert!(full >= -1e-8 && geo >= -1e-8 && z >= -1e-8);
    assert!(full >= geo + z - 1e-9);
    let scale = eta.eta_values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    for w in eta.eta_values.windows(2) {
        assert!(w[1] - w[0] <= 1e-7 * scale);
    }
}

#[test]
fn cubic_moment_through_pushforward() {
    let (sol, var) = setup(1.0, 2.0, 512);
    let s = moment_summary(&sol, &var).unwrap();
    assert!((s.cubic_pushforward - s.cubic_direct).abs() <= 1e-7 * s.cubic_direct.abs() + 1e-12);
    assert!(s.cubic_direct >= -1e-10);

    let (sol, var) = setup(1.0, 1e-3, 256);
    let s = moment_summary(&sol, &var).unwrap();
    assert!((s.cubic_pushforward - s.cubic_direct).abs() <= 1e-12);
}

#[test]
fn moment_suite_passes_on_the_sweep() {
    for lambda in [0.1, 1.0, 10.0] {
        for zeta in [0.1, 1.0, 5.0, 20.0] {
            let (sol, var) = setup(lambda, zeta, 512);
            let r = verify_moments(&sol, &var).unwrap();
            assert!(r.all_pass(), "({lambda}, {zeta}): {:?}", r.failures());
            let s = moment_summary(&sol, &var).unwrap();
            assert!(s.cbar >= 0.0 && s.cubic_direct >= -1e-10 && s.gradient_moment > 0.0);
        }
    }
}

// Skewness of densities on the half circle.

/// `int (cbar - cos)^3 rho` for a step density by Gauss-Legendre on each step.
fn skewness_by_quadrature(breaks: &[f64], levels: &[f64]) -> f64 {
    let piece = |g: &dyn Fn(f64) -> f64| -> f64 {
        breaks.windows(2).zip(levels).map(|(w, lv)| lv * integrate(g, w[0], w[1], 4, 20)).sum()
    };
    let cbar = piece(&|t: f64| t.cos());
    piece(&move |t: f64| (cbar - t.cos()).powi(3))
}

#[test]
fn step_density_skewness_matches_closed_form() {
    // 2/pi on [0, pi/2]: cbar = 2/pi and int_0^{pi/2} cos^k = pi/2, 1, pi/4, 2/3.
    let c = 2.0 / PI;
    let exact = (2.0 / PI) * (c.powi(3) * FRAC_PI_2 - 3.0 * c * c + 3.0 * c * PI / 4.0 - 2.0 / 3.0);
    let d = HalfCircleDensity::Steps { breaks: vec![0.0, FRAC_PI_2, PI], levels: vec![2.0 / PI, 0.0] };
    let got = cosine_skewness(&d).unwrap();
    assert!(exact > 0.0);
    assert!((got - exact).abs() <= 1e-10, "{got} vs {exact}");
    assert!((d.mean_cos() - c).abs() < 1e-15);
}

#[test]
fn increasing_density_has_negative_skewness() {
    let n = 64;
    let theta: Vec<f64> = (0..=n).map(|k| PI * k as f64 / n as f64).collect();
    let values: Vec<f64> = theta.iter().map(|t| 2.0 * t / (PI * PI)).collect();
    let got = cosine_skewness(&HalfCircleDensity::Sampled { theta, values }).unwrap();
    let rho = |t: f64| 2.0 * t / (PI * PI);
    let cbar = integrate(|t| t.cos() * rho(t), 0.0, PI, 8, 20);
    let oracle = integrate(|t| (cbar - t.cos()).powi(3) * rho(t), 0.0, PI, 8, 20);
    assert!(oracle < 0.0);
    assert!((got - oracle).abs() <= 1e-12, "{got} vs {oracle}");
}

#[test]
fn seeded_nonincreasing_step_densities() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let mut worst = f64::INFINITY;
    for _ in 0..1000 {
        let k = rng.random_range(1..=12);
        let mut cuts: Vec<f64> = (0..k - 1).map(|_| rng.random_range(0.0..PI)).collect();
        cuts.sort_by(f64::total_cmp);
        let mut breaks = vec![0.0];
        breaks.extend(cuts);
        breaks.push(PI);
        breaks.dedup();
        let n = breaks.len() - 1;
        let mut raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        raw.sort_by(|a, b| b.total_cmp(a));
        if rng.random_bool(0.2) {
            raw[n - 1] = 0.0;
        }
        let mass: f64 = breaks.windows(2).zip(&raw).map(|(w, l)| l * (w[1] - w[0])).sum();
        if mass <= 0.0 {
            continue;
        }
        let levels: Vec<f64> = raw.iter().map(|l| l / mass).collect();
        let oracle = skewness_by_quadrature(&breaks, &levels);
        let d = HalfCircleDensity::Steps { breaks, levels };
        let s = cosine_skewness(&d).unwrap();
        assert!((s - oracle).abs() <= 1e-11, "{s} vs {oracle}");
        worst = worst.min(s);
    }
    assert!(worst >= -1e-10, "worst skewness {worst}");
}

#[test]
fn layer_cake_reconstruction_of_mean_cosine() {
    // A nonincreasing step density is a mixture of uniforms on [0, b_k] with
    // weights (l_k - l_{k+1}) b_k, and the uniform on [0, t] has mean
    // cosine sin(t) / t.
    let breaks = vec![0.0, 0.4, 1.1, 2.0, PI];
    let raw = [3.0, 2.0, 0.5, 0.25];
    let mass: f64 = breaks.windows(2).zip(&raw).map(|(w, l)| l * (w[1] - w[0])).sum();
    let levels: Vec<f64> = raw.iter().map(|l| l / mass).collect();
    let mut mix = 0.0;
    let mut total = 0.0;
    for k in 0..levels.len() {
        let next = levels.get(k + 1).copied().unwrap_or(0.0);
        let b = breaks[k + 1];
        let weight = (levels[k] - next) * b;
        mix += weight * b.sin() / b;
        total += weight;
    }
    assert!((total - 1.0).abs() < 1e-14);
    let d = HalfCircleDensity::Steps { breaks, levels };
    assert!((d.mean_cos() - mix).abs() < 1e-14);
}

// Central positivity and the Chebyshev step.

#[test]
fn central_windows_limits() {
    let (sol, var) = setup(1.0, 2.0, 512);
    let tiny = central_windows(&sol, &var, &[1e-9])[0];
    assert!(tiny.abs() <= 1e-9, "{tiny}");
    assert!(central_windows(&sol, &var, &[PI / 4.0])[0] > 0.0);
    let a = FRAC_PI_2 - 1e-3;
    let near = central_windows(&sol, &var, &[a])[0];
    let mid = var.w.eval_offgrid(FRAC_PI_2) * sol.f.eval_offgrid(FRAC_PI_2) * (PI - 2.0 * a);
    assert!(mid > 0.0);
    assert!((near / mid - 1.0).abs() < 1e-5);
    let r = verify_central_positivity(&sol, &var, &default_alphas()).unwrap();
    assert!(r.all_pass(), "{:?}", r.failures());
}

#[test]
fn chebyshev_identity_for_linear_functions() {
    let (t, w) = gauss_legendre(20);
    let x: Vec<f64> = t.iter().map(|t| FRAC_PI_2 * (1.0 + t)).collect();
    let nu: Vec<f64> = w.iter().map(|w| FRAC_PI_2 * w).collect();
    let got = chebyshev_correlation(&x, &x, &nu);
    assert!((got - PI.powi(4) / 12.0).abs() <= 1e-9);
    let ones = vec![2.5; x.len()];
    assert!(chebyshev_correlation(&x, &ones, &nu).abs() <= 1e-12);
}

#[test]
fn seeded_monotone_pairs_correlate_nonnegatively() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for _ in 0..500 {
        let n = rng.random_range(2..40);
        let mut p: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut q: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let nu: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        p.sort_by(f64::total_cmp);
        q.sort_by(f64::total_cmp);
        let c = chebyshev_correlation(&p, &q, &nu);
        let m: f64 = nu.iter().sum();
        let dot = |a: &[f64], b: &[f64]| -> f64 { (0..n).map(|i| a[i] * b[i] * nu[i]).sum() };
        let expanded = m * dot(&p, &q) - dot(&p, &vec![1.0; n]) * dot(&q, &vec![1.0; n]);
        assert!(c >= -1e-14);
        assert!((c - expanded).abs() <= 1e-12 * (1.0 + expanded.abs()));
        q.reverse();
        assert!(chebyshev_correlation(&p, &q, &nu) <= 1e-14);
    }
}

#[test]
fn gradient_chain_at_reference_point() {
    let (sol, var) = setup(1.0, 2.0, 512);
    let c = gradient_chain(&sol, &var);
    assert!(c.correlation > 0.0);
    assert!(c.w_integral > 0.0);
    assert!(c.gradient_half >= c.lower_bound && c.lower_bound > 0.0);
    let first = first_variation(&sol).unwrap();
    let full = (&(&first.w * &(&first.z * &first.z)) * &sol.f).integrate();
    assert!((2.0 * c.gradient_half - full).abs() <= 1e-14 * full.abs().max(1.0));
}
