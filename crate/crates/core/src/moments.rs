//! The moment machinery behind the sign of `A''`: geometric-mean
//! monotonicity, the `I_0`/`I_pi` bounds, the pushforward density `eta`,
//! the cosine-skewness inequality, central positivity and the correlation
//! inequality for the gradient moment.
//!
//! With `a = v_zeta`:
//!
//! ```text
//! D0 = a - a(0),  Dpi = a(pi) - a,  D = a(pi) - a(0)
//! C  = (Dpi - D0) / D = cos(theta),  S = 1 - C^2
//! H  = e^{-v} sqrt(D0 Dpi) / sin x
//! w  = (D / 2) (cbar - C),  eta = 2 f / theta'
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridFn;
use crate::hjb::HjbSolution;
use crate::margin::{Checked, InequalityMargin, MarginReport, DEFAULT_REL_TOL};
use crate::quadrature::{gauss_legendre, half_period_weights};
use crate::sensitivity::VariationState;

use std::f64::consts::{FRAC_PI_2, PI};

/// Tolerance of sample-to-sample comparisons of `eta`, relative to its size.
pub const ETA_DISCRETE_TOL: f64 = 1e-7;

/// Relative tolerance of the pushforward form of the cubic moment.
pub const PUSHFORWARD_REL_TOL: f64 = 1e-7;

/// Gauss-Legendre order per grid panel for `I_0` and `I_pi`.
pub const I_PANEL_ORDER: usize = 8;

/// Mass tolerance accepted by [`cosine_skewness`].
pub const DENSITY_MASS_TOL: f64 = 1e-10;

fn require_positive_zeta(sol: &HjbSolution) -> Result<()> {
    if sol.zeta() > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput("moment checks need zeta > 0".into()))
    }
}

/// Increments of `a = v_zeta` from the two endpoints.
#[derive(Clone, Debug)]
pub struct Increments {
    pub delta0: GridFn,
    pub deltapi: GridFn,
    pub delta: f64,
    /// `C = (Dpi - D0) / D`.
    pub c: GridFn,
    /// `S = 1 - C^2`.
    pub s: GridFn,
    /// `H = e^{-v} sqrt(D0 Dpi) / |sin x|` with its limits at 0 and pi.
    pub h: GridFn,
    /// Copies of `z = a_x` and `Z = z / sin x` from the variation.
    pub z: GridFn,
    pub zq: GridFn,
}

pub fn increments(sol: &HjbSolution, var: &VariationState) -> Result<Increments> {
    require_positive_zeta(sol)?;
    let grid = sol.grid();
    let p = grid.pi_index();
    let a = &var.a;
    let (a0, api) = (a.at(0), a.at(p));
    let delta = api - a0;
    if !(delta > 1e-12) {
        return Err(Error::DegenerateIncrement(delta));
    }
    let delta0 = a.map(|x| x - a0);
    let deltapi = a.map(|x| api - x);
    let c = deltapi.zip_map(&delta0, |dp, d0| (dp - d0) / delta);
    let s = c.map(|c| 1.0 - c * c);
    // Near an endpoint D0 ~ Z x^2 / 2 (or Dpi ~ Z xi^2 / 2), which gives
    // H -> e^{-v} sqrt(Z D / 2).
    let v = &sol.v;
    let h_vals = (0..grid.len())
        .map(|j| {
            if j == 0 || j == p {
                (-v.at(j)).exp() * (0.5 * var.zq.at(j) * delta).sqrt()
            } else {
                let prod = (delta0.at(j) * deltapi.at(j)).max(0.0);
                (-v.at(j)).exp() * prod.sqrt() / grid.sin_at(j).abs()
            }
        })
        .collect();
    let h = GridFn::new(grid.clone(), h_vals)?;
    Ok(Increments { delta0, deltapi, delta, c, s, h, z: var.z.clone(), zq: var.zq.clone() })
}

/// Sup over the torus of `|C_x + 2 z / D|`.
pub fn cx_defect(inc: &Increments) -> f64 {
    let target = inc.z.scale(-2.0 / inc.delta);
    inc.c.diff().max_abs_diff(&target)
}

/// Sup over the torus of `|S - 4 D0 Dpi / D^2|`.
pub fn s_identity_defect(inc: &Increments) -> f64 {
    let d2 = inc.delta * inc.delta;
    let other = inc.delta0.zip_map(&inc.deltapi, |a, b| 4.0 * a * b / d2);
    inc.s.max_abs_diff(&other)
}

/// `-H_x / H = u + cot x - z (Dpi - D0) / (2 D0 Dpi)`, zero at 0 and pi
/// (the expression is odd about both).
pub fn h_log_derivative(sol: &HjbSolution, inc: &Increments) -> GridFn {
    let grid = sol.grid();
    let p = grid.pi_index();
    let vals = (0..grid.len())
        .map(|j| {
            if j == 0 || j == p {
                return 0.0;
            }
            let (d0, dp) = (inc.delta0.at(j), inc.deltapi.at(j));
            let cot = grid.cos_at(j) / grid.sin_at(j);
            sol.u.at(j) + cot - inc.z.at(j) * (dp - d0) / (2.0 * d0 * dp)
        })
        .collect();
    GridFn::new(grid.clone(), vals).expect("same grid")
}

/// Margin of `-(q_{j+1} - q_j)` over nodes `0..pi`, with tolerance
/// `rel_tol * max(1, sup |q|)`.
fn nonincreasing_samples(name: &str, grid_x: &[f64], q: &[f64], rel_tol: f64) -> InequalityMargin {
    let scale = q.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut worst = (f64::INFINITY, 0.0);
    for k in 0..q.len() - 1 {
        let d = q[k] - q[k + 1];
        if d < worst.0 || d.is_nan() {
            worst = (d, grid_x[k]);
        }
    }
    InequalityMargin::new(name, worst.0, worst.1, rel_tol * scale)
}

/// `H` nonincreasing on `[0, pi]`: node differences and the log-derivative.
pub fn verify_geometric_mean(sol: &HjbSolution, inc: &Increments) -> MarginReport {
    let grid = sol.grid();
    let p = grid.pi_index();
    let mut r = MarginReport::default();
    let xs = &grid.nodes()[..=p];
    r.push(nonincreasing_samples("H_nonincreasing_discrete", xs, &inc.h.values()[..=p], DEFAULT_REL_TOL));
    let g = h_log_derivative(sol, inc);
    r.push(Checked::masked(&g, 0.0, 0.0).margin("H_log_derivative", DEFAULT_REL_TOL, Some(&g)));
    r
}

/// `I_0 = e^{-v} int_0^x e^v sin` and `I_pi = e^{-v} int_x^pi e^v sin` at
/// nodes `0..=pi` (extended evenly to the torus).
///
/// Both are accumulated panel by panel with the integrating factor,
/// `I_0(x_{j+1}) = e^{v_j - v_{j+1}} I_0(x_j) + int_{x_j}^{x_{j+1}} e^{v - v_{j+1}} sin`,
/// so every exponential is at most 1 and the relative accuracy does not
/// depend on the range of `v`.
pub fn i_profiles(sol: &HjbSolution) -> (GridFn, GridFn) {
    let grid = sol.grid();
    let p = grid.pi_index();
    let h = grid.spacing();
    let v = &sol.v;
    let interp = v.interpolant().truncated(1e-17);
    let (t, wt) = gauss_legendre(I_PANEL_ORDER);
    // Per panel [x_j, x_{j+1}]: int e^{v - v_{j+1}} sin and int e^{v - v_j} sin.
    let mut right = vec![0.0; p];
    let mut left = vec![0.0; p];
    for j in 0..p {
        let (vl, vr) = (v.at(j), v.at(j + 1));
        let mid = grid.node(j) + 0.5 * h;
        for (ti, wi) in t.iter().zip(&wt) {
            let y = mid + 0.5 * h * ti;
            let vy = interp.eval(y);
            let s = 0.5 * h * wi * y.sin();
            right[j] += s * (vy - vr).exp();
            left[j] += s * (vy - vl).exp();
        }
    }
    let mut i0 = vec![0.0; p + 1];
    for j in 0..p {
        i0[j + 1] = (v.at(j) - v.at(j + 1)).exp() * i0[j] + right[j];
    }
    let mut ipi = vec![0.0; p + 1];
    for j in (0..p).rev() {
        ipi[j] = (v.at(j + 1) - v.at(j)).exp() * ipi[j + 1] + left[j];
    }
    let extend = |half: Vec<f64>| {
        let vals = (0..grid.len()).map(|j| half[j.min(grid.len() - j)]).collect();
        GridFn::new(grid.clone(), vals).expect("same grid")
    };
    (extend(i0), extend(ipi))
}

/// Sup over `[0, pi]` of the residuals of `I_0' + u I_0 = sin x` and
/// `I_pi' + u I_pi = -sin x`, each divided by `max(1, sup |u I|)`.
/// (`I_pi` near 0 grows like `e^{v(pi) - v(0)}`.)
pub fn i_ode_defect(sol: &HjbSolution) -> f64 {
    let grid = sol.grid();
    let (i0, ipi) = i_profiles(sol);
    let defect = |i: &GridFn, sign: f64| {
        let di = i.diff();
        let scale = (&sol.u * i).sup_norm().max(1.0);
        (0..=grid.pi_index())
            .map(|j| (di.at(j) + sol.u.at(j) * i.at(j) - sign * grid.sin_at(j)).abs())
            .fold(0.0, f64::max)
            / scale
    };
    defect(&i0, 1.0).max(defect(&ipi, -1.0))
}

/// `I_0 >= sin x / (u + r)`, `I_pi <= sin x / (t - u)` on `{t > u}`, and the
/// shape of `{t > u}` (a right-neighborhood of pi).
pub fn verify_i_bounds(sol: &HjbSolution) -> Result<MarginReport> {
    require_positive_zeta(sol)?;
    let grid = sol.grid();
    let p = grid.pi_index();
    let (i0, ipi) = i_profiles(sol);
    let alpha = -sol.u.diff().at(p);
    let mut r = MarginReport::default();

    // Near 0 both I_0 and sin/(u + r) behave like x^2 / 2; near pi
    // sin/(u + r) -> 1 / (alpha + 1/2).
    let mut lower = Checked::default();
    lower.push(0.0, 0.0);
    for j in 1..p {
        let (s, c) = (grid.sin_at(j), grid.cos_at(j));
        let rr = (1.0 + c) / s;
        lower.push(grid.node(j), i0.at(j) - s / (sol.u.at(j) + rr));
    }
    lower.push(grid.node(p), i0.at(p) - 1.0 / (alpha + 0.5));
    r.push(lower.margin("I0_lower", DEFAULT_REL_TOL, None));

    let mut upper = Checked::default();
    let mut indicator = Vec::with_capacity(p);
    for j in 1..p {
        let (s, c) = (grid.sin_at(j), grid.cos_at(j));
        let t = (1.0 - c) / s;
        let u = sol.u.at(j);
        indicator.push(if t > u { 1.0 } else { 0.0 });
        if t > u {
            upper.push(grid.node(j), s / (t - u) - ipi.at(j));
        }
    }
    // Both sides vanish at pi.
    upper.push(grid.node(p), 0.0);
    r.push(upper.margin("Ipi_upper", DEFAULT_REL_TOL, None));

    let xs = &grid.nodes()[1..p];
    let neg: Vec<f64> = indicator.iter().map(|v| -v).collect();
    r.push(nonincreasing_samples("t_gt_u_interval", xs, &neg, 0.0));
    Ok(r)
}

/// Pushforward of `2 f dx` on `[0, pi]` under `theta = arccos C(x)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EtaDensity {
    /// `theta(x_j)` at nodes `0..=pi` (nonuniform in theta).
    pub theta_nodes: Vec<f64>,
    pub eta_values: Vec<f64>,
    /// `theta'(x_j)`.
    pub theta_prime: Vec<f64>,
    /// `int eta dtheta`.
    pub mass: f64,
    /// `int cos(theta) eta dtheta`.
    pub cbar: f64,
    /// Quadrature weights in `x` for the nodes: `int g(theta) eta dtheta` is
    /// `sum_j x_weights[j] g(theta_j) eta_j theta'_j`.
    pub x_weights: Vec<f64>,
}

impl EtaDensity {
    /// `int g(theta) eta(theta) dtheta`.
    pub fn integrate(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.theta_nodes
            .iter()
            .zip(&self.eta_values)
            .zip(&self.theta_prime)
            .zip(&self.x_weights)
            .map(|(((&th, &e), &tp), &w)| w * g(th) * e * tp)
            .sum()
    }
}

pub fn eta_density(sol: &HjbSolution, inc: &Increments) -> Result<EtaDensity> {
    require_positive_zeta(sol)?;
    let grid = sol.grid();
    let p = grid.pi_index();
    let mut theta_prime = Vec::with_capacity(p + 1);
    for j in 0..=p {
        if j == 0 || j == p {
            // theta ~ x sqrt(2 Z / D) near each endpoint.
            theta_prime.push((2.0 * inc.zq.at(j) / inc.delta).sqrt());
            continue;
        }
        let s = inc.s.at(j);
        if !(s > 1e-14) {
            return Err(Error::DegeneratePushforward(s));
        }
        // -C_x / sqrt(S) with C_x = -2 z / D and sqrt(S) = 2 sqrt(D0 Dpi) / D.
        let prod = inc.delta0.at(j) * inc.deltapi.at(j);
        theta_prime.push(inc.z.at(j) / prod.sqrt());
    }
    let theta_nodes: Vec<f64> = (0..=p).map(|j| inc.c.at(j).clamp(-1.0, 1.0).acos()).collect();
    let eta_values: Vec<f64> = (0..=p).map(|j| 2.0 * sol.f.at(j) / theta_prime[j]).collect();
    let x_weights = half_period_weights(grid);
    let mut eta = EtaDensity { theta_nodes, eta_values, theta_prime, mass: 0.0, cbar: 0.0, x_weights };
    eta.mass = eta.integrate(|_| 1.0);
    eta.cbar = eta.integrate(f64::cos);
    Ok(eta)
}

/// The two summands of `S (u + C_xx / C_x) + C C_x`, using
/// `C_xx / C_x = cot x + Z_x / Z`. Both vanish at 0 and pi.
pub fn eta_monotone_terms(sol: &HjbSolution, inc: &Increments) -> (GridFn, GridFn) {
    let grid = sol.grid();
    let p = grid.pi_index();
    let zx = inc.zq.diff();
    let mut geo = vec![0.0; grid.len()];
    let mut zterm = vec![0.0; grid.len()];
    for j in 0..grid.len() {
        if j == 0 || j == p {
            continue;
        }
        let s = inc.s.at(j);
        let cot = grid.cos_at(j) / grid.sin_at(j);
        let cx = -2.0 * inc.z.at(j) / inc.delta;
        geo[j] = s * (sol.u.at(j) + cot) + inc.c.at(j) * cx;
        zterm[j] = s * zx.at(j) / inc.zq.at(j);
    }
    (GridFn::new(grid.clone(), geo).expect("same grid"), GridFn::new(grid.clone(), zterm).expect("same grid"))
}

/// `eta` nonincreasing: the full condition, each summand of its split, and a
/// direct comparison of neighboring samples.
pub fn verify_eta_monotone(sol: &HjbSolution, inc: &Increments, eta: &EtaDensity) -> MarginReport {
    let (geo, zterm) = eta_monotone_terms(sol, inc);
    let full = &geo + &zterm;
    let mut r = MarginReport::default();
    r.push(Checked::masked(&full, 0.0, 0.0).margin("eta_monotone", DEFAULT_REL_TOL, Some(&full)));
    r.push(Checked::masked(&geo, 0.0, 0.0).margin("eta_split_geometric", DEFAULT_REL_TOL, Some(&geo)));
    r.push(Checked::masked(&zterm, 0.0, 0.0).margin("eta_split_z", DEFAULT_REL_TOL, Some(&zterm)));
    r.push(nonincreasing_samples("eta_nonincreasing_discrete", &eta.theta_nodes, &eta.eta_values, ETA_DISCRETE_TOL));
    r
}

/// `(D^3 / 8) int (cbar - cos theta)^3 eta dtheta`.
pub fn cubic_via_pushforward(inc: &Increments, eta: &EtaDensity) -> f64 {
    let cbar = eta.cbar;
    inc.delta.powi(3) / 8.0 * eta.integrate(|th| (cbar - th.cos()).powi(3))
}

/// A probability density on `[0, pi]`.
#[derive(Clone, Debug, PartialEq)]
pub enum HalfCircleDensity {
    /// Piecewise constant: `levels[k]` on `[breaks[k], breaks[k + 1]]`, with
    /// `breaks` running from 0 to pi.
    Steps { breaks: Vec<f64>, levels: Vec<f64> },
    /// Piecewise linear through `(theta[k], values[k])`, `theta` from 0 to pi.
    Sampled { theta: Vec<f64>, values: Vec<f64> },
}

fn check_partition(xs: &[f64]) -> Result<()> {
    let ends_ok = xs.len() >= 2 && xs[0] == 0.0 && (xs[xs.len() - 1] - PI).abs() <= 1e-14;
    if !ends_ok || xs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidDensity("breakpoints must increase from 0 to pi".into()));
    }
    Ok(())
}

/// `int_a^b cos^k` for `k = 0..=3`.
fn cos_power_integrals(a: f64, b: f64) -> [f64; 4] {
    let (sa, sb) = (a.sin(), b.sin());
    [
        b - a,
        sb - sa,
        0.5 * (b - a) + 0.25 * ((2.0 * b).sin() - (2.0 * a).sin()),
        (sb - sb.powi(3) / 3.0) - (sa - sa.powi(3) / 3.0),
    ]
}

impl HalfCircleDensity {
    fn validate(&self) -> Result<()> {
        let (xs, vals) = match self {
            Self::Steps { breaks, levels } => {
                if breaks.len() != levels.len() + 1 {
                    return Err(Error::InvalidDensity("need one level per interval".into()));
                }
                (breaks, levels)
            }
            Self::Sampled { theta, values } => {
                if theta.len() != values.len() {
                    return Err(Error::InvalidDensity("theta and values differ in length".into()));
                }
                (theta, values)
            }
        };
        check_partition(xs)?;
        if let Some(bad) = vals.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::InvalidDensity(format!("negative or NaN value {bad}")));
        }
        let mass = self.moment(|_| 1.0, [1.0, 0.0, 0.0, 0.0]);
        if !((mass - 1.0).abs() <= DENSITY_MASS_TOL) {
            return Err(Error::InvalidDensity(format!("mass {mass} differs from 1")));
        }
        Ok(())
    }

    /// `int g(theta) rho(theta) dtheta` for `g = sum_k poly[k] cos^k`; the
    /// closure is the same `g`, used for sampled densities.
    fn moment(&self, g: impl Fn(f64) -> f64, poly: [f64; 4]) -> f64 {
        match self {
            Self::Steps { breaks, levels } => breaks
                .windows(2)
                .zip(levels)
                .map(|(w, &lv)| {
                    let ints = cos_power_integrals(w[0], w[1]);
                    lv * (0..4).map(|k| poly[k] * ints[k]).sum::<f64>()
                })
                .sum(),
            Self::Sampled { theta, values } => {
                let (t, wt) = gauss_legendre(16);
                let mut acc = 0.0;
                for k in 0..theta.len() - 1 {
                    let (a, b) = (theta[k], theta[k + 1]);
                    let (ya, yb) = (values[k], values[k + 1]);
                    let half = 0.5 * (b - a);
                    for (ti, wi) in t.iter().zip(&wt) {
                        let s = 0.5 * (1.0 + ti);
                        let x = a + (b - a) * s;
                        acc += half * wi * g(x) * (ya + (yb - ya) * s);
                    }
                }
                acc
            }
        }
    }

    /// `int cos(theta) rho(theta) dtheta`.
    pub fn mean_cos(&self) -> f64 {
        self.moment(f64::cos, [0.0, 1.0, 0.0, 0.0])
    }
}

/// `int (cbar - cos theta)^3 rho dtheta` with `cbar = int cos theta rho`.
/// Nonnegative whenever the density is nonincreasing.
pub fn cosine_skewness(density: &HalfCircleDensity) -> Result<f64> {
    density.validate()?;
    let cb = density.mean_cos();
    // (cb - c)^3 = cb^3 - 3 cb^2 c + 3 cb c^2 - c^3
    let poly = [cb.powi(3), -3.0 * cb * cb, 3.0 * cb, -1.0];
    Ok(density.moment(|th| (cb - th.cos()).powi(3), poly))
}

/// 25 equispaced window half-widths in `[0.02, pi/2 - 0.02]`.
pub fn default_alphas() -> Vec<f64> {
    let (lo, hi) = (0.02, FRAC_PI_2 - 0.02);
    (0..25).map(|k| lo + (hi - lo) * k as f64 / 24.0).collect()
}

/// `int_alpha^{pi - alpha} w f dx` for each `alpha`.
pub fn central_windows(sol: &HjbSolution, var: &VariationState, alphas: &[f64]) -> Vec<f64> {
    let wf = (&var.w * &sol.f).interpolant();
    alphas
        .iter()
        .map(|&a| wf.integral_from_zero(PI - a) - wf.integral_from_zero(a))
        .collect()
}

/// Derivative of the folded profile `w(x) + rho(x) w(pi - x)`,
/// `rho = f(pi - x) / f(x)`, at nodes in `[0, pi/2]`.
pub fn folded_profile_slope(sol: &HjbSolution, var: &VariationState) -> Checked {
    let grid = sol.grid();
    let p = grid.pi_index();
    let mut c = Checked::default();
    for j in 0..=p / 2 {
        let m = p - j;
        let rho = sol.f.at(m) / sol.f.at(j);
        let slope =
            var.z.at(j) - rho * var.z.at(m) + rho * (sol.u.at(j) + sol.u.at(m)) * var.w.at(m);
        c.push(grid.node(j), slope);
    }
    c
}

/// Window integrals, `w(pi/2) > 0` and the folded-profile slope.
pub fn verify_central_positivity(sol: &HjbSolution, var: &VariationState, alphas: &[f64]) -> Result<MarginReport> {
    require_positive_zeta(sol)?;
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && **a < FRAC_PI_2)) {
        return Err(Error::InvalidInput(format!("window half-width {a} outside (0, pi/2)")));
    }
    let mut r = MarginReport::default();
    for (&a, val) in alphas.iter().zip(central_windows(sol, var, alphas)) {
        r.push(InequalityMargin::scalar(format!("central_window(alpha={a:.4})"), val, a, DEFAULT_REL_TOL));
    }
    let w_mid = var.w.eval_offgrid(FRAC_PI_2);
    r.push(InequalityMargin::scalar("w_mid_positive", w_mid, FRAC_PI_2, DEFAULT_REL_TOL));
    r.push(folded_profile_slope(sol, var).margin("folded_profile_monotone", DEFAULT_REL_TOL, None));
    Ok(r)
}

/// `nu(Omega) int p q dnu - int p dnu int q dnu` for the discrete measure
/// with masses `nu`, through the symmetrized double sum.
pub fn chebyshev_correlation(p: &[f64], q: &[f64], nu: &[f64]) -> f64 {
    assert!(p.len() == q.len() && q.len() == nu.len(), "length mismatch");
    let n = p.len();
    let mut acc = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..i {
            row += (p[i] - p[j]) * (q[i] - q[j]) * nu[j];
        }
        acc += row * nu[i];
    }
    // Half the sum over ordered pairs is the sum over pairs with j < i.
    acc
}

/// [`chebyshev_correlation`] for grid functions on `[0, pi]` with
/// `dnu = weight dx` (trapezoid weights on nodes `0..=pi`).
pub fn chebyshev_correlation_grid(p: &GridFn, q: &GridFn, weight: &GridFn) -> f64 {
    let grid = p.grid();
    let np = grid.pi_index() + 1;
    let nu: Vec<f64> = half_period_weights(grid).iter().zip(weight.values()).map(|(h, w)| h * w).collect();
    chebyshev_correlation(&p.values()[..np], &q.values()[..np], &nu)
}

/// The chain `int_0^pi w z^2 f >= int w dnu int Z^2 dnu / nu([0, pi])` with
/// `dnu = sin^2 x f dx`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientChain {
    pub nu_mass: f64,
    pub w_integral: f64,
    pub zq2_integral: f64,
    pub correlation: f64,
    /// `int_0^pi w z^2 f`.
    pub gradient_half: f64,
    pub lower_bound: f64,
}

pub fn gradient_chain(sol: &HjbSolution, var: &VariationState) -> GradientChain {
    let grid = sol.grid();
    let np = grid.pi_index() + 1;
    let nu: Vec<f64> = half_period_weights(grid)
        .iter()
        .enumerate()
        .map(|(j, h)| h * grid.sin_at(j).powi(2) * sol.f.at(j))
        .collect();
    let w = &var.w.values()[..np];
    let zq2: Vec<f64> = var.zq.values()[..np].iter().map(|z| z * z).collect();
    let nu_mass: f64 = nu.iter().sum();
    let w_integral: f64 = w.iter().zip(&nu).map(|(a, b)| a * b).sum();
    let zq2_integral: f64 = zq2.iter().zip(&nu).map(|(a, b)| a * b).sum();
    let correlation = chebyshev_correlation(w, &zq2, &nu);
    let gradient_half = (&(&var.w * &(&var.z * &var.z)) * &sol.f).integrate() / 2.0;
    GradientChain {
        nu_mass,
        w_integral,
        zq2_integral,
        correlation,
        gradient_half,
        lower_bound: w_integral * zq2_integral / nu_mass,
    }
}

/// Scalars behind the moment signs at one solution.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MomentSummary {
    pub delta: f64,
    pub cbar: f64,
    pub eta_mass: f64,
    pub cubic_direct: f64,
    pub cubic_pushforward: f64,
    pub gradient_moment: f64,
    pub chain: GradientChain,
}

pub fn moment_summary(sol: &HjbSolution, var: &VariationState) -> Result<MomentSummary> {
    let inc = increments(sol, var)?;
    let eta = eta_density(sol, &inc)?;
    let w = &var.w;
    let cubic_direct = (&(&(w * w) * w) * &sol.f).integrate();
    let gradient_moment = (&(w * &(&var.z * &var.z)) * &sol.f).integrate();
    Ok(MomentSummary {
        delta: inc.delta,
        cbar: eta.cbar,
        eta_mass: eta.mass,
        cubic_direct,
        cubic_pushforward: cubic_via_pushforward(&inc, &eta),
        gradient_moment,
        chain: gradient_chain(sol, var),
    })
}

/// Every moment margin at one solution.
pub fn verify_moments(sol: &HjbSolution, var: &VariationState) -> Result<MarginReport> {
    let inc = increments(sol, var)?;
    let eta = eta_density(sol, &inc)?;
    let mut r = verify_geometric_mean(sol, &inc);
    r.extend(verify_i_bounds(sol)?);
    r.extend(verify_eta_monotone(sol, &inc, &eta));
    r.extend(verify_central_positivity(sol, var, &default_alphas())?);

    let s = moment_summary(sol, var)?;
    r.push(InequalityMargin::equality("eta_mass", s.eta_mass - 1.0, 0.0, 1e-8));
    r.push(InequalityMargin::scalar("cbar_nonneg", s.cbar, 0.0, DEFAULT_REL_TOL));
    let push_tol = PUSHFORWARD_REL_TOL * s.cubic_direct.abs() + 1e-12;
    r.push(InequalityMargin::equality("pushforward_identity", s.cubic_pushforward - s.cubic_direct, PI, push_tol));
    r.push(InequalityMargin::scalar("cubic_moment_sign", s.cubic_direct, PI, 1e-9));
    // Strict: passes only for a positive value.
    r.push(InequalityMargin::new("gradient_moment_positive", s.gradient_moment, PI, -f64::MIN_POSITIVE));
    let c = s.chain;
    r.push(InequalityMargin::scalar("gradient_correlation", c.correlation, PI, DEFAULT_REL_TOL));
    r.push(InequalityMargin::new("gradient_w_weighted_positive", c.w_integral, PI, -f64::MIN_POSITIVE));
    r.push(InequalityMargin::scalar("gradient_lower_bound", c.gradient_half - c.lower_bound, PI, DEFAULT_REL_TOL));
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_density_has_zero_skewness() {
        let d = HalfCircleDensity::Steps { breaks: vec![0.0, PI], levels: vec![1.0 / PI] };
        assert!(cosine_skewness(&d).unwrap().abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_densities() {
        let neg = HalfCircleDensity::Steps { breaks: vec![0.0, 1.0, PI], levels: vec![1.0, -0.1] };
        assert!(matches!(cosine_skewness(&neg), Err(Error::InvalidDensity(_))));
        let heavy = HalfCircleDensity::Steps { breaks: vec![0.0, PI], levels: vec![1.0] };
        assert!(matches!(cosine_skewness(&heavy), Err(Error::InvalidDensity(_))));
    }

    #[test]
    fn correlation_with_constant_vanishes() {
        let p = [0.0, 0.3, 0.9, 2.0];
        let q = [1.5; 4];
        let nu = [0.2, 0.1, 0.4, 0.3];
        assert!(chebyshev_correlation(&p, &q, &nu).abs() < 1e-12);
    }

    #[test]
    fn correlation_matches_expanded_form() {
        let p = [0.0, 0.3, 0.9, 2.0];
        let q = [-1.0, 0.0, 0.5, 0.7];
        let nu = [0.2, 0.1, 0.4, 0.3];
        let m: f64 = nu.iter().sum();
        let pq: f64 = (0..4).map(|i| p[i] * q[i] * nu[i]).sum();
        let ip: f64 = (0..4).map(|i| p[i] * nu[i]).sum();
        let iq: f64 = (0..4).map(|i| q[i] * nu[i]).sum();
        assert!((chebyshev_correlation(&p, &q, &nu) - (m * pq - ip * iq)).abs() < 1e-14);
    }
}
