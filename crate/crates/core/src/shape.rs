//! Shape inequalities for `u = v_x` on `(0, pi)` and the bounds for
//! `Z = v_{x zeta} / sin x`.
//!
//! Each check is a [`Checked`] set of samples on `[0, pi]`. Quantities that
//! divide by `sin x` or `u` skip the two nodes next to each endpoint; where
//! the singularity is removable the endpoint value is the limit (taken from
//! spectral derivatives, or zero by parity for odd quantities).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::GridFn;
use crate::hjb::HjbSolution;
use crate::margin::{Checked, InequalityMargin, MarginReport, DEFAULT_REL_TOL};
use crate::sensitivity::{quotient_by_sin, VariationState};

/// Accuracy of [`taylor_cubic_at_pi`] relative to the terms of the
/// endpoint balance at moderate coupling; set by the fit order.
pub const TAYLOR_FIT_REL_TOL: f64 = 1e-4;

/// Relative size below which trailing Fourier modes of `u` count as noise.
pub const SPECTRAL_CUTOFF: f64 = 1e-13;

/// Number of nodes next to `pi` used by the Taylor fit.
pub const TAYLOR_FIT_NODES: usize = 6;

fn require_positive_zeta(sol: &HjbSolution) -> Result<()> {
    if sol.zeta() > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput("shape checks need zeta > 0 (every quantity vanishes at zeta = 0)".into()))
    }
}

/// Copy of `q` with its values at 0 and pi replaced (for interpolation).
fn with_endpoints(q: &GridFn, at_zero: f64, at_pi: f64) -> GridFn {
    let p = q.grid().pi_index();
    let mut vals = q.values().to_vec();
    vals[0] = at_zero;
    vals[p] = at_pi;
    GridFn::new(q.grid().clone(), vals).expect("same grid")
}

/// `q / sin^2 x` away from the endpoints (zero there).
fn over_sin_squared(q: &GridFn) -> GridFn {
    q.zip_map(&GridFn::sin(q.grid()), |v, s| if s == 0.0 { 0.0 } else { v / (s * s) })
}

/// Wronskian `sin x u_x - cos x u`.
pub fn wronskian(sol: &HjbSolution) -> GridFn {
    let grid = sol.grid();
    let ux = sol.u.diff();
    let sin = GridFn::sin(grid);
    let cos = GridFn::cos(grid);
    &(&sin * &ux) - &(&cos * &sol.u)
}

/// `K = zeta sin x / u - lambda - u_x`, with endpoint limits.
pub fn curvature(sol: &HjbSolution) -> GridFn {
    let uq = quotient_by_sin(&sol.u);
    let ux = sol.u.diff();
    let (zeta, lambda) = (sol.zeta(), sol.lambda());
    uq.zip_map(&ux, |q, d| zeta / q - lambda - d)
}

/// Slope `alpha = -u_x(pi)`.
pub fn endpoint_slope(sol: &HjbSolution) -> f64 {
    -sol.u.diff().at(sol.grid().pi_index())
}

/// Cubic Taylor coefficient of `u` at `pi` in `xi = pi - x`, from a
/// least-squares fit of `c1 xi + c3 xi^3 + c5 xi^5` over the nodes nearest
/// to `pi`.
pub fn taylor_cubic_at_pi(sol: &HjbSolution) -> f64 {
    let grid = sol.grid();
    let p = grid.pi_index();
    let h = grid.spacing();
    let n = TAYLOR_FIT_NODES;
    let span = n as f64 * h;
    let mut mat = DMatrix::<f64>::zeros(n, 3);
    let mut rhs = DVector::<f64>::zeros(n);
    for k in 1..=n {
        let t = k as f64 / n as f64;
        mat[(k - 1, 0)] = t;
        mat[(k - 1, 1)] = t.powi(3);
        mat[(k - 1, 2)] = t.powi(5);
        rhs[k - 1] = sol.u.at(p - k);
    }
    let coef = mat.svd(true, true).solve(&rhs, 1e-15).expect("svd computed with both factors");
    coef[1] / span.powi(3)
}

/// Cubic Taylor coefficient of `u` at `pi` in `xi = pi - x`, as
/// `-u_xxx(pi) / 6`. The interpolant of `u` is cut at the rounding level
/// first; otherwise the third derivative amplifies sample noise by `(M/2)^3`.
pub fn spectral_cubic_at_pi(sol: &HjbSolution) -> f64 {
    let interp = sol.u.interpolant().truncated(SPECTRAL_CUTOFF);
    -interp.derivative(std::f64::consts::PI, 3) / 6.0
}

/// `u > 0` (through `u / sin x`), `-u_xx >= 0`, `(u / sin x)_x >= 0`, the
/// chord bound and `-B_x >= 0`.
pub fn verify_u_shape(sol: &HjbSolution) -> Result<MarginReport> {
    require_positive_zeta(sol)?;
    let grid = sol.grid();
    let p = grid.pi_index();
    let u = &sol.u;
    let ux = u.diff();
    let uxx = ux.diff();
    let uq = quotient_by_sin(u);
    let mut r = MarginReport::default();

    r.push(Checked::nodes(&uq, 0, p).margin("u_pos", DEFAULT_REL_TOL, Some(&uq)));

    let neg_uxx = uxx.scale(-1.0);
    r.push(Checked::nodes(&neg_uxx, 0, p).margin("u_concave", DEFAULT_REL_TOL, Some(&neg_uxx)));

    let w_over = over_sin_squared(&wronskian(sol));
    r.push(Checked::masked(&w_over, 0.0, 0.0).margin("u_over_sin_monotone", DEFAULT_REL_TOL, Some(&w_over)));

    let chord = uq.zip_map(&ux, |q, d| q - d.abs());
    r.push(Checked::masked(&chord, chord.at(0), chord.at(p)).margin("chord_bound", DEFAULT_REL_TOL, None));

    // B_x = u_xx + (u_x sin cos - u) / sin^2, odd about both endpoints.
    let sin = GridFn::sin(grid);
    let cos = GridFn::cos(grid);
    let num = &(&(&ux * &sin) * &cos) - u;
    let neg_bx = (&uxx + &over_sin_squared(&num)).scale(-1.0);
    let neg_bx = with_endpoints(&neg_bx, 0.0, 0.0);
    r.push(Checked::masked(&neg_bx, 0.0, 0.0).margin("B_monotone", DEFAULT_REL_TOL, Some(&neg_bx)));
    Ok(r)
}

/// `W >= 0`, `K >= 0`, `K(pi-) >= 1` and the endpoint balance
/// `6b = lambda alpha - alpha^2 - zeta`.
pub fn verify_wk(sol: &HjbSolution) -> Result<MarginReport> {
    require_positive_zeta(sol)?;
    let p = sol.grid().pi_index();
    let pi = sol.grid().node(p);
    let alpha = endpoint_slope(sol);
    if !(alpha > 1e-8) {
        return Err(Error::DegenerateEndpoint(alpha));
    }
    let (zeta, lambda) = (sol.zeta(), sol.lambda());
    let mut r = MarginReport::default();

    let w = wronskian(sol);
    r.push(Checked::nodes(&w, 0, p).margin("W_nonneg", DEFAULT_REL_TOL, Some(&w)));

    let k = curvature(sol);
    r.push(Checked::masked(&k, k.at(0), k.at(p)).margin("K_nonneg", DEFAULT_REL_TOL, Some(&k)));

    let k_pi = (alpha * alpha - lambda * alpha + zeta) / alpha;
    r.push(InequalityMargin::scalar("K_at_pi", k_pi - 1.0, pi, DEFAULT_REL_TOL));

    let balance = lambda * alpha - alpha * alpha - zeta - 6.0 * spectral_cubic_at_pi(sol);
    let scale = [1.0, lambda * alpha, alpha * alpha, zeta].into_iter().fold(0.0f64, f64::max);
    r.push(InequalityMargin::equality("endpoint_balance", balance, pi, DEFAULT_REL_TOL * scale));
    Ok(r)
}

/// `Z_x >= 0`, `u Z - Z_x >= 0` and `-(f Z)_x >= 0`, plus `Z > 0`.
pub fn verify_z_bounds(sol: &HjbSolution, var: &VariationState) -> Result<MarginReport> {
    require_positive_zeta(sol)?;
    let p = sol.grid().pi_index();
    let zq = &var.zq;
    let zx = zq.diff();
    let mut r = MarginReport::default();
    r.push(Checked::nodes(zq, 0, p).margin("Z_pos", DEFAULT_REL_TOL, Some(zq)));
    r.push(Checked::nodes(&zx, 0, p).margin("Z_lower", DEFAULT_REL_TOL, Some(&zx)));
    let upper = &(&sol.u * zq) - &zx;
    r.push(Checked::nodes(&upper, 0, p).margin("Z_upper", DEFAULT_REL_TOL, Some(&upper)));
    let flux = (&sol.f * zq).diff().scale(-1.0);
    r.push(Checked::nodes(&flux, 0, p).margin("fZ_monotone", DEFAULT_REL_TOL, Some(&flux)));
    Ok(r)
}

/// All shape margins.
pub fn verify_shape(sol: &HjbSolution, var: &VariationState) -> Result<MarginReport> {
    let mut r = verify_u_shape(sol)?;
    r.extend(verify_wk(sol)?);
    r.extend(verify_z_bounds(sol, var)?);
    Ok(r)
}

/// Sup over the masked interior of `|W_x - sin x u (1 - K)|`.
pub fn wk_ode_defect(sol: &HjbSolution) -> f64 {
    let grid = sol.grid();
    let p = grid.pi_index();
    let wx = wronskian(sol).diff();
    let k = curvature(sol);
    (2..=p - 2)
        .map(|j| (wx.at(j) - grid.sin_at(j) * sol.u.at(j) * (1.0 - k.at(j))).abs())
        .fold(0.0, f64::max)
}

/// Sup over the torus of `|(f sin^2 Z_x)_x - f sin^2 (B Z - 1)|`, with
/// `sin^2 B = sin^2 (1 + lambda + u_x) + u sin cos` so no division occurs.
pub fn z_flux_defect(sol: &HjbSolution, var: &VariationState) -> f64 {
    let grid = sol.grid();
    let sin = GridFn::sin(grid);
    let cos = GridFn::cos(grid);
    let sin2 = &sin * &sin;
    let ux = sol.u.diff();
    let lhs = (&(&sol.f * &sin2) * &var.zq.diff()).diff();
    let sin2_b = &(&sin2 * &ux.map(|d| 1.0 + sol.lambda() + d)) + &(&(&sol.u * &sin) * &cos);
    let rhs = &sol.f * &(&(&sin2_b * &var.zq) - &sin2);
    lhs.max_abs_diff(&rhs)
}
