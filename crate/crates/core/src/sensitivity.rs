//! First and second `zeta`-variations of the HJB solution and the exact
//! derivative identities for the order parameter.
//!
//! With `L = -d^2 + u d + lambda`:
//!
//! ```text
//! L a = -cos x                a = v_zeta,  z = a_x,  w = A / lambda + a
//! L b = A' - z^2              b = w_zeta
//! A'  = int z^2 f + lambda int w^2 f
//! A'' = -lambda int w^3 f - 3 int w z^2 f
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridFn;
use crate::hjb::{Continuation, HjbSolution, SolverOptions};
use crate::linear::{self, EvenFactorization};
use crate::par::{self, Execution};

/// Residual target of the variation solves.
pub const VARIATION_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct VariationState {
    /// `a = v_zeta`.
    pub a: GridFn,
    /// `z = a_x = v_{x zeta}`.
    pub z: GridFn,
    /// Centered score `w = A / lambda + a`.
    pub w: GridFn,
    /// `Z = z / sin x`, with `z_x(0)` and `-z_x(pi)` at the endpoints.
    pub zq: GridFn,
    /// `b = w_zeta`, filled in by [`second_variation`].
    pub b: Option<GridFn>,
    pub a_residual: f64,
    pub b_residual: Option<f64>,
}

impl VariationState {
    /// `A'` from the energy identity.
    pub fn a1_energy(&self, sol: &HjbSolution) -> f64 {
        let f = &sol.f;
        let z2f = (&(&self.z * &self.z) * f).integrate();
        let w2f = (&(&self.w * &self.w) * f).integrate();
        z2f + sol.lambda() * w2f
    }
}

fn solve_variation(sol: &HjbSolution, factor: &EvenFactorization, rhs: &GridFn) -> Result<(GridFn, f64)> {
    let grid = sol.grid();
    let out = linear::solve_refined(grid, sol.lambda(), sol.u.values(), factor, rhs.values(), 1e-13, 10)?;
    let floor = crate::hjb::roundoff_floor(grid, &out.solution);
    if !(out.residual <= VARIATION_TOLERANCE.max(floor)) {
        return Err(Error::SingularSystem(format!(
            "variation solve residual {:.3e} above tolerance",
            out.residual
        )));
    }
    Ok((GridFn::new(grid.clone(), out.solution)?, out.residual))
}

pub fn first_variation(sol: &HjbSolution) -> Result<VariationState> {
    let factor = EvenFactorization::new(sol.grid(), sol.lambda(), sol.u.values())?;
    first_variation_with(sol, &factor)
}

fn first_variation_with(sol: &HjbSolution, factor: &EvenFactorization) -> Result<VariationState> {
    let grid = sol.grid();
    let rhs = GridFn::cos(grid).scale(-1.0);
    let (a, a_residual) = solve_variation(sol, factor, &rhs)?;
    let z = a.diff();
    let w = a.map(|x| sol.order_parameter / sol.lambda() + x);
    let zq = quotient_by_sin(&z);
    Ok(VariationState { a, z, w, zq, b: None, a_residual, b_residual: None })
}

/// `g / sin x` for odd `g`, with the L'Hopital limits `g'(0)` and `-g'(pi)`.
pub(crate) fn quotient_by_sin(g: &GridFn) -> GridFn {
    let grid = g.grid();
    let gx = g.diff();
    let p = grid.pi_index();
    let mut q: Vec<f64> = (0..grid.len())
        .map(|j| if j == 0 || j == p { 0.0 } else { g.at(j) / grid.sin_at(j) })
        .collect();
    q[0] = gx.at(0);
    q[p] = -gx.at(p);
    GridFn::new(grid.clone(), q).expect("same grid")
}

pub fn second_variation(sol: &HjbSolution, var: &VariationState) -> Result<VariationState> {
    let factor = EvenFactorization::new(sol.grid(), sol.lambda(), sol.u.values())?;
    second_variation_with(sol, var, &factor)
}

fn second_variation_with(
    sol: &HjbSolution,
    var: &VariationState,
    factor: &EvenFactorization,
) -> Result<VariationState> {
    let a1 = var.a1_energy(sol);
    let rhs = var.z.map(|z| a1 - z * z);
    let (b, residual) = solve_variation(sol, factor, &rhs)?;
    let mut out = var.clone();
    out.b = Some(b);
    out.b_residual = Some(residual);
    Ok(out)
}

/// Both variations with a single factorization.
pub fn variations(sol: &HjbSolution) -> Result<VariationState> {
    let factor = EvenFactorization::new(sol.grid(), sol.lambda(), sol.u.values())?;
    let first = first_variation_with(sol, &factor)?;
    second_variation_with(sol, &first, &factor)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeReport {
    pub zeta: f64,
    pub lambda: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "A1_energy")]
    pub a1_energy: f64,
    #[serde(rename = "A1_fd")]
    pub a1_fd: f64,
    #[serde(rename = "A2_identity")]
    pub a2_identity: f64,
    #[serde(rename = "A2_fd")]
    pub a2_fd: f64,
    pub cubic_moment: f64,
    pub gradient_moment: f64,
}

impl DerivativeReport {
    pub const CSV_HEADER: [&'static str; 9] = [
        "zeta",
        "lambda",
        "A",
        "A1_energy",
        "A1_fd",
        "A2_identity",
        "A2_fd",
        "cubic_moment",
        "gradient_moment",
    ];

    pub fn csv_fields(&self) -> [f64; 9] {
        [
            self.zeta,
            self.lambda,
            self.a,
            self.a1_energy,
            self.a1_fd,
            self.a2_identity,
            self.a2_fd,
            self.cubic_moment,
            self.gradient_moment,
        ]
    }
}

/// Finite-difference step for `A'`.
pub fn first_derivative_step(zeta: f64) -> f64 {
    1e-4 * zeta.max(1.0)
}

/// Base step for the Richardson estimate of `A''` (uses `h` and `2h`).
pub fn second_derivative_step(zeta: f64) -> f64 {
    1e-3 * zeta.max(1.0)
}

/// Identity-based quantities plus finite differences of fresh solves
/// started from a fresh anchor at `sol`.
pub fn derivative_report(sol: &HjbSolution, var: &VariationState, opts: &SolverOptions) -> Result<DerivativeReport> {
    let anchor = Continuation::from_solution(sol, *opts)?;
    derivative_report_from(&anchor, sol, var, Execution::default())
}

/// Like [`derivative_report`], probing from an existing continuation state
/// at the same `zeta` as `sol`.
pub fn derivative_report_from(
    anchor: &Continuation,
    sol: &HjbSolution,
    var: &VariationState,
    exec: Execution,
) -> Result<DerivativeReport> {
    let zeta = sol.zeta();
    let lambda = sol.lambda();
    let f = &sol.f;
    let w2 = &var.w * &var.w;
    let z2 = &var.z * &var.z;
    let cubic_moment = (&(&w2 * &var.w) * f).integrate();
    let gradient_moment = (&(&var.w * &z2) * f).integrate();
    let a1_energy = var.a1_energy(sol);
    let a2_identity = -lambda * cubic_moment - 3.0 * gradient_moment;

    let h1 = first_derivative_step(zeta);
    let h2 = second_derivative_step(zeta);
    let offsets = [h1, -h1, h2, -h2, 2.0 * h2, -2.0 * h2];
    let probes = par::try_map_slice(exec, &offsets, |dz| {
        anchor.moved_to(zeta + dz).map(|c| c.order_parameter())
    })?;
    let a0 = sol.order_parameter;
    let a1_fd = (probes[0] - probes[1]) / (2.0 * h1);
    let second = |ap: f64, am: f64, h: f64| (ap - 2.0 * a0 + am) / (h * h);
    let d_h = second(probes[2], probes[3], h2);
    let d_2h = second(probes[4], probes[5], 2.0 * h2);
    let a2_fd = (4.0 * d_h - d_2h) / 3.0;

    Ok(DerivativeReport {
        zeta,
        lambda,
        a: a0,
        a1_energy,
        a1_fd,
        a2_identity,
        a2_fd,
        cubic_moment,
        gradient_moment,
    })
}

/// Derivative reports at increasing `zetas` for one `lambda`. Base solutions
/// come from a single sequential continuation; the reports themselves are
/// computed with `exec`.
pub fn derivative_sweep(
    lambda: f64,
    zetas: &[f64],
    grid: &std::sync::Arc<crate::grid::TorusGrid>,
    opts: &SolverOptions,
    exec: Execution,
) -> Result<Vec<DerivativeReport>> {
    if zetas.windows(2).any(|w| w[1] <= w[0]) || zetas.first().is_some_and(|z| *z <= 0.0) {
        return Err(Error::InvalidParams("sweep zetas must be positive and increasing".into()));
    }
    let mut cont = Continuation::start(grid, lambda, *opts)?;
    let mut anchors = Vec::with_capacity(zetas.len());
    for &zeta in zetas {
        cont.advance_to(zeta)?;
        anchors.push(cont.clone());
    }
    par::try_map_slice(exec, &anchors, |anchor| {
        let sol = anchor.solution()?;
        let var = variations(&sol)?;
        derivative_report_from(anchor, &sol, &var, Execution::Sequential)
    })
}

/// Step for the finite-difference check of `a`.
pub const A_FD_STEP: f64 = 1e-4;

/// Step for the finite-difference checks of `b` and of the score identity.
pub const B_FD_STEP: f64 = 1e-3;

/// Sup-norm gaps between the variation solves and central differences of
/// the nonlinear solver.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationCrossCheck {
    pub zeta: f64,
    pub lambda: f64,
    /// `sup |a - (v(zeta+h) - v(zeta-h)) / 2h|`, `h = 1e-4`.
    pub a_fd_error: f64,
    /// `sup |b - (w(zeta+h) - w(zeta-h)) / 2h|`, `h = 1e-3`.
    pub b_fd_error: f64,
    /// `sup |(f(zeta+h) - f(zeta-h)) / 2h + w f|`, `h = 1e-3`.
    pub score_error: f64,
}

/// Cross-checks `var` (with `b` filled in) against fresh solves near `sol`.
pub fn variation_cross_check(
    anchor: &Continuation,
    sol: &HjbSolution,
    var: &VariationState,
    exec: Execution,
) -> Result<VariationCrossCheck> {
    let b = var
        .b
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("second variation not computed".into()))?;
    let zeta = sol.zeta();
    let offsets = [A_FD_STEP, -A_FD_STEP, B_FD_STEP, -B_FD_STEP];
    let probes = par::try_map_slice(exec, &offsets, |dz| anchor.moved_to(zeta + dz)?.solution())?;
    let central = |p: &GridFn, m: &GridFn, h: f64| (p - m).scale(0.5 / h);

    let a_fd = central(&probes[0].v, &probes[1].v, A_FD_STEP);
    let a_fd_error = a_fd.max_abs_diff(&var.a);

    let w_of = |s: &HjbSolution| -> Result<GridFn> { Ok(first_variation(s)?.w) };
    let (wp, wm) = (w_of(&probes[2])?, w_of(&probes[3])?);
    let b_fd_error = central(&wp, &wm, B_FD_STEP).max_abs_diff(b);

    let f_zeta = central(&probes[2].f, &probes[3].f, B_FD_STEP);
    let score_error = f_zeta.max_abs_diff(&(&var.w * &sol.f).scale(-1.0));

    Ok(VariationCrossCheck { zeta, lambda: sol.lambda(), a_fd_error, b_fd_error, score_error })
}
