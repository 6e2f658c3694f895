//! Physical parameters, the self-consistency map
//! `F_kappa(gamma) = kappa A(4 gamma / sigma^4)` and its synchronized fixed
//! point.
//!
//! With `lambda = 2 beta / sigma^2` the threshold is
//! `kappa_c = beta sigma^2 + sigma^4 / 2 = sigma^4 (lambda + 1) / 2`, and
//! `F_kappa'(0) = kappa / kappa_c`.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TorusGrid;
use crate::hjb::{Continuation, HjbSolution, ModelParams, SolverOptions};
use crate::par::{self, Execution};
use crate::sensitivity::first_variation;

/// Fixed-point residual target, relative to `max(1, kappa)`.
pub const FIXED_POINT_TOL: f64 = 1e-9;

/// Lower end of the root bracket, relative to `kappa`.
pub const BRACKET_LO_FACTOR: f64 = 1e-6;

/// Spacing in `zeta` of the warm-start ladder.
pub const LADDER_SPACING: f64 = 1.0;

const MAX_ROOT_ITER: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub beta: f64,
    pub sigma: f64,
    pub kappa: f64,
}

impl PhysicalParams {
    pub fn new(beta: f64, sigma: f64, kappa: f64) -> Result<Self> {
        let p = Self { beta, sigma, kappa };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("beta", self.beta)?;
        check_positive("sigma", self.sigma)?;
        check_positive("kappa", self.kappa)
    }

    pub fn lambda(&self) -> f64 {
        2.0 * self.beta / (self.sigma * self.sigma)
    }

    pub fn kappa_c(&self) -> f64 {
        self.beta * self.sigma.powi(2) + 0.5 * self.sigma.powi(4)
    }

    pub fn zeta_of(&self, gamma: f64) -> f64 {
        4.0 * gamma / self.sigma.powi(4)
    }

    pub fn gamma_of(&self, zeta: f64) -> f64 {
        zeta * self.sigma.powi(4) / 4.0
    }
}

fn check_positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("{name} must be positive and finite, got {x}")))
    }
}

/// `kappa_c = beta sigma^2 + sigma^4 / 2`.
pub fn critical_coupling(beta: f64, sigma: f64) -> Result<f64> {
    check_positive("beta", beta)?;
    check_positive("sigma", sigma)?;
    Ok(beta * sigma * sigma + 0.5 * sigma.powi(4))
}

/// `lambda = 2 beta / sigma^2`, `zeta = 4 gamma / sigma^4`.
pub fn to_dimensionless(beta: f64, sigma: f64, gamma: f64) -> Result<ModelParams> {
    check_positive("beta", beta)?;
    check_positive("sigma", sigma)?;
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidParams(format!("gamma must be nonnegative, got {gamma}")));
    }
    ModelParams::new(2.0 * beta / (sigma * sigma), 4.0 * gamma / sigma.powi(4))
}

/// Inverse of [`to_dimensionless`] for a given `sigma`: `(beta, gamma)`.
pub fn from_dimensionless(params: ModelParams, sigma: f64) -> Result<(f64, f64)> {
    params.validate()?;
    check_positive("sigma", sigma)?;
    let s2 = sigma * sigma;
    Ok((params.lambda * s2 / 2.0, params.zeta * s2 * s2 / 4.0))
}

/// `F_kappa(gamma)` from a fresh solve.
pub fn self_consistency_map(
    phys: &PhysicalParams,
    gamma: f64,
    grid: &Arc<TorusGrid>,
    opts: &SolverOptions,
) -> Result<f64> {
    phys.validate()?;
    let params = to_dimensionless(phys.beta, phys.sigma, gamma)?;
    let sol = crate::hjb::solve_hjb(params, grid, opts)?;
    Ok(phys.kappa * sol.order_parameter)
}

/// The synchronized fixed point of `F_kappa` for `kappa > kappa_c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BifurcationPoint {
    pub kappa: f64,
    pub kappa_c: f64,
    pub gamma_star: f64,
    pub zeta_star: f64,
    #[serde(rename = "A_star")]
    pub a_star: f64,
    /// `g_kappa'(gamma_star)`, negative at a transversal crossing.
    pub gprime: f64,
    /// `|F_kappa(gamma_star) - gamma_star|`.
    pub residual: f64,
    /// `sup |f - 1 / (2 pi)|` at the fixed point.
    pub sup_dist_uniform: f64,
    pub iterations: usize,
}

impl BifurcationPoint {
    pub const CSV_HEADER: [&'static str; 7] =
        ["kappa", "kappa_c", "gamma_star", "zeta_star", "A_star", "gprime", "sup_dist_uniform"];

    pub fn csv_fields(&self) -> [f64; 7] {
        [self.kappa, self.kappa_c, self.gamma_star, self.zeta_star, self.a_star, self.gprime, self.sup_dist_uniform]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum BranchOutcome {
    Synchronized(BifurcationPoint),
    /// `kappa <= kappa_c`: only the uniform equilibrium exists.
    NoSynchronizedEquilibrium { kappa: f64, kappa_c: f64 },
}

impl BranchOutcome {
    pub fn point(&self) -> Option<&BifurcationPoint> {
        match self {
            Self::Synchronized(p) => Some(p),
            Self::NoSynchronizedEquilibrium { .. } => None,
        }
    }
}

/// `g_kappa` and its derivative at one `gamma`.
#[derive(Clone, Debug)]
pub struct GEval {
    pub gamma: f64,
    pub g: f64,
    pub gprime: f64,
    pub solution: HjbSolution,
}

/// Evaluates `F_kappa` for one `(beta, sigma)` pair. HJB solves are
/// warm-started from a read-only ladder of continuation states at
/// `zeta = 0, 1, 2, ...`, so results do not depend on evaluation order.
#[derive(Clone, Debug)]
pub struct BranchSolver {
    beta: f64,
    sigma: f64,
    ladder: Vec<Continuation>,
}

impl BranchSolver {
    /// Builds the ladder up to `zeta_max` (extended on demand by callers
    /// through [`BranchSolver::with_reach`]).
    pub fn new(beta: f64, sigma: f64, zeta_max: f64, grid: &Arc<TorusGrid>, opts: &SolverOptions) -> Result<Self> {
        let lambda = to_dimensionless(beta, sigma, 0.0)?.lambda;
        let mut cont = Continuation::start(grid, lambda, *opts)?;
        let mut ladder = vec![cont.clone()];
        let mut k = 1.0;
        while (k - 1.0) * LADDER_SPACING < zeta_max {
            cont.advance_to(k * LADDER_SPACING)?;
            ladder.push(cont.clone());
            k += 1.0;
        }
        Ok(Self { beta, sigma, ladder })
    }

    /// A solver whose ladder covers every `gamma` in `(0, kappa]`.
    pub fn with_reach(beta: f64, sigma: f64, kappa: f64, grid: &Arc<TorusGrid>, opts: &SolverOptions) -> Result<Self> {
        let zeta_max = 4.0 * kappa / sigma.powi(4);
        Self::new(beta, sigma, zeta_max, grid, opts)
    }

    pub fn lambda(&self) -> f64 {
        self.ladder[0].lambda()
    }

    pub fn kappa_c(&self) -> f64 {
        self.beta * self.sigma.powi(2) + 0.5 * self.sigma.powi(4)
    }

    fn params(&self, kappa: f64) -> Result<PhysicalParams> {
        PhysicalParams::new(self.beta, self.sigma, kappa)
    }

    /// Continuation state at `zeta`, from the nearest ladder rung below it.
    pub fn state_at(&self, zeta: f64) -> Result<Continuation> {
        let k = ((zeta / LADDER_SPACING).floor().max(0.0) as usize).min(self.ladder.len() - 1);
        self.ladder[k].moved_to(zeta)
    }

    /// `g_kappa(gamma) = kappa A(zeta) - gamma` and
    /// `g_kappa'(gamma) = (4 kappa / sigma^4) A'(zeta) - 1`.
    pub fn eval_g(&self, kappa: f64, gamma: f64) -> Result<GEval> {
        let phys = self.params(kappa)?;
        let zeta = phys.zeta_of(gamma);
        let sol = self.state_at(zeta)?.solution()?;
        let var = first_variation(&sol)?;
        let a1 = var.a1_energy(&sol);
        let g = kappa * sol.order_parameter - gamma;
        let gprime = 4.0 * kappa / self.sigma.powi(4) * a1 - 1.0;
        Ok(GEval { gamma, g, gprime, solution: sol })
    }

    /// Unique positive root of `g_kappa`, by safeguarded Newton inside the
    /// bracket `[1e-6 kappa, kappa]`.
    pub fn solve(&self, kappa: f64) -> Result<BranchOutcome> {
        let phys = self.params(kappa)?;
        let kappa_c = phys.kappa_c();
        if kappa <= kappa_c {
            return Ok(BranchOutcome::NoSynchronizedEquilibrium { kappa, kappa_c });
        }
        let (mut lo, mut hi) = (BRACKET_LO_FACTOR * kappa, kappa);
        let g_lo = self.eval_g(kappa, lo)?;
        let g_hi = self.eval_g(kappa, hi)?;
        if !(g_lo.g > 0.0 && g_hi.g <= 0.0) {
            return Err(Error::BracketFailure { lo, hi, g_lo: g_lo.g, g_hi: g_hi.g });
        }
        let tol = FIXED_POINT_TOL * kappa.max(1.0);
        // g is concave, so Newton from the right end approaches the root
        // monotonically; the bracket guards against inaccurate derivatives.
        let mut cur = g_hi;
        for it in 1..=MAX_ROOT_ITER {
            if cur.g.abs() <= 0.1 * tol {
                return Ok(BranchOutcome::Synchronized(self.point(kappa, kappa_c, &cur, it)));
            }
            if cur.g > 0.0 {
                lo = cur.gamma;
            } else {
                hi = cur.gamma;
            }
            let newton = cur.gamma - cur.g / cur.gprime;
            let next = if cur.gprime < 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if (hi - lo) <= 4.0 * f64::EPSILON * hi {
                // Bracket exhausted at double precision; accept if the
                // residual meets the tolerance.
                if cur.g.abs() <= tol {
                    return Ok(BranchOutcome::Synchronized(self.point(kappa, kappa_c, &cur, it)));
                }
                break;
            }
            let prev_g = cur.g;
            cur = self.eval_g(kappa, next)?;
            // A Newton step that lands on the residual floor ends the loop.
            if cur.g.abs() <= tol && cur.g.abs() >= 0.5 * prev_g.abs() {
                return Ok(BranchOutcome::Synchronized(self.point(kappa, kappa_c, &cur, it + 1)));
            }
        }
        Err(Error::NonConvergence { zeta: phys.zeta_of(cur.gamma), residual: cur.g.abs(), step: hi - lo })
    }

    fn point(&self, kappa: f64, kappa_c: f64, e: &GEval, iterations: usize) -> BifurcationPoint {
        let uniform = 1.0 / (2.0 * PI);
        let sup_dist_uniform = e.solution.f.values().iter().fold(0.0f64, |m, f| m.max((f - uniform).abs()));
        BifurcationPoint {
            kappa,
            kappa_c,
            gamma_star: e.gamma,
            zeta_star: e.solution.zeta(),
            a_star: e.solution.order_parameter,
            gprime: e.gprime,
            residual: e.g.abs(),
            sup_dist_uniform,
            iterations,
        }
    }

    /// `g_kappa` at `gamma_i = kappa i / n`, `i = 1..=n`, by continuation
    /// along the grid.
    pub fn scan_g(&self, kappa: f64, n: usize) -> Result<Vec<(f64, f64)>> {
        let phys = self.params(kappa)?;
        let mut cont = self.ladder[0].clone();
        let mut out = Vec::with_capacity(n);
        for i in 1..=n {
            let gamma = kappa * i as f64 / n as f64;
            cont.advance_to(phys.zeta_of(gamma))?;
            out.push((gamma, kappa * cont.order_parameter() - gamma));
        }
        Ok(out)
    }
}

/// Number of strict sign changes in a sequence (zeros are skipped).
pub fn sign_changes(values: &[f64]) -> usize {
    let signs: Vec<bool> = values.iter().filter(|v| **v != 0.0).map(|v| *v > 0.0).collect();
    signs.windows(2).filter(|w| w[0] != w[1]).count()
}

/// Solves the fixed point at `phys` from scratch.
pub fn solve_branch(phys: &PhysicalParams, grid: &Arc<TorusGrid>, opts: &SolverOptions) -> Result<BranchOutcome> {
    phys.validate()?;
    if phys.kappa <= phys.kappa_c() {
        return Ok(BranchOutcome::NoSynchronizedEquilibrium { kappa: phys.kappa, kappa_c: phys.kappa_c() });
    }
    BranchSolver::with_reach(phys.beta, phys.sigma, phys.kappa, grid, opts)?.solve(phys.kappa)
}

/// Trend diagnostics over a branch sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// `sup |f - 1/(2 pi)|` per kappa, in input order.
    pub sup_dist_uniform: Vec<f64>,
    /// `zeta_star` strictly increasing in kappa (so decreasing toward the
    /// threshold).
    pub zeta_monotone: bool,
    /// `gamma_star` nondecreasing in kappa (an empirical trend).
    pub gamma_nondecreasing: bool,
    /// `sup_dist_uniform` strictly decreasing as kappa decreases.
    pub sup_dist_decreasing: bool,
    /// Distance to uniform at the smallest kappa.
    pub closest_sup_dist: f64,
}

/// Branch points for increasing `kappas`, all above `kappa_c`.
pub fn branch_sweep(
    beta: f64,
    sigma: f64,
    kappas: &[f64],
    grid: &Arc<TorusGrid>,
    opts: &SolverOptions,
    exec: Execution,
) -> Result<(Vec<BifurcationPoint>, ConvergenceReport)> {
    let kappa_c = critical_coupling(beta, sigma)?;
    if kappas.is_empty() || kappas.windows(2).any(|w| w[1] <= w[0]) || kappas[0] <= kappa_c {
        return Err(Error::InvalidParams(format!(
            "kappas must be increasing and above kappa_c = {kappa_c}"
        )));
    }
    let solver = BranchSolver::with_reach(beta, sigma, kappas[kappas.len() - 1], grid, opts)?;
    let outcomes = par::try_map_slice(exec, kappas, |&k| solver.solve(k))?;
    let points: Vec<BifurcationPoint> = outcomes
        .into_iter()
        .map(|o| o.point().cloned().expect("kappa above threshold"))
        .collect();
    let report = ConvergenceReport {
        sup_dist_uniform: points.iter().map(|p| p.sup_dist_uniform).collect(),
        zeta_monotone: points.windows(2).all(|w| w[1].zeta_star > w[0].zeta_star),
        gamma_nondecreasing: points.windows(2).all(|w| w[1].gamma_star >= w[0].gamma_star),
        sup_dist_decreasing: points.windows(2).all(|w| w[1].sup_dist_uniform > w[0].sup_dist_uniform),
        closest_sup_dist: points[0].sup_dist_uniform,
    };
    Ok((points, report))
}
