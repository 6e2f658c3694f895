//! Stationary HJB solver.
//!
//! Solves `-v'' + lambda v + v'^2 / 2 = -zeta cos x` on the torus by Newton's
//! method and continuation in `zeta` starting from `v = 0` at `zeta = 0`.
//! The Jacobian is the operator of [`crate::linear`]; its factorization is
//! reused across iterations and continuation steps while it still contracts
//! the residual, and rebuilt otherwise.

use std::sync::Arc;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{make_grid, GridFn, TorusGrid};
use crate::linear::{self, EvenFactorization};

/// Dimensionless parameters: discount `lambda > 0` and coupling `zeta >= 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub lambda: f64,
    pub zeta: f64,
}

impl ModelParams {
    pub fn new(lambda: f64, zeta: f64) -> Result<Self> {
        let p = Self { lambda, zeta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::InvalidParams(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.zeta.is_finite() && self.zeta >= 0.0) {
            return Err(Error::InvalidParams(format!("zeta must be nonnegative, got {}", self.zeta)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Target sup-norm of the HJB residual.
    pub tolerance: f64,
    /// Newton iterations allowed per continuation step.
    pub max_newton_iter: usize,
    /// Largest continuation step in `zeta`.
    pub max_step: f64,
    /// Steps are halved on failure down to this size.
    pub min_step: f64,
    /// Extra Newton steps taken after reaching the tolerance, kept only while
    /// each one at least halves the residual.
    pub polish_steps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tolerance: 1e-11, max_newton_iter: 40, max_step: 0.5, min_step: 1e-4, polish_steps: 3 }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let ok = self.tolerance > 0.0
            && self.max_newton_iter > 0
            && self.min_step > 0.0
            && self.max_step >= self.min_step;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("bad solver options {self:?}")))
        }
    }
}

/// Converged (or reconstructed) solution at fixed `(lambda, zeta)`.
#[derive(Clone, Debug)]
pub struct HjbSolution {
    pub params: ModelParams,
    pub v: GridFn,
    pub u: GridFn,
    pub f: GridFn,
    /// `int e^{-v}`.
    pub normalizer: f64,
    /// First cosine moment `A = int cos(x) f(x) dx`.
    pub order_parameter: f64,
    /// Sup norm of the HJB residual.
    pub residual: f64,
}

impl HjbSolution {
    /// Builds every derived field from samples of `v`. No symmetrization or
    /// solving happens here, so a corrupted `v` shows up in the residual.
    pub fn from_values(params: ModelParams, v: GridFn) -> Self {
        let u = v.diff();
        let residual = residual_sup(&v, &u, params);
        let (f, normalizer) = density(&v);
        let order_parameter = (&GridFn::cos(v.grid()) * &f).integrate();
        Self { params, v, u, f, normalizer, order_parameter, residual }
    }

    pub fn grid(&self) -> &Arc<TorusGrid> {
        self.v.grid()
    }

    pub fn lambda(&self) -> f64 {
        self.params.lambda
    }

    pub fn zeta(&self) -> f64 {
        self.params.zeta
    }

    pub fn to_document(&self) -> SolutionDocument {
        SolutionDocument {
            lambda: self.params.lambda,
            zeta: self.params.zeta,
            m: self.v.len(),
            residual: self.residual,
            order_parameter: self.order_parameter,
            normalizer: self.normalizer,
            v: self.v.values().to_vec(),
            u: self.u.values().to_vec(),
            f: self.f.values().to_vec(),
        }
    }

    /// Rebuilds a solution from a document, trusting only `lambda`, `zeta`
    /// and the samples of `v`.
    pub fn from_document(doc: &SolutionDocument) -> Result<Self> {
        let params = ModelParams::new(doc.lambda, doc.zeta)?;
        if doc.v.len() != doc.m {
            return Err(Error::InvalidInput(format!(
                "document declares M = {} but holds {} samples of v",
                doc.m,
                doc.v.len()
            )));
        }
        let grid = make_grid(doc.m)?;
        let v = GridFn::new(grid, doc.v.clone())?;
        Ok(Self::from_values(params, v))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SolutionDocument = serde_json::from_str(text)?;
        Self::from_document(&doc)
    }
}

/// JSON layout of a solution.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolutionDocument {
    pub lambda: f64,
    pub zeta: f64,
    #[serde(rename = "M")]
    pub m: usize,
    pub residual: f64,
    #[serde(rename = "A")]
    pub order_parameter: f64,
    pub normalizer: f64,
    pub v: Vec<f64>,
    pub u: Vec<f64>,
    pub f: Vec<f64>,
}

/// `f = e^{-v} / int e^{-v}` and the normalizer.
fn density(v: &GridFn) -> (GridFn, f64) {
    let shift = v.values().iter().copied().fold(f64::INFINITY, f64::min);
    let e = v.map(|x| (shift - x).exp());
    let z = e.integrate();
    (e.scale(1.0 / z), z * (-shift).exp())
}

pub fn equilibrium_density(sol: &HjbSolution) -> GridFn {
    density(&sol.v).0
}

pub fn order_parameter(sol: &HjbSolution) -> f64 {
    (&GridFn::cos(sol.grid()) * &sol.f).integrate()
}

/// Sup over nodes of `|-v_xx + lambda v + u^2/2 + zeta cos x|`, `v_xx = diff(u)`.
pub fn hjb_residual(sol: &HjbSolution) -> f64 {
    residual_sup(&sol.v, &sol.v.diff(), sol.params)
}

fn residual_sup(v: &GridFn, u: &GridFn, p: ModelParams) -> f64 {
    linear::sup(&residual_vec(v.grid(), p.lambda, p.zeta, v.values(), u.values()))
}

fn residual_vec(grid: &TorusGrid, lambda: f64, zeta: f64, v: &[f64], u: &[f64]) -> Vec<f64> {
    let mut uxx = vec![0.0; v.len()];
    grid.diff_slice(u, &mut uxx);
    (0..v.len())
        .map(|i| -uxx[i] + lambda * v[i] + 0.5 * u[i] * u[i] + zeta * grid.cos_at(i))
        .collect()
}

/// Size of the HJB residual that rounding alone can produce: samples of `v`
/// carry errors of order `eps |v|`, and the second derivative amplifies the
/// highest modes by up to `(M/2)^2`.
pub fn roundoff_floor(grid: &TorusGrid, v: &[f64]) -> f64 {
    let half = (grid.len() / 2) as f64;
    ROUNDOFF_FACTOR * f64::EPSILON * half * half * linear::sup(v)
}

const ROUNDOFF_FACTOR: f64 = 2.0;

/// Newton iterate with its derivative and residual.
struct Iterate {
    v: Vec<f64>,
    u: Vec<f64>,
    r: Vec<f64>,
    norm: f64,
}

impl Iterate {
    fn new(grid: &TorusGrid, lambda: f64, zeta: f64, mut v: Vec<f64>) -> Self {
        let m = v.len();
        let mut asym: f64 = 0.0;
        for j in 1..m / 2 {
            let k = m - j;
            let mean = 0.5 * (v[j] + v[k]);
            asym = asym.max((v[j] - mean).abs());
            v[j] = mean;
            v[k] = mean;
        }
        if asym > 1e-9 {
            warn!("iterate asymmetry {asym:.3e} before symmetrization at zeta = {zeta}");
        }
        let mut u = vec![0.0; m];
        grid.diff_slice(&v, &mut u);
        let r = residual_vec(grid, lambda, zeta, &v, &u);
        let norm = linear::sup(&r);
        Self { v, u, r, norm }
    }
}

/// Newton's method at fixed `zeta` from `guess`, reusing `factor` if given.
fn newton(
    grid: &TorusGrid,
    lambda: f64,
    zeta: f64,
    guess: Vec<f64>,
    factor: Option<Arc<EvenFactorization>>,
    opts: &SolverOptions,
) -> Result<(Iterate, Arc<EvenFactorization>)> {
    let mut it = Iterate::new(grid, lambda, zeta, guess);
    let mut factor = factor;
    let mut fresh = false;
    let mut polished = 0;
    let fail = |norm: f64| Error::NonConvergence { zeta, residual: norm, step: 0.0 };
    for _ in 0..opts.max_newton_iter {
        if it.norm <= opts.tolerance && polished >= opts.polish_steps {
            break;
        }
        let lu = match &factor {
            Some(lu) => lu.clone(),
            None => {
                fresh = true;
                let lu = EvenFactorization::new(grid, lambda, &it.u)?;
                factor = Some(lu.clone());
                lu
            }
        };
        let neg_r: Vec<f64> = it.r.iter().map(|x| -x).collect();
        let delta = lu.solve(&neg_r)?;
        let trial_v: Vec<f64> = it.v.iter().zip(&delta).map(|(a, d)| a + d).collect();
        let trial = Iterate::new(grid, lambda, zeta, trial_v);

        if trial.norm <= 0.5 * it.norm {
            if it.norm <= opts.tolerance {
                polished += 1;
            }
            it = trial;
            fresh = false;
            continue;
        }
        if it.norm <= opts.tolerance {
            break;
        }
        if !fresh {
            factor = None;
            continue;
        }
        if it.norm <= roundoff_floor(grid, &it.v) {
            // A fresh Newton step no longer contracts: the residual is at
            // the rounding level of the second derivative.
            debug!("newton stagnated at residual {:.3e} (zeta = {zeta})", it.norm);
            break;
        }
        if trial.norm < it.norm {
            it = trial;
            fresh = false;
            continue;
        }
        // Fresh Jacobian and still no decrease: damp.
        let mut t = 0.5;
        let mut accepted = None;
        while t > 1e-3 {
            let v: Vec<f64> = it.v.iter().zip(&delta).map(|(a, d)| a + t * d).collect();
            let cand = Iterate::new(grid, lambda, zeta, v);
            if cand.norm < it.norm {
                accepted = Some(cand);
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some(cand) => {
                it = cand;
                factor = None;
            }
            None => return Err(fail(it.norm)),
        }
    }
    if it.norm > opts.tolerance.max(roundoff_floor(grid, &it.v)) || !it.norm.is_finite() {
        return Err(fail(it.norm));
    }
    let factor = match factor {
        Some(f) => f,
        None => EvenFactorization::new(grid, lambda, &it.u)?,
    };
    Ok((it, factor))
}

/// A point on the solution branch together with what is needed to move
/// along it cheaply: the tangent `dv/dzeta` and a factorized Jacobian.
///
/// Internally `zeta` may be negative (finite-difference probes near zero);
/// the solution at `-zeta` is the one at `zeta` shifted by `pi`.
#[derive(Clone, Debug)]
pub struct Continuation {
    grid: Arc<TorusGrid>,
    lambda: f64,
    opts: SolverOptions,
    zeta: f64,
    v: Vec<f64>,
    residual: f64,
    tangent: Vec<f64>,
    factor: Arc<EvenFactorization>,
}

impl Continuation {
    /// The trivial solution `v = 0` at `zeta = 0`.
    pub fn start(grid: &Arc<TorusGrid>, lambda: f64, opts: SolverOptions) -> Result<Self> {
        ModelParams::new(lambda, 0.0)?;
        opts.validate()?;
        let m = grid.len();
        let zero = vec![0.0; m];
        let factor = EvenFactorization::new(grid, lambda, &zero)?;
        let tangent = (0..m).map(|i| -grid.cos_at(i) / (lambda + 1.0)).collect();
        Ok(Self { grid: grid.clone(), lambda, opts, zeta: 0.0, v: zero, residual: 0.0, tangent, factor })
    }

    /// Anchors continuation at an already converged solution.
    pub fn from_solution(sol: &HjbSolution, opts: SolverOptions) -> Result<Self> {
        opts.validate()?;
        let grid = sol.grid().clone();
        let lambda = sol.lambda();
        let factor = EvenFactorization::new(&grid, lambda, sol.u.values())?;
        let tangent = tangent(&grid, lambda, sol.u.values(), &factor)?;
        Ok(Self {
            grid,
            lambda,
            opts,
            zeta: sol.zeta(),
            v: sol.v.values().to_vec(),
            residual: sol.residual,
            tangent,
            factor,
        })
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn grid(&self) -> &Arc<TorusGrid> {
        &self.grid
    }

    pub fn options(&self) -> &SolverOptions {
        &self.opts
    }

    pub fn values(&self) -> &[f64] {
        &self.v
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// Follows the branch to `target` with tangent-predicted steps.
    pub fn advance_to(&mut self, target: f64) -> Result<()> {
        if !target.is_finite() {
            return Err(Error::InvalidParams(format!("zeta must be finite, got {target}")));
        }
        let mut step = self.opts.max_step;
        while self.zeta != target {
            let remaining = target - self.zeta;
            let dz = remaining.signum() * step.min(remaining.abs());
            let next = if (remaining - dz).abs() <= 1e-15 * target.abs().max(1.0) { target } else { self.zeta + dz };
            let guess: Vec<f64> =
                self.v.iter().zip(&self.tangent).map(|(v, t)| v + (next - self.zeta) * t).collect();
            match newton(&self.grid, self.lambda, next, guess, Some(self.factor.clone()), &self.opts) {
                Ok((it, factor)) => {
                    self.tangent = tangent(&self.grid, self.lambda, &it.u, &factor)?;
                    self.zeta = next;
                    self.v = it.v;
                    self.residual = it.norm;
                    self.factor = factor;
                    step = (2.0 * step).min(self.opts.max_step);
                }
                Err(Error::NonConvergence { residual, .. }) => {
                    debug!("continuation step {step:.3e} failed at zeta = {next}");
                    step *= 0.5;
                    if step < self.opts.min_step {
                        return Err(Error::NonConvergence { zeta: next, residual, step });
                    }
                }
                Err(e) => return Err(e),
            }
        }
        Ok(())
    }

    /// A copy of this state moved to `zeta`.
    pub fn moved_to(&self, zeta: f64) -> Result<Self> {
        let mut c = self.clone();
        c.advance_to(zeta)?;
        Ok(c)
    }

    /// The solution at the current `zeta`. Fails for negative `zeta`.
    pub fn solution(&self) -> Result<HjbSolution> {
        let params = ModelParams::new(self.lambda, self.zeta)?;
        let v = GridFn::new(self.grid.clone(), self.v.clone())?;
        Ok(HjbSolution::from_values(params, v))
    }

    /// Order parameter at the current state, valid for any sign of `zeta`.
    pub fn order_parameter(&self) -> f64 {
        let v = GridFn::new(self.grid.clone(), self.v.clone()).expect("length checked at construction");
        let (f, _) = density(&v);
        (&GridFn::cos(&self.grid) * &f).integrate()
    }

    /// Samples of `f` at the current state, valid for any sign of `zeta`.
    pub fn density(&self) -> GridFn {
        let v = GridFn::new(self.grid.clone(), self.v.clone()).expect("length checked at construction");
        density(&v).0
    }
}

/// Solves `L a = -cos x` with a possibly stale factor plus refinement.
fn tangent(grid: &TorusGrid, lambda: f64, u: &[f64], factor: &EvenFactorization) -> Result<Vec<f64>> {
    let rhs: Vec<f64> = (0..grid.len()).map(|i| -grid.cos_at(i)).collect();
    Ok(linear::solve_refined(grid, lambda, u, factor, &rhs, 1e-12, 8)?.solution)
}

/// Solves the HJB at `params` by continuation from `zeta = 0`.
pub fn solve_hjb(params: ModelParams, grid: &Arc<TorusGrid>, opts: &SolverOptions) -> Result<HjbSolution> {
    params.validate()?;
    let mut c = Continuation::start(grid, params.lambda, *opts)?;
    c.advance_to(params.zeta)?;
    c.solution()
}
