//! Monte Carlo checks of the equilibrium: invariance of `f` under the
//! optimally controlled diffusion, and optimality of the feedback against
//! perturbed drifts.
//!
//! Every path owns a ChaCha8 stream (stream index = path index, plus a
//! fixed offset for cost paths), and histograms are pooled as integer
//! counts, so results are bit-identical for any thread count.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bifurcation::PhysicalParams;
use crate::error::{Error, Result};
use crate::grid::GridFn;
use crate::hjb::HjbSolution;
use crate::par::{self, Execution};

/// Largest admissible time step.
pub const MAX_DT: f64 = 1e-2;

/// Discount weight left at the end of a cost path, `e^{-beta T}`.
pub const COST_TAIL_WEIGHT: f64 = 1e-4;

/// Number of consecutive time windows with their own histogram.
pub const INVARIANCE_WINDOWS: usize = 4;

/// Points of the drift lookup tables.
const TABLE_POINTS: usize = 1 << 13;

/// Stream offset separating cost paths from stationary paths.
const COST_STREAM_OFFSET: u64 = 1 << 32;

/// Path count used by the best-response checks.
pub const DEFAULT_COST_PATHS: usize = 2000;

/// 97.5% standard normal quantile.
const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub dt: f64,
    pub n_paths: usize,
    pub horizon: f64,
    pub burn_in: f64,
    pub seed: u64,
    pub bins: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { dt: 1e-3, n_paths: 64, horizon: 200.0, burn_in: 10.0, seed: 20_240_917, bins: 32 }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.dt > 0.0 && self.dt <= MAX_DT) {
            return bad(format!("dt must lie in (0, {MAX_DT}], got {}", self.dt));
        }
        if self.n_paths == 0 {
            return bad("n_paths must be positive".into());
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        if !(self.burn_in >= 0.0 && self.burn_in < self.horizon) {
            return bad(format!("burn_in must lie in [0, horizon), got {}", self.burn_in));
        }
        if self.bins == 0 {
            return bad("bins must be positive".into());
        }
        Ok(())
    }

    fn steps(&self, t: f64) -> usize {
        (t / self.dt).round() as usize
    }
}

/// Pooled post-burn-in histogram on `bins` equal cells of `[0, 2 pi)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalLaw {
    pub bin_edges: Vec<f64>,
    pub masses: Vec<f64>,
    /// Mass of the reference density in each bin.
    pub reference_masses: Vec<f64>,
    pub l1_to_density: f64,
    /// L1 distance of each of [`INVARIANCE_WINDOWS`] consecutive windows.
    pub window_l1: Vec<f64>,
    pub samples: u64,
}

impl EmpiricalLaw {
    pub fn bin_centers(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Least-squares slope of `window_l1` against the window index.
    pub fn window_trend(&self) -> f64 {
        let n = self.window_l1.len() as f64;
        let xm = (n - 1.0) / 2.0;
        let ym = self.window_l1.iter().sum::<f64>() / n;
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for (i, y) in self.window_l1.iter().enumerate() {
            let dx = i as f64 - xm;
            sxy += dx * (y - ym);
            sxx += dx * dx;
        }
        if sxx == 0.0 {
            0.0
        } else {
            sxy / sxx
        }
    }

    pub fn from_counts(counts: &[u64], reference_masses: Vec<f64>, window_counts: &[Vec<u64>]) -> Self {
        let bins = counts.len();
        let total: u64 = counts.iter().sum();
        let masses = normalize(counts);
        let l1 = l1(&masses, &reference_masses);
        let window_l1 = window_counts.iter().map(|c| l1_or_nan(c, &reference_masses)).collect();
        let bin_edges = (0..=bins).map(|i| TAU * i as f64 / bins as f64).collect();
        Self { bin_edges, masses, reference_masses, l1_to_density: l1, window_l1, samples: total }
    }
}

fn normalize(counts: &[u64]) -> Vec<f64> {
    let total: u64 = counts.iter().sum();
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn l1_or_nan(counts: &[u64], reference: &[f64]) -> f64 {
    if counts.iter().all(|&c| c == 0) {
        f64::NAN
    } else {
        l1(&normalize(counts), reference)
    }
}

/// Mass of `f` on each of `bins` equal cells.
pub fn reference_bin_masses(f: &GridFn, bins: usize) -> Vec<f64> {
    let interp = f.interpolant();
    let edges: Vec<f64> = (0..=bins).map(|i| interp.integral_from_zero(TAU * i as f64 / bins as f64)).collect();
    edges.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Periodic table of a band-limited function with 4-point Lagrange
/// interpolation; the interpolation error is far below the time-stepping
/// error while each lookup costs a few flops.
#[derive(Clone, Debug)]
pub struct PeriodicTable {
    values: Vec<f64>,
    inv_h: f64,
}

impl PeriodicTable {
    pub fn new(q: &GridFn) -> Self {
        let interp = q.interpolant().truncated(1e-15);
        let n = TABLE_POINTS;
        let values = (0..n).map(|i| interp.eval(TAU * i as f64 / n as f64)).collect();
        Self { values, inv_h: n as f64 / TAU }
    }

    /// Value at `x` in `[0, 2 pi)`.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.values.len();
        let s = x * self.inv_h;
        let i = s.floor();
        let t = s - i;
        let i = i as usize % n;
        let at = |k: usize| self.values[(i + n + k - 1) % n];
        let (y0, y1, y2, y3) = (at(0), at(1), at(2), at(3));
        let tm1 = t - 1.0;
        let tm2 = t - 2.0;
        let tp1 = t + 1.0;
        -y0 * t * tm1 * tm2 / 6.0 + y1 * tp1 * tm1 * tm2 / 2.0 - y2 * tp1 * t * tm2 / 2.0 + y3 * tp1 * t * tm1 / 6.0
    }
}

/// Inverse CDF of `f` from its cumulative integral at the grid nodes,
/// linear within each cell.
struct InverseCdf {
    nodes: Vec<f64>,
    cdf: Vec<f64>,
}

impl InverseCdf {
    fn new(f: &GridFn) -> Self {
        let interp = f.interpolant();
        let grid = f.grid();
        let mut nodes: Vec<f64> = grid.nodes().to_vec();
        nodes.push(TAU);
        let mut cdf: Vec<f64> = nodes.iter().map(|&x| interp.integral_from_zero(x)).collect();
        let total = cdf[cdf.len() - 1];
        for c in &mut cdf {
            *c /= total;
        }
        Self { nodes, cdf }
    }

    fn sample(&self, u: f64) -> f64 {
        let k = self.cdf.partition_point(|&c| c <= u).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[k - 1], self.cdf[k]);
        let t = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
        (self.nodes[k - 1] + t * (self.nodes[k] - self.nodes[k - 1])).rem_euclid(TAU)
    }
}

fn path_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[inline]
fn wrap(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    // rem_euclid can round up to exactly 2 pi.
    if y >= TAU {
        0.0
    } else {
        y
    }
}

/// Simulates `dX = -u(X) dt + sqrt(2) dB` on the torus, started from `f`.
pub fn simulate_stationary(sol: &HjbSolution, cfg: &SimConfig) -> Result<EmpiricalLaw> {
    simulate_stationary_with(sol, cfg, Execution::default())
}

pub fn simulate_stationary_with(sol: &HjbSolution, cfg: &SimConfig, exec: Execution) -> Result<EmpiricalLaw> {
    cfg.validate()?;
    let drift = PeriodicTable::new(&sol.u);
    let init = InverseCdf::new(&sol.f);
    let steps = cfg.steps(cfg.horizon);
    let burn = cfg.steps(cfg.burn_in).min(steps);
    let recorded = steps - burn;
    let bins = cfg.bins;
    let bin_scale = bins as f64 / TAU;
    let noise = (2.0 * cfg.dt).sqrt();

    let per_path = par::map_range(exec, cfg.n_paths, |path| {
        let mut rng = path_rng(cfg.seed, path as u64);
        let mut x = init.sample(rng.random::<f64>());
        let mut windows = vec![vec![0u64; bins]; INVARIANCE_WINDOWS];
        for k in 0..steps {
            let dw: f64 = rng.sample(StandardNormal);
            x = wrap(x - drift.eval(x) * cfg.dt + noise * dw);
            if k >= burn {
                let b = ((x * bin_scale) as usize).min(bins - 1);
                let w = ((k - burn) * INVARIANCE_WINDOWS / recorded.max(1)).min(INVARIANCE_WINDOWS - 1);
                windows[w][b] += 1;
            }
        }
        windows
    });

    let mut window_counts = vec![vec![0u64; bins]; INVARIANCE_WINDOWS];
    for windows in &per_path {
        for (acc, w) in window_counts.iter_mut().zip(windows) {
            for (a, c) in acc.iter_mut().zip(w) {
                *a += c;
            }
        }
    }
    let mut counts = vec![0u64; bins];
    for w in &window_counts {
        for (a, c) in counts.iter_mut().zip(w) {
            *a += c;
        }
    }
    if counts.iter().all(|&c| c == 0) {
        return Err(Error::InvalidConfig("no samples after burn-in".into()));
    }
    Ok(EmpiricalLaw::from_counts(&counts, reference_bin_masses(&sol.f, bins), &window_counts))
}

/// Monte Carlo discounted costs of the optimal and a perturbed feedback.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    #[serde(rename = "J_opt")]
    pub j_opt: f64,
    #[serde(rename = "J_pert")]
    pub j_pert: f64,
    /// 95% confidence radii.
    pub ci_opt: f64,
    pub ci_pert: f64,
    /// 95% radius of the paired difference `J_pert - J_opt`.
    pub ci_diff: f64,
    /// Bound on the discarded cost beyond the horizon, for both policies.
    pub tail_bound: f64,
    pub slack: f64,
    pub horizon: f64,
    /// `phi(0) + kappa / beta` with `phi = sigma^2 v / 2`: the value at the
    /// origin once the constant `kappa` absorbed into `phi` is restored.
    pub hjb_value: f64,
    /// The restored constant `kappa / beta`.
    pub offset: f64,
    /// `kappa A - gamma`; zero when `sol` is the fixed point for `kappa`.
    pub coupling_mismatch: f64,
    pub best_response_holds: bool,
}

/// Discounted cost `E int e^{-beta t} (kappa (1 - A cos X) + alpha^2 / 2) dt`
/// from `X_0 = 0`, for `alpha* = -(sigma^2/2) u` and for
/// `alpha* + perturbation`, with common noise. `cfg.horizon` and
/// `cfg.burn_in` are ignored; the horizon is `ln(1e4) / beta`.
pub fn policy_cost(
    sol: &HjbSolution,
    phys: &PhysicalParams,
    perturbation: &GridFn,
    cfg: &SimConfig,
) -> Result<CostReport> {
    policy_cost_with(sol, phys, perturbation, cfg, Execution::default())
}

pub fn policy_cost_with(
    sol: &HjbSolution,
    phys: &PhysicalParams,
    perturbation: &GridFn,
    cfg: &SimConfig,
    exec: Execution,
) -> Result<CostReport> {
    cfg.validate()?;
    phys.validate()?;
    if ((phys.lambda() - sol.lambda()) / sol.lambda()).abs() > 1e-12 {
        return Err(Error::InvalidConfig(format!(
            "physical lambda {} does not match the solution's {}",
            phys.lambda(),
            sol.lambda()
        )));
    }
    if perturbation.values().iter().any(|p| !p.is_finite()) {
        return Err(Error::InvalidConfig("perturbation must be bounded".into()));
    }
    if cfg.n_paths < 2 {
        return Err(Error::InvalidConfig("policy_cost needs at least two paths".into()));
    }
    let (beta, sigma, kappa) = (phys.beta, phys.sigma, phys.kappa);
    let a = sol.order_parameter;
    let half_s2 = 0.5 * sigma * sigma;
    let drift = PeriodicTable::new(&sol.u);
    let pert = PeriodicTable::new(perturbation);
    let horizon = (1.0 / COST_TAIL_WEIGHT).ln() / beta;
    let steps = (horizon / cfg.dt).ceil() as usize;
    let horizon = steps as f64 * cfg.dt;
    let decay = (-beta * cfg.dt).exp();
    let noise = sigma * cfg.dt.sqrt();
    let running = |x: f64, alpha: f64| kappa * (1.0 - a * x.cos()) + 0.5 * alpha * alpha;

    let costs = par::map_range(exec, cfg.n_paths, |path| {
        let mut rng = path_rng(cfg.seed, COST_STREAM_OFFSET + path as u64);
        let (mut xo, mut xp) = (0.0f64, 0.0f64);
        let (mut jo, mut jp) = (0.0, 0.0);
        let mut disc = 1.0;
        let mut ao = -half_s2 * drift.eval(xo);
        let mut ap = ao + pert.eval(xp);
        let (mut co, mut cp) = (running(xo, ao), running(xp, ap));
        for _ in 0..steps {
            let dw: f64 = rng.sample(StandardNormal);
            xo = wrap(xo + ao * cfg.dt + noise * dw);
            xp = wrap(xp + ap * cfg.dt + noise * dw);
            ao = -half_s2 * drift.eval(xo);
            ap = -half_s2 * drift.eval(xp) + pert.eval(xp);
            let next_disc = disc * decay;
            let (co_next, cp_next) = (running(xo, ao), running(xp, ap));
            // Trapezoid in time on the discounted running cost.
            jo += 0.5 * cfg.dt * (disc * co + next_disc * co_next);
            jp += 0.5 * cfg.dt * (disc * cp + next_disc * cp_next);
            co = co_next;
            cp = cp_next;
            disc = next_disc;
        }
        (jo, jp)
    });

    let n = costs.len() as f64;
    let mean = |f: &dyn Fn(&(f64, f64)) -> f64| costs.iter().map(f).sum::<f64>() / n;
    let radius = |f: &dyn Fn(&(f64, f64)) -> f64, m: f64| {
        let var = costs.iter().map(|c| (f(c) - m).powi(2)).sum::<f64>() / (n - 1.0);
        Z_95 * (var / n).sqrt()
    };
    let j_opt = mean(&|c| c.0);
    let j_pert = mean(&|c| c.1);
    let d = j_pert - j_opt;
    let ci_opt = radius(&|c| c.0, j_opt);
    let ci_pert = radius(&|c| c.1, j_pert);
    let ci_diff = radius(&|c| c.1 - c.0, d);

    let sup_u = sol.u.sup_norm();
    let sup_p = perturbation.sup_norm();
    let sup_cost = kappa * (1.0 + a.abs()) + 0.5 * (half_s2 * sup_u + sup_p).powi(2);
    let tail_bound = (-beta * horizon).exp() * sup_cost / beta;
    let slack = ci_diff + tail_bound;
    let phi0 = half_s2 * sol.v.at(0);
    let offset = kappa / beta;
    let gamma = phys.gamma_of(sol.zeta());
    Ok(CostReport {
        j_opt,
        j_pert,
        ci_opt,
        ci_pert,
        ci_diff,
        tail_bound,
        slack,
        horizon,
        hjb_value: phi0 + offset,
        offset,
        coupling_mismatch: kappa * a - gamma,
        best_response_holds: j_opt <= j_pert + slack,
    })
}

/// Five fixed drift perturbations used by the best-response check.
pub fn canned_perturbations(sol: &HjbSolution) -> Vec<(&'static str, GridFn)> {
    let g = sol.grid();
    vec![
        ("0.5 sin x", GridFn::from_fn(g, |x| 0.5 * x.sin())),
        ("-0.5 sin x", GridFn::from_fn(g, |x| -0.5 * x.sin())),
        ("0.3 cos x", GridFn::from_fn(g, |x| 0.3 * x.cos())),
        ("0.4 sin 2x", GridFn::from_fn(g, |x| 0.4 * (2.0 * x).sin())),
        ("0.25", GridFn::constant(g, 0.25)),
    ]
}
