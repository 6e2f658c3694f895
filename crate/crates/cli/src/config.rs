//! Frozen defaults, optionally overlaid by a user TOML file.

use std::path::Path;

use serde::Deserialize;

const EMBEDDED: &str = include_str!("../defaults.toml");

#[derive(Clone, Debug, Deserialize)]
pub struct Defaults {
    pub solver: SolverDefaults,
    pub sweep: SweepDefaults,
    pub verify: VerifyDefaults,
    pub bifurcate: BifurcateDefaults,
    pub simulate: SimulateDefaults,
}

#[derive(Clone, Debug, Deserialize)]
pub struct SolverDefaults {
    pub grid: usize,
    pub tolerance: f64,
    pub max_newton_iter: usize,
    pub max_step: f64,
    pub min_step: f64,
}

#[derive(Clone, Debug, Deserialize)]
pub struct SweepDefaults {
    pub zeta_max: f64,
    pub steps: usize,
}

#[derive(Clone, Debug, Deserialize)]
pub struct VerifyDefaults {
    pub suite: String,
    pub residual_tol: f64,
    pub parity_tol: f64,
}

#[derive(Clone, Debug, Deserialize)]
pub struct BifurcateDefaults {
    pub beta: f64,
    pub sigma: f64,
    pub kappa_min: f64,
    pub kappa_max: f64,
    pub steps: usize,
}

#[derive(Clone, Debug, Deserialize)]
pub struct SimulateDefaults {
    pub paths: usize,
    pub horizon: f64,
    pub burn_in: f64,
    pub dt: f64,
    pub seed: u64,
    pub bins: usize,
}

fn overlay(base: &mut toml::Table, top: toml::Table) {
    for (key, value) in top {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => overlay(b, t),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

impl Defaults {
    pub fn load(user: Option<&Path>) -> Result<Self, String> {
        let mut table: toml::Table = EMBEDDED.parse().map_err(|e| format!("embedded defaults: {e}"))?;
        if let Some(path) = user {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            let top: toml::Table = text.parse().map_err(|e| format!("{}: {e}", path.display()))?;
            overlay(&mut table, top);
        }
        table.try_into().map_err(|e| format!("config: {e}"))
    }
}
