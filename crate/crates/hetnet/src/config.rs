//! Structured text configuration.
//!
//! ```toml
//! [network]          # alpha, theta (linear), p, optional ref_loss
//! [tier.1]           # power_dbm, density, bias -- one section per tier
//! [traffic]          # lambda_u, xi_min/xi_max, beta_min/beta_max
//! [simulation]       # slots, warmup, realizations, seed,
//!                    # stability_queue_cap, optional window_side
//! [quadrature]       # omega_max, abs_tol, rel_tol, max_subdiv (optional)
//! [series]           # n_max, tail_tol (optional)
//! [output]           # curve grids (optional)
//! ```
//!
//! Powers are configured in dBm and stored in milliwatts; everything the
//! formulas consume is linear.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::model::{dbm_to_mw, ModelError, NetworkParams, TierSpec};
use crate::simulator::{SimConfig, SimError};
use crate::specfun::{QuadratureSpec, SeriesSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("tier sections must be numbered [tier.1] .. [tier.K], got key {0:?}")]
    BadTierKey(String),
    #[error("tier sections must be contiguous from 1; missing [tier.{0}]")]
    MissingTier(usize),
    #[error("no [tier.N] sections found")]
    NoTiers,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("unknown sweep field {0:?}")]
    UnknownField(String),
    #[error("field {0:?} cannot be set on this config (tier index out of range?)")]
    FieldNotApplicable(String),
}

#[derive(Debug, Clone, Deserialize)]
struct RawNetwork {
    alpha: f64,
    theta: f64,
    p: f64,
    #[serde(default = "default_ref_loss")]
    ref_loss: f64,
}

fn default_ref_loss() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
struct RawTier {
    power_dbm: f64,
    density: f64,
    bias: f64,
}

#[derive(Debug, Clone, Deserialize)]
struct RawTraffic {
    lambda_u: f64,
    xi_min: f64,
    xi_max: f64,
    beta_min: f64,
    beta_max: f64,
}

/// Grids for the emitted curves.
#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct OutputSpec {
    /// Delay CDF grid: 1, 1 + step, ..., up to t_max slots.
    pub delay_t_max: f64,
    pub delay_t_step: f64,
    /// Success CDF grid: `success_points` values evenly inside (0, 1).
    pub success_points: usize,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            delay_t_max: 60.0,
            delay_t_step: 1.0,
            success_points: 49,
        }
    }
}

impl OutputSpec {
    pub fn delay_grid(&self) -> Vec<f64> {
        let mut grid = Vec::new();
        let mut t = 1.0;
        while t <= self.delay_t_max + 1e-9 {
            grid.push(t);
            t += self.delay_t_step;
        }
        grid
    }

    pub fn success_grid(&self) -> Vec<f64> {
        let n = self.success_points.max(1);
        (1..=n).map(|i| i as f64 / (n + 1) as f64).collect()
    }
}

/// Parsed but not yet validated configuration; sweeps mutate this form.
#[derive(Debug, Clone, Deserialize)]
pub struct RawConfig {
    network: RawNetwork,
    tier: BTreeMap<String, RawTier>,
    traffic: RawTraffic,
    simulation: Option<SimConfig>,
    quadrature: Option<QuadratureSpec>,
    series: Option<SeriesSpec>,
    output: Option<OutputSpec>,
}

/// Validated configuration ready for the engines.
#[derive(Debug, Clone)]
pub struct Config {
    pub params: NetworkParams,
    pub sim: Option<SimConfig>,
    pub quad: QuadratureSpec,
    pub series: SeriesSpec,
    pub output: OutputSpec,
}

impl RawConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    fn ordered_tiers(&self) -> Result<Vec<&RawTier>, ConfigError> {
        if self.tier.is_empty() {
            return Err(ConfigError::NoTiers);
        }
        let mut indexed: Vec<(usize, &RawTier)> = Vec::with_capacity(self.tier.len());
        for (key, tier) in &self.tier {
            let idx: usize = key
                .parse()
                .map_err(|_| ConfigError::BadTierKey(key.clone()))?;
            if idx == 0 {
                return Err(ConfigError::BadTierKey(key.clone()));
            }
            indexed.push((idx, tier));
        }
        indexed.sort_by_key(|(i, _)| *i);
        for (pos, (idx, _)) in indexed.iter().enumerate() {
            if *idx != pos + 1 {
                return Err(ConfigError::MissingTier(pos + 1));
            }
        }
        Ok(indexed.into_iter().map(|(_, t)| t).collect())
    }

    /// Validate and convert into engine-ready types (dBm to mW here).
    pub fn build(&self) -> Result<Config, ConfigError> {
        let tiers: Vec<TierSpec> = self
            .ordered_tiers()?
            .into_iter()
            .map(|t| TierSpec {
                power_mw: dbm_to_mw(t.power_dbm),
                density: t.density,
                bias: t.bias,
            })
            .collect();
        let params = NetworkParams::new(
            tiers,
            self.network.alpha,
            self.network.ref_loss,
            self.network.theta,
            self.network.p,
            self.traffic.lambda_u,
            (self.traffic.xi_min, self.traffic.xi_max),
            (self.traffic.beta_min, self.traffic.beta_max),
        )?;
        if let Some(sim) = &self.simulation {
            sim.validate()?;
        }
        Ok(Config {
            params,
            sim: self.simulation,
            quad: self.quadrature.unwrap_or_default(),
            series: self.series.unwrap_or_default(),
            output: self.output.clone().unwrap_or_default(),
        })
    }

    /// Override the master seed (CLI flag).
    pub fn set_seed(&mut self, seed: u64) {
        if let Some(sim) = &mut self.simulation {
            sim.seed = seed;
        }
    }

    /// Set a sweepable scalar field by dotted name: `p`, `theta`, `alpha`,
    /// `lambda_u`, `xi_min`, `xi_max`, `beta_min`, `beta_max`, or
    /// `tier.<k>.bias` / `tier.<k>.power_dbm` / `tier.<k>.density`.
    pub fn set_field(&mut self, name: &str, value: f64) -> Result<(), ConfigError> {
        match name {
            "p" => self.network.p = value,
            "theta" => self.network.theta = value,
            "alpha" => self.network.alpha = value,
            "lambda_u" => self.traffic.lambda_u = value,
            "xi_min" => self.traffic.xi_min = value,
            "xi_max" => self.traffic.xi_max = value,
            "beta_min" => self.traffic.beta_min = value,
            "beta_max" => self.traffic.beta_max = value,
            _ => {
                let parts: Vec<&str> = name.split('.').collect();
                if parts.len() == 3 && parts[0] == "tier" {
                    let tier = self
                        .tier
                        .get_mut(parts[1])
                        .ok_or_else(|| ConfigError::FieldNotApplicable(name.to_string()))?;
                    match parts[2] {
                        "bias" => tier.bias = value,
                        "power_dbm" => tier.power_dbm = value,
                        "density" => tier.density = value,
                        _ => return Err(ConfigError::UnknownField(name.to_string())),
                    }
                } else {
                    return Err(ConfigError::UnknownField(name.to_string()));
                }
            }
        }
        Ok(())
    }
}
