//! TOML run configuration. Every value has a built-in default; file values
//! override defaults and command-line flags override the file.

use std::path::Path;

use copar::infer::{PriorSpec, SamplerConfig};
use copar::model::{default_intensity_cap, HyperParams, InitConvention, SimConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub hyper: Option<HyperSection>,
    pub simulate: Option<SimulateSection>,
    pub sampler: Option<SamplerSection>,
    pub prior: Option<PriorSection>,
    pub fit: Option<FitSection>,
    pub scenario: Option<ScenarioSection>,
    pub correlate: Option<CorrelateSection>,
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct HyperSection {
    pub mu_omega: f64,
    pub mu_lambda: f64,
    pub mu_psi: f64,
    pub mu_delta: f64,
    pub sigma_omega: f64,
    pub sigma_lambda: f64,
    pub sigma_psi: f64,
    pub sigma_delta: f64,
    pub omega_y: f64,
    pub lambda_y: f64,
    pub gamma: f64,
}

impl From<HyperSection> for HyperParams {
    fn from(h: HyperSection) -> Self {
        HyperParams {
            mu_omega: h.mu_omega,
            mu_lambda: h.mu_lambda,
            mu_psi: h.mu_psi,
            mu_delta: h.mu_delta,
            sigma_omega: h.sigma_omega,
            sigma_lambda: h.sigma_lambda,
            sigma_psi: h.sigma_psi,
            sigma_delta: h.sigma_delta,
            omega_y: h.omega_y,
            lambda_y: h.lambda_y,
            gamma: h.gamma,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum InitialCounts {
    Fill(u64),
    Each(Vec<u64>),
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub g: Option<usize>,
    pub horizon: Option<usize>,
    pub x0: Option<InitialCounts>,
    pub y0: Option<u64>,
    pub splitting: Option<bool>,
    pub init_convention: Option<InitConvention>,
    pub intensity_cap: Option<f64>,
}

#[derive(Debug, Default, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    pub chains: Option<usize>,
    pub iterations: Option<usize>,
    pub burnin: Option<usize>,
    pub thin: Option<usize>,
    pub target_accept: Option<f64>,
    pub max_tree_depth: Option<usize>,
}

#[derive(Debug, Default, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    pub gaussian_sd_mu: Option<f64>,
    pub halfgaussian_sd_sigma: Option<f64>,
}

#[derive(Debug, Default, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    pub splitting: Option<bool>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub id: Option<String>,
    pub replicates: Option<usize>,
    pub full: Option<bool>,
}

#[derive(Debug, Default, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelateSection {
    pub tolerance: Option<f64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    CliError::validation(format!("reading config {}: {e}", path.display()))
                })?;
                toml::from_str(&text).map_err(|e| {
                    CliError::validation(format!("parsing config {}: {e}", path.display()))
                })
            }
        }
    }

    /// Simulation defaults follow the small built-in study design: 10 groups
    /// over 20 steps at the shared scenario parameter block.
    pub fn sim_config(&self, seed: u64) -> Result<SimConfig, CliError> {
        let section = self.simulate.clone().unwrap_or_default();
        let g = section.g.unwrap_or(10);
        let horizon = section.horizon.unwrap_or(20);
        let x0 = match section.x0 {
            None => vec![copar::model::DEFAULT_X0; g],
            Some(InitialCounts::Fill(v)) => vec![v; g],
            Some(InitialCounts::Each(values)) => values,
        };
        Ok(SimConfig {
            g,
            horizon,
            x0,
            y0: section.y0.unwrap_or(copar::model::DEFAULT_Y0),
            seed,
            splitting_enabled: section.splitting.unwrap_or(false),
            init_convention: section
                .init_convention
                .unwrap_or(InitConvention::NotYetFormed),
            intensity_cap: section.intensity_cap.unwrap_or_else(default_intensity_cap),
        })
    }

    pub fn hyper(&self) -> HyperParams {
        match self.hyper {
            Some(section) => section.into(),
            None => HyperParams {
                mu_omega: 0.9,
                mu_lambda: 0.06,
                mu_psi: -0.5,
                mu_delta: 0.2,
                sigma_omega: 0.2,
                sigma_lambda: 0.2,
                sigma_psi: 0.04,
                sigma_delta: 0.04,
                omega_y: 0.9,
                lambda_y: 0.9,
                gamma: -0.05,
            },
        }
    }

    pub fn sampler(&self, seed: u64, fast: bool) -> SamplerConfig {
        let mut cfg = if fast {
            SamplerConfig::fast(seed)
        } else {
            SamplerConfig::new(20_000, 2_000, 20, seed)
        };
        if let Some(section) = self.sampler {
            if let Some(chains) = section.chains {
                cfg.n_chains = chains;
            }
            if let Some(iterations) = section.iterations {
                cfg.n_iterations = iterations;
            }
            if let Some(burnin) = section.burnin {
                cfg.burnin = burnin;
            }
            if let Some(thin) = section.thin {
                cfg.thin = thin;
            }
            if let Some(target) = section.target_accept {
                cfg.target_accept = target;
            }
            if let Some(depth) = section.max_tree_depth {
                cfg.max_tree_depth = depth;
            }
        }
        cfg
    }

    pub fn prior(&self) -> PriorSpec {
        let mut prior = PriorSpec::default();
        if let Some(section) = self.prior {
            if let Some(sd) = section.gaussian_sd_mu {
                prior.gaussian_sd_mu = sd;
            }
            if let Some(sd) = section.halfgaussian_sd_sigma {
                prior.halfgaussian_sd_sigma = sd;
            }
        }
        prior
    }
}
