//! Scenario sweeps: simulate a panel from known truth, fit it, and score the
//! point estimates with RMSE, bias, and relative bias across replicates.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::infer::{
    effective_sample_size, gelman_rubin, param_stats, sample, InferError, PosteriorDraws,
    PriorSpec, SamplerConfig, HYPER_NAMES,
};
use crate::model::{draw_group_effects, simulate_panel, HyperParams, ModelError, SimConfig};

/// Convergence gate: a replicate only enters the metrics when every
/// population-level parameter has a scale reduction factor at or below this.
pub const RHAT_GATE: f64 = 1.1;

/// Parameters whose pairwise draws are exported for confounding checks.
pub const CONFOUNDING_PARAMS: [&str; 4] = ["omega_Y", "lambda_Y", "mu_psi", "mu_delta"];

#[derive(Debug, Error)]
pub enum SimStudyError {
    #[error("empty estimate vector")]
    EmptyEstimates,
    #[error("relative bias is undefined for truth = 0")]
    ZeroTruth,
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("all {failed} replicates failed; first failure: {first}")]
    AllReplicatesFailed { failed: usize, first: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Infer(#[from] InferError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ScenarioId {
    S1,
    S2,
    S3,
    S4,
    S5,
    Custom,
}

impl std::str::FromStr for ScenarioId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_uppercase().as_str() {
            "S1" => Ok(Self::S1),
            "S2" => Ok(Self::S2),
            "S3" => Ok(Self::S3),
            "S4" => Ok(Self::S4),
            "S5" => Ok(Self::S5),
            "CUSTOM" => Ok(Self::Custom),
            other => Err(format!("unknown scenario {other:?}")),
        }
    }
}

impl std::fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Self::S1 => "S1",
            Self::S2 => "S2",
            Self::S3 => "S3",
            Self::S4 => "S4",
            Self::S5 => "S5",
            Self::Custom => "custom",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Scenario {
    pub id: ScenarioId,
    pub g: usize,
    pub horizon: usize,
    pub truth: HyperParams,
    pub n_replicates: usize,
    pub sampler: SamplerConfig,
}

fn shared_truth(mu_psi: f64, mu_delta: f64, gamma: f64) -> HyperParams {
    HyperParams {
        mu_omega: 0.9,
        mu_lambda: 0.06,
        mu_psi,
        mu_delta,
        sigma_omega: 0.2,
        sigma_lambda: 0.2,
        sigma_psi: 0.04,
        sigma_delta: 0.04,
        omega_y: 0.9,
        lambda_y: 0.9,
        gamma,
    }
}

impl Scenario {
    /// The built-in scenario at its full study protocol: 100 replicates,
    /// 20000 iterations with burn-in 2000 and thinning 20 (doubled for the
    /// large design).
    pub fn builtin(id: ScenarioId) -> Result<Self, SimStudyError> {
        let (g, horizon, truth) = match id {
            ScenarioId::S1 => (10, 20, shared_truth(-0.5, 0.2, -0.05)),
            ScenarioId::S2 => (42, 20, shared_truth(-0.5, 0.2, -0.05)),
            ScenarioId::S3 => (50, 50, shared_truth(-0.5, 0.2, -0.05)),
            ScenarioId::S4 => (42, 20, shared_truth(0.15, 0.15, -0.15)),
            ScenarioId::S5 => (42, 20, shared_truth(-0.05, -0.05, 0.05)),
            ScenarioId::Custom => {
                return Err(SimStudyError::InvalidScenario(
                    "custom scenarios must be constructed explicitly".into(),
                ))
            }
        };
        let sampler = if matches!(id, ScenarioId::S3) {
            SamplerConfig::new(40_000, 4_000, 40, 0)
        } else {
            SamplerConfig::new(20_000, 2_000, 20, 0)
        };
        Ok(Self {
            id,
            g,
            horizon,
            truth,
            n_replicates: 100,
            sampler,
        })
    }

    /// The built-in scenario at the desk-scale budget: 20 replicates and the
    /// fast sampler preset.
    pub fn fast(id: ScenarioId) -> Result<Self, SimStudyError> {
        let mut scenario = Self::builtin(id)?;
        scenario.n_replicates = 20;
        scenario.sampler = SamplerConfig::fast(0);
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<(), SimStudyError> {
        if self.g < 2 {
            return Err(SimStudyError::InvalidScenario(format!(
                "need at least 2 groups, got {}",
                self.g
            )));
        }
        if self.horizon < 1 {
            return Err(SimStudyError::InvalidScenario("horizon must be >= 1".into()));
        }
        if self.n_replicates == 0 {
            return Err(SimStudyError::InvalidScenario(
                "need at least one replicate".into(),
            ));
        }
        self.truth.validate()?;
        self.sampler.validate()?;
        Ok(())
    }
}

/// Root mean square deviation of the estimates from the truth.
pub fn rmse(estimates: &[f64], truth: f64) -> Result<f64, SimStudyError> {
    if estimates.is_empty() {
        return Err(SimStudyError::EmptyEstimates);
    }
    let mean_sq = estimates
        .iter()
        .map(|&e| (e - truth).powi(2))
        .sum::<f64>()
        / estimates.len() as f64;
    Ok(mean_sq.sqrt())
}

pub fn bias(estimate: f64, truth: f64) -> f64 {
    estimate - truth
}

pub fn relative_bias(estimate: f64, truth: f64) -> Result<f64, SimStudyError> {
    if truth == 0.0 {
        return Err(SimStudyError::ZeroTruth);
    }
    Ok(bias(estimate, truth) / truth)
}

/// Value of a population-level parameter by report name.
pub fn hyper_value(hyper: &HyperParams, name: &str) -> f64 {
    match name {
        "omega_Y" => hyper.omega_y,
        "lambda_Y" => hyper.lambda_y,
        "gamma" => hyper.gamma,
        "mu_omega" => hyper.mu_omega,
        "mu_lambda" => hyper.mu_lambda,
        "mu_psi" => hyper.mu_psi,
        "mu_delta" => hyper.mu_delta,
        "sigma_omega" => hyper.sigma_omega,
        "sigma_lambda" => hyper.sigma_lambda,
        "sigma_psi" => hyper.sigma_psi,
        "sigma_delta" => hyper.sigma_delta,
        other => panic!("unknown hyperparameter {other:?}"),
    }
}

/// Point estimates for the eleven population-level parameters of one
/// replicate, ordered as [`HYPER_NAMES`].
#[derive(Debug, Clone, Serialize)]
pub struct PointEstimates {
    pub replicate: usize,
    pub posterior_mean: Vec<f64>,
    pub posterior_median: Vec<f64>,
}

impl PointEstimates {
    pub fn from_draws(replicate: usize, draws: &PosteriorDraws) -> Self {
        let mut posterior_mean = Vec::with_capacity(HYPER_NAMES.len());
        let mut posterior_median = Vec::with_capacity(HYPER_NAMES.len());
        for name in HYPER_NAMES {
            let idx = draws.index_of(name).expect("hyperparameter column");
            let stats = param_stats(draws, idx);
            posterior_mean.push(stats.mean);
            posterior_median.push(stats.median);
        }
        Self {
            replicate,
            posterior_mean,
            posterior_median,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ParamMetrics {
    pub name: String,
    pub truth: f64,
    pub rmse: f64,
    pub median_bias: f64,
    /// Absent when the truth is zero.
    pub median_relative_bias: Option<f64>,
    pub bias_samples: Vec<f64>,
    pub relative_bias_samples: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExcludedReplicate {
    pub replicate: usize,
    pub reason: String,
}

/// Pooled draws of the confounding focus parameters for one replicate,
/// row-per-draw in [`CONFOUNDING_PARAMS`] order.
#[derive(Debug, Clone)]
pub struct ConfoundingDraws {
    pub replicate: usize,
    pub rows: Vec<[f64; 4]>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub master_seed: u64,
    pub n_replicates: usize,
    pub included: usize,
    pub excluded: Vec<ExcludedReplicate>,
    pub replicate_seeds: Vec<u64>,
    pub params: Vec<ParamMetrics>,
    pub estimates: Vec<PointEstimates>,
    #[serde(skip)]
    pub confounding: Vec<ConfoundingDraws>,
}

fn median(values: &[f64]) -> f64 {
    crate::infer::quantile(values, 0.5)
}

/// Score point estimates against the truth. Exposed separately so metrics
/// can be checked with hand-built estimates.
pub fn aggregate_metrics(
    truth: &HyperParams,
    estimates: &[PointEstimates],
) -> Result<Vec<ParamMetrics>, SimStudyError> {
    if estimates.is_empty() {
        return Err(SimStudyError::EmptyEstimates);
    }
    let mut params = Vec::with_capacity(HYPER_NAMES.len());
    for (k, name) in HYPER_NAMES.iter().enumerate() {
        let truth_value = hyper_value(truth, name);
        let means: Vec<f64> = estimates.iter().map(|e| e.posterior_mean[k]).collect();
        let bias_samples: Vec<f64> = means.iter().map(|&m| bias(m, truth_value)).collect();
        let relative = if truth_value == 0.0 {
            None
        } else {
            Some(bias_samples.iter().map(|&b| b / truth_value).collect::<Vec<f64>>())
        };
        params.push(ParamMetrics {
            name: name.to_string(),
            truth: truth_value,
            rmse: rmse(&means, truth_value)?,
            median_bias: median(&bias_samples),
            median_relative_bias: relative.as_deref().map(median),
            bias_samples,
            relative_bias_samples: relative,
        });
    }
    Ok(params)
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index))
}

enum ReplicateOutcome {
    Converged {
        estimates: PointEstimates,
        confounding: ConfoundingDraws,
    },
    Excluded(ExcludedReplicate),
}

fn run_replicate(scenario: &Scenario, replicate: usize, seed: u64) -> ReplicateOutcome {
    let excluded = |reason: String| {
        ReplicateOutcome::Excluded(ExcludedReplicate { replicate, reason })
    };
    let effects = match draw_group_effects(&scenario.truth, scenario.g, derive_seed(seed, 0)) {
        Ok(effects) => effects,
        Err(err) => return excluded(format!("effect draw failed: {err}")),
    };
    let mut sim_cfg = SimConfig::new(scenario.g, scenario.horizon, derive_seed(seed, 1));
    sim_cfg.splitting_enabled = false;
    let panel = match simulate_panel(&scenario.truth, &effects, &sim_cfg) {
        Ok(panel) => panel,
        Err(err) => return excluded(format!("simulation failed: {err}")),
    };
    let mut sampler = scenario.sampler;
    sampler.seed = derive_seed(seed, 2);
    let prior = PriorSpec::default();
    let draws = match sample(&panel, &prior, &sampler, false) {
        Ok(draws) => draws,
        Err(err) => return excluded(format!("sampler failed: {err}")),
    };
    for name in HYPER_NAMES {
        match gelman_rubin(&draws, name) {
            Ok(diag) if diag.value <= RHAT_GATE && !diag.degenerate => {}
            Ok(diag) => {
                return excluded(format!(
                    "convergence gate: rhat({name}) = {:.4}{}",
                    diag.value,
                    if diag.degenerate { " (degenerate)" } else { "" }
                ))
            }
            Err(err) => return excluded(format!("diagnostics failed: {err}")),
        }
        if let Err(err) = effective_sample_size(&draws, name) {
            return excluded(format!("diagnostics failed: {err}"));
        }
    }
    let focus: Vec<usize> = CONFOUNDING_PARAMS
        .iter()
        .map(|name| draws.index_of(name).expect("focus column"))
        .collect();
    let pooled: Vec<Vec<f64>> = focus.iter().map(|&idx| draws.pooled(idx)).collect();
    let rows = (0..pooled[0].len())
        .map(|row| [pooled[0][row], pooled[1][row], pooled[2][row], pooled[3][row]])
        .collect();
    ReplicateOutcome::Converged {
        estimates: PointEstimates::from_draws(replicate, &draws),
        confounding: ConfoundingDraws { replicate, rows },
    }
}

/// Run the full simulate/fit/score sweep for a scenario. Replicates use
/// independent derived seeds and run in parallel; failed or non-converged
/// replicates are excluded from the metrics and reported.
pub fn run_scenario(scenario: &Scenario, master_seed: u64) -> Result<MetricsReport, SimStudyError> {
    scenario.validate()?;
    let seeds: Vec<u64> = (0..scenario.n_replicates)
        .map(|r| derive_seed(master_seed, r as u64))
        .collect();
    let outcomes: Vec<ReplicateOutcome> = seeds
        .par_iter()
        .enumerate()
        .map(|(replicate, &seed)| run_replicate(scenario, replicate, seed))
        .collect();

    let mut estimates = Vec::new();
    let mut confounding = Vec::new();
    let mut excluded = Vec::new();
    for outcome in outcomes {
        match outcome {
            ReplicateOutcome::Converged {
                estimates: e,
                confounding: c,
            } => {
                estimates.push(e);
                confounding.push(c);
            }
            ReplicateOutcome::Excluded(x) => excluded.push(x),
        }
    }
    if estimates.is_empty() {
        return Err(SimStudyError::AllReplicatesFailed {
            failed: excluded.len(),
            first: excluded
                .first()
                .map(|x| x.reason.clone())
                .unwrap_or_default(),
        });
    }
    let params = aggregate_metrics(&scenario.truth, &estimates)?;
    Ok(MetricsReport {
        scenario: scenario.id.to_string(),
        master_seed,
        n_replicates: scenario.n_replicates,
        included: estimates.len(),
        excluded,
        replicate_seeds: seeds,
        params,
        estimates,
        confounding,
    })
}

#[cfg(test)]
mod tests;
