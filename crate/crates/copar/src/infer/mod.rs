//! Posterior evaluation, sampling, and identifiability diagnostics.

mod diagnostics;
mod nuts;
mod params;
mod posterior;
mod ppo;

pub use diagnostics::{effective_sample_size, gelman_rubin, param_stats, quantile, DiagValue, ParamStats};
pub use nuts::{sample, PosteriorDraws, SamplerConfig};
pub use params::{ParamLayout, HYPER_NAMES, LOCATION_NAMES, SIGMA_NAMES};
pub use posterior::{grad_log_posterior, log_posterior, Posterior, PriorSpec};
pub use ppo::{prior_posterior_overlap, PpoResult, WEAK_IDENTIFIABILITY_THRESHOLD};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum InferError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid prior: {0}")]
    InvalidPrior(String),
    #[error("invalid sampler config: {0}")]
    InvalidConfig(String),
    #[error("log posterior is not finite at the supplied point")]
    NonFiniteDensity,
    #[error("unknown parameter {0:?}")]
    UnknownParameter(String),
    #[error("need at least {need} chains, got {got}")]
    TooFewChains { need: usize, got: usize },
    #[error("need at least {need} draws, got {got}")]
    TooFewDraws { need: usize, got: usize },
    #[error("no prior is defined for parameter {0:?}")]
    NoPriorFor(String),
    #[error("chain {chain}: {divergent} of {total} post-warmup transitions diverged")]
    TooManyDivergences {
        chain: usize,
        divergent: usize,
        total: usize,
    },
    #[error("degenerate likelihood: {0}")]
    DegenerateLikelihood(String),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}
