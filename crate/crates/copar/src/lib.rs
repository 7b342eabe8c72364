//! Simulation and Bayesian inference for coupled Poisson autoregressions of
//! grouped populations interacting with an auxiliary population.
//!
//! - [`model`]: the generative model, formation/splitting variant, and
//!   forward simulation.
//! - [`infer`]: hand-coded log posterior with analytic gradients, a dynamic
//!   path-length Hamiltonian sampler, convergence diagnostics, and the
//!   prior-posterior overlap identifiability check.
//! - [`corr`]: closed-form approximation to the net group correlation with
//!   per-group consistency checks and the coupling-plane sign classifier.
//! - [`simstudy`]: scenario definitions and the simulate/fit/summarize sweep
//!   with RMSE and bias metrics.
//! - [`ingest`]: long-format dataset loading with formation/splitting
//!   indicator tracks.

pub mod corr;
pub mod infer;
pub mod ingest;
pub mod model;
pub mod simstudy;

pub use model::{
    aux_log_intensity, draw_group_effects, formation_factor, formation_indicators,
    group_log_intensity, parse_panel_csv, simulate_panel, write_panel_csv, GroupCoeffs,
    GroupEffects, HyperParams, InitConvention, ModelError, Panel, SimConfig,
};
