//! Generative model for grouped count series coupled to an auxiliary series.
//!
//! Each group's abundance is a conditionally Poisson count whose log mean is a
//! linear function of the group's own lagged count, the lagged total of the
//! other groups, and the lagged auxiliary count. The auxiliary series is a
//! conditionally Poisson count driven by its own lag and the lagged group
//! total. Group coefficients are Gaussian random effects around population
//! level means. An optional formation/splitting indicator lets a group emerge
//! once and, after it returns to zero, pins it at zero forever.

mod csv;
mod poisson;

pub use csv::{parse_panel_csv, write_panel_csv};
pub(crate) use poisson::sample_poisson;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Reserved RNG stream for the auxiliary series (groups use streams `0..g`).
const STREAM_AUX: u64 = u64::MAX;
/// Reserved RNG stream for random-effect draws.
const STREAM_EFFECTS: u64 = u64::MAX - 1;

pub const DEFAULT_X0: u64 = 5;
pub const DEFAULT_Y0: u64 = 50;

/// Default guard on a single-step Poisson intensity, `exp(30)`.
pub fn default_intensity_cap() -> f64 {
    30f64.exp()
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperParams(String),
    #[error("invalid group effects: {0}")]
    InvalidEffects(String),
    #[error("invalid panel: {0}")]
    InvalidPanel(String),
    #[error("invalid simulation config: {0}")]
    InvalidSimConfig(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("intensity explosion in {series} at step {step}: mean {intensity:.3e} exceeds cap {cap:.3e}")]
    IntensityExplosion {
        series: SeriesId,
        step: usize,
        intensity: f64,
        cap: f64,
    },
    #[error("panel csv, line {line}: {message}")]
    PanelCsv { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesId {
    Group(usize),
    Auxiliary,
}

impl std::fmt::Display for SeriesId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SeriesId::Group(i) => write!(f, "group {}", i + 1),
            SeriesId::Auxiliary => write!(f, "auxiliary series"),
        }
    }
}

/// Population-level parameters: random-effect means and SDs for the group
/// coefficients, plus the auxiliary-series intercept, autoregression, and
/// cross-coupling coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
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

impl HyperParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let fields = [
            ("mu_omega", self.mu_omega),
            ("mu_lambda", self.mu_lambda),
            ("mu_psi", self.mu_psi),
            ("mu_delta", self.mu_delta),
            ("omega_Y", self.omega_y),
            ("lambda_Y", self.lambda_y),
            ("gamma", self.gamma),
        ];
        for (name, value) in fields {
            if !value.is_finite() {
                return Err(ModelError::InvalidHyperParams(format!(
                    "{name} must be finite, got {value}"
                )));
            }
        }
        for (name, value) in self.sigmas() {
            if !(value.is_finite() && value > 0.0) {
                return Err(ModelError::InvalidHyperParams(format!(
                    "{name} must be strictly positive, got {value}"
                )));
            }
        }
        Ok(())
    }

    fn sigmas(&self) -> [(&'static str, f64); 4] {
        [
            ("sigma_omega", self.sigma_omega),
            ("sigma_lambda", self.sigma_lambda),
            ("sigma_psi", self.sigma_psi),
            ("sigma_delta", self.sigma_delta),
        ]
    }
}

/// Coefficients of a single group's log intensity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupCoeffs {
    pub omega: f64,
    pub lambda: f64,
    pub psi: f64,
    pub delta: f64,
}

/// Realized random effects for every group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEffects {
    pub omega_x: Vec<f64>,
    pub lambda_x: Vec<f64>,
    pub psi: Vec<f64>,
    pub delta: Vec<f64>,
}

impl GroupEffects {
    pub fn new(
        omega_x: Vec<f64>,
        lambda_x: Vec<f64>,
        psi: Vec<f64>,
        delta: Vec<f64>,
    ) -> Result<Self, ModelError> {
        let g = omega_x.len();
        if g < 2 {
            return Err(ModelError::InvalidEffects(format!(
                "need at least 2 groups, got {g}"
            )));
        }
        if lambda_x.len() != g || psi.len() != g || delta.len() != g {
            return Err(ModelError::InvalidEffects(
                "effect vectors have mismatched lengths".into(),
            ));
        }
        Ok(Self {
            omega_x,
            lambda_x,
            psi,
            delta,
        })
    }

    pub fn n_groups(&self) -> usize {
        self.omega_x.len()
    }

    pub fn group(&self, i: usize) -> GroupCoeffs {
        GroupCoeffs {
            omega: self.omega_x[i],
            lambda: self.lambda_x[i],
            psi: self.psi[i],
            delta: self.delta[i],
        }
    }
}

/// Draw per-group random effects from their population-level Gaussian laws.
/// Deterministic given `seed`.
pub fn draw_group_effects(
    hyper: &HyperParams,
    g: usize,
    seed: u64,
) -> Result<GroupEffects, ModelError> {
    hyper.validate()?;
    if g < 2 {
        return Err(ModelError::InvalidEffects(format!(
            "need at least 2 groups, got {g}"
        )));
    }
    let mut rng = stream_rng(seed, STREAM_EFFECTS);
    let mut draw = |mu: f64, sigma: f64| -> Vec<f64> {
        let normal = Normal::new(mu, sigma).expect("validated sigma");
        (0..g).map(|_| normal.sample(&mut rng)).collect()
    };
    let omega_x = draw(hyper.mu_omega, hyper.sigma_omega);
    let lambda_x = draw(hyper.mu_lambda, hyper.sigma_lambda);
    let psi = draw(hyper.mu_psi, hyper.sigma_psi);
    let delta = draw(hyper.mu_delta, hyper.sigma_delta);
    GroupEffects::new(omega_x, lambda_x, psi, delta)
}

#[inline]
pub(crate) fn ln1p_count(count: u64) -> f64 {
    (count as f64 + 1.0).ln()
}

/// Log intensity of one group's next count given the previous state.
#[inline]
pub fn group_log_intensity(
    coeffs: GroupCoeffs,
    x_prev: u64,
    others_sum_prev: u64,
    y_prev: u64,
) -> f64 {
    coeffs.omega
        + coeffs.lambda * ln1p_count(x_prev)
        + coeffs.psi * ln1p_count(others_sum_prev)
        + coeffs.delta * ln1p_count(y_prev)
}

/// Log intensity of the next auxiliary count given the previous state.
#[inline]
pub fn aux_log_intensity(hyper: &HyperParams, y_prev: u64, group_total_prev: u64) -> f64 {
    hyper.omega_y
        + hyper.lambda_y * ln1p_count(y_prev)
        + hyper.gamma * ln1p_count(group_total_prev)
}

/// How the formation/splitting indicator treats a group at step 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitConvention {
    /// Step 0 counts as "not yet formed": the group may still emerge.
    NotYetFormed,
    /// Step 0 counts as "already formed": a zero history means the group has split.
    AlreadyFormed,
}

/// Formation (`B`) and persistence (`A`) indicators for the step following
/// `history`. `A` is 1 when the group was alive at the last observed step;
/// `B` is 1 when the group has not yet formed so emergence is still possible.
/// At most one of the two is 1.
pub fn formation_indicators(history: &[u64], convention: InitConvention) -> (u8, u8) {
    if history.is_empty() {
        return match convention {
            InitConvention::NotYetFormed => (0, 1),
            InitConvention::AlreadyFormed => (1, 0),
        };
    }
    let alive = history[history.len() - 1] > 0;
    let formed = matches!(convention, InitConvention::AlreadyFormed)
        || history.iter().any(|&count| count > 0);
    (u8::from(alive), u8::from(!formed))
}

/// Formation/splitting factor for the step following `history`: 1 while the
/// group is alive or may still form, 0 forever once it has split.
pub fn formation_factor(history: &[u64], convention: InitConvention) -> u8 {
    let (a, b) = formation_indicators(history, convention);
    a + b
}

/// Aligned group-by-step and auxiliary count series. Rows of `x` are groups,
/// columns are steps `0..=T`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Panel {
    x: Vec<Vec<u64>>,
    y: Vec<u64>,
    group_labels: Option<Vec<String>>,
}

impl Panel {
    pub fn new(
        x: Vec<Vec<u64>>,
        y: Vec<u64>,
        group_labels: Option<Vec<String>>,
    ) -> Result<Self, ModelError> {
        let g = x.len();
        if g < 2 {
            return Err(ModelError::InvalidPanel(format!(
                "need at least 2 groups, got {g}"
            )));
        }
        let steps = y.len();
        if steps < 1 {
            return Err(ModelError::InvalidPanel("empty time range".into()));
        }
        for (i, row) in x.iter().enumerate() {
            if row.len() != steps {
                return Err(ModelError::InvalidPanel(format!(
                    "group {} has {} steps, auxiliary series has {}",
                    i + 1,
                    row.len(),
                    steps
                )));
            }
        }
        if let Some(labels) = &group_labels {
            if labels.len() != g {
                return Err(ModelError::InvalidPanel(format!(
                    "{} labels for {} groups",
                    labels.len(),
                    g
                )));
            }
        }
        Ok(Self { x, y, group_labels })
    }

    pub fn n_groups(&self) -> usize {
        self.x.len()
    }

    /// Number of observed steps, `T + 1`.
    pub fn n_steps(&self) -> usize {
        self.y.len()
    }

    /// The horizon `T`; the modeled transitions are `1..=T`.
    pub fn horizon(&self) -> usize {
        self.y.len() - 1
    }

    #[inline]
    pub fn x(&self, group: usize, step: usize) -> u64 {
        self.x[group][step]
    }

    #[inline]
    pub fn y(&self, step: usize) -> u64 {
        self.y[step]
    }

    pub fn x_row(&self, group: usize) -> &[u64] {
        &self.x[group]
    }

    pub fn y_series(&self) -> &[u64] {
        &self.y
    }

    pub fn group_labels(&self) -> Option<&[String]> {
        self.group_labels.as_deref()
    }

    pub fn group_total(&self, step: usize) -> u64 {
        self.x.iter().map(|row| row[step]).sum()
    }

    /// Steps at which a group is positive again after having split, i.e.
    /// violations of the "one contiguous positive run" structure assumed by
    /// the splitting model. Returns `(group, step)` pairs.
    pub fn interval_violations(&self) -> Vec<(usize, usize)> {
        let mut violations = Vec::new();
        for (i, row) in self.x.iter().enumerate() {
            let mut formed = false;
            let mut split = false;
            for (t, &count) in row.iter().enumerate() {
                if count > 0 {
                    if split {
                        violations.push((i, t));
                    }
                    formed = true;
                } else if formed {
                    split = true;
                }
            }
        }
        violations
    }
}

/// Forward-simulation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub g: usize,
    /// Horizon `T`; the simulated panel has `T + 1` steps.
    pub horizon: usize,
    pub x0: Vec<u64>,
    pub y0: u64,
    pub seed: u64,
    pub splitting_enabled: bool,
    pub init_convention: InitConvention,
    pub intensity_cap: f64,
}

impl SimConfig {
    pub fn new(g: usize, horizon: usize, seed: u64) -> Self {
        Self {
            g,
            horizon,
            x0: vec![DEFAULT_X0; g],
            y0: DEFAULT_Y0,
            seed,
            splitting_enabled: false,
            init_convention: InitConvention::NotYetFormed,
            intensity_cap: default_intensity_cap(),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.g < 2 {
            return Err(ModelError::InvalidSimConfig(format!(
                "need at least 2 groups, got {}",
                self.g
            )));
        }
        if self.horizon < 1 {
            return Err(ModelError::InvalidSimConfig("horizon must be >= 1".into()));
        }
        if self.x0.len() != self.g {
            return Err(ModelError::InvalidSimConfig(format!(
                "x0 has length {}, expected {}",
                self.x0.len(),
                self.g
            )));
        }
        if !(self.intensity_cap.is_finite() && self.intensity_cap > 0.0) {
            return Err(ModelError::InvalidSimConfig(format!(
                "intensity cap must be positive, got {}",
                self.intensity_cap
            )));
        }
        Ok(())
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stepwise simulation state. Each group and the auxiliary series consume
/// their own RNG stream so extending the horizon never perturbs earlier draws.
#[derive(Debug, Clone)]
pub(crate) struct SimEngine<'a> {
    hyper: &'a HyperParams,
    effects: &'a GroupEffects,
    cfg: &'a SimConfig,
    x: Vec<Vec<u64>>,
    y: Vec<u64>,
    group_rngs: Vec<ChaCha12Rng>,
    aux_rng: ChaCha12Rng,
}

impl<'a> SimEngine<'a> {
    pub(crate) fn new(
        hyper: &'a HyperParams,
        effects: &'a GroupEffects,
        cfg: &'a SimConfig,
    ) -> Result<Self, ModelError> {
        cfg.validate()?;
        hyper.validate()?;
        if effects.n_groups() != cfg.g {
            return Err(ModelError::DimensionMismatch(format!(
                "effects describe {} groups, config asks for {}",
                effects.n_groups(),
                cfg.g
            )));
        }
        Ok(Self {
            hyper,
            effects,
            cfg,
            x: cfg.x0.iter().map(|&v| vec![v]).collect(),
            y: vec![cfg.y0],
            group_rngs: (0..cfg.g as u64).map(|i| stream_rng(cfg.seed, i)).collect(),
            aux_rng: stream_rng(cfg.seed, STREAM_AUX),
        })
    }

    pub(crate) fn step(&mut self) -> Result<(), ModelError> {
        let t = self.y.len();
        let total_prev: u64 = self.x.iter().map(|row| row[t - 1]).sum();
        let y_prev = self.y[t - 1];
        for i in 0..self.cfg.g {
            let x_prev = self.x[i][t - 1];
            let factor = if self.cfg.splitting_enabled {
                formation_factor(&self.x[i], self.cfg.init_convention)
            } else {
                1
            };
            let next = if factor == 0 {
                0
            } else {
                let eta = group_log_intensity(
                    self.effects.group(i),
                    x_prev,
                    total_prev - x_prev,
                    y_prev,
                );
                let mean = eta.exp();
                if mean > self.cfg.intensity_cap {
                    return Err(ModelError::IntensityExplosion {
                        series: SeriesId::Group(i),
                        step: t,
                        intensity: mean,
                        cap: self.cfg.intensity_cap,
                    });
                }
                sample_poisson(&mut self.group_rngs[i], mean)
            };
            self.x[i].push(next);
        }
        let mean_y = aux_log_intensity(self.hyper, y_prev, total_prev).exp();
        if mean_y > self.cfg.intensity_cap {
            return Err(ModelError::IntensityExplosion {
                series: SeriesId::Auxiliary,
                step: t,
                intensity: mean_y,
                cap: self.cfg.intensity_cap,
            });
        }
        self.y.push(sample_poisson(&mut self.aux_rng, mean_y));
        Ok(())
    }

    pub(crate) fn into_panel(self) -> Panel {
        Panel {
            x: self.x,
            y: self.y,
            group_labels: None,
        }
    }
}

/// Simulate a panel forward from step 0. Deterministic given `cfg.seed`.
pub fn simulate_panel(
    hyper: &HyperParams,
    effects: &GroupEffects,
    cfg: &SimConfig,
) -> Result<Panel, ModelError> {
    let mut engine = SimEngine::new(hyper, effects, cfg)?;
    for _ in 0..cfg.horizon {
        engine.step()?;
    }
    Ok(engine.into_panel())
}

#[cfg(test)]
mod tests;
