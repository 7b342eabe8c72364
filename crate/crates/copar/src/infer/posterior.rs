//! Log posterior and its analytic gradient on the unconstrained scale.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::params::*;
use super::InferError;
use crate::model::{formation_factor, InitConvention, Panel};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Independent priors: zero-mean Gaussians on the location parameters and
/// half-Gaussians on the random-effect SDs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub gaussian_sd_mu: f64,
    pub halfgaussian_sd_sigma: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            gaussian_sd_mu: 100.0,
            halfgaussian_sd_sigma: 100.0,
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<(), InferError> {
        if !(self.gaussian_sd_mu.is_finite() && self.gaussian_sd_mu > 0.0) {
            return Err(InferError::InvalidPrior(format!(
                "gaussian_sd_mu must be positive, got {}",
                self.gaussian_sd_mu
            )));
        }
        if !(self.halfgaussian_sd_sigma.is_finite() && self.halfgaussian_sd_sigma > 0.0) {
            return Err(InferError::InvalidPrior(format!(
                "halfgaussian_sd_sigma must be positive, got {}",
                self.halfgaussian_sd_sigma
            )));
        }
        Ok(())
    }
}

/// A panel bound to a prior and transform layout, with per-observation
/// covariate logs precomputed. Evaluation is pure, so shared references can
/// be used from many chains at once.
pub struct Posterior<'a> {
    panel: &'a Panel,
    prior: PriorSpec,
    layout: ParamLayout,
    horizon: usize,
    // Indexed i * horizon + (t - 1) for the transition into step t.
    own_log: Vec<f64>,
    others_log: Vec<f64>,
    factor: Vec<u8>,
    x_obs: Vec<f64>,
    // Indexed t - 1.
    aux_lag_log: Vec<f64>,
    total_log: Vec<f64>,
    y_obs: Vec<f64>,
    // Sum of ln(k!) over all observations that enter the likelihood.
    lgamma_total: f64,
}

fn ln1p(count: u64) -> f64 {
    (count as f64 + 1.0).ln()
}

impl<'a> Posterior<'a> {
    pub fn new(panel: &'a Panel, prior: PriorSpec, splitting_enabled: bool) -> Result<Self, InferError> {
        prior.validate()?;
        let g = panel.n_groups();
        let horizon = panel.horizon();
        let mut own_log = Vec::with_capacity(g * horizon);
        let mut others_log = Vec::with_capacity(g * horizon);
        let mut factor = Vec::with_capacity(g * horizon);
        let mut x_obs = Vec::with_capacity(g * horizon);
        let mut lgamma_total = 0.0;
        for i in 0..g {
            let row = panel.x_row(i);
            for t in 1..=horizon {
                let total_prev = panel.group_total(t - 1);
                own_log.push(ln1p(row[t - 1]));
                others_log.push(ln1p(total_prev - row[t - 1]));
                let c = if splitting_enabled {
                    formation_factor(&row[..t], InitConvention::NotYetFormed)
                } else {
                    1
                };
                factor.push(c);
                x_obs.push(row[t] as f64);
                if c == 1 {
                    lgamma_total += ln_gamma(row[t] as f64 + 1.0);
                }
            }
        }
        let mut aux_lag_log = Vec::with_capacity(horizon);
        let mut total_log = Vec::with_capacity(horizon);
        let mut y_obs = Vec::with_capacity(horizon);
        for t in 1..=horizon {
            aux_lag_log.push(ln1p(panel.y(t - 1)));
            total_log.push(ln1p(panel.group_total(t - 1)));
            y_obs.push(panel.y(t) as f64);
            lgamma_total += ln_gamma(panel.y(t) as f64 + 1.0);
        }
        Ok(Self {
            panel,
            prior,
            layout: ParamLayout::new(g),
            horizon,
            own_log,
            others_log,
            factor,
            x_obs,
            aux_lag_log,
            total_log,
            y_obs,
            lgamma_total,
        })
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn panel(&self) -> &Panel {
        self.panel
    }

    pub fn prior(&self) -> PriorSpec {
        self.prior
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn check_dim(&self, theta: &[f64]) -> Result<(), InferError> {
        if theta.len() != self.dim() {
            return Err(InferError::DimensionMismatch(format!(
                "theta has length {}, model needs {}",
                theta.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Log posterior density. Impossible data under a pinned-at-zero mean
    /// yields `-inf` rather than an error.
    pub fn log_density(&self, theta: &[f64]) -> Result<f64, InferError> {
        self.check_dim(theta)?;
        Ok(self.log_density_unchecked(theta))
    }

    pub(crate) fn log_density_unchecked(&self, theta: &[f64]) -> f64 {
        let g = self.layout.g();
        let horizon = self.horizon;
        let mut lik = 0.0;
        for i in 0..g {
            let coeffs = self.layout.coeffs_from_unconstrained(theta, i);
            let base = i * horizon;
            for k in 0..horizon {
                let idx = base + k;
                if self.factor[idx] == 0 {
                    if self.x_obs[idx] > 0.0 {
                        return f64::NEG_INFINITY;
                    }
                    continue;
                }
                let eta = coeffs.omega
                    + coeffs.lambda * self.own_log[idx]
                    + coeffs.psi * self.others_log[idx]
                    + coeffs.delta * self.aux_lag_log[k];
                lik += self.x_obs[idx] * eta - eta.exp();
            }
        }
        let omega_y = theta[IDX_OMEGA_Y];
        let lambda_y = theta[IDX_LAMBDA_Y];
        let gamma = theta[IDX_GAMMA];
        for k in 0..horizon {
            let eta = omega_y + lambda_y * self.aux_lag_log[k] + gamma * self.total_log[k];
            lik += self.y_obs[k] * eta - eta.exp();
        }
        lik -= self.lgamma_total;
        lik + self.log_prior(theta)
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        let sd_mu = self.prior.gaussian_sd_mu;
        let sd_sigma = self.prior.halfgaussian_sd_sigma;
        let mut lp = 0.0;
        for &location in &theta[IDX_OMEGA_Y..=IDX_MU_DELTA] {
            lp += -0.5 * (location / sd_mu).powi(2) - sd_mu.ln() - LN_SQRT_2PI;
        }
        // Half-Gaussian on the constrained SD plus the log-scale Jacobian.
        for &log_sigma in &theta[IDX_LOG_SIGMA_OMEGA..=IDX_LOG_SIGMA_DELTA] {
            let sigma = log_sigma.exp();
            lp += std::f64::consts::LN_2
                - sd_sigma.ln()
                - LN_SQRT_2PI
                - 0.5 * (sigma / sd_sigma).powi(2)
                + log_sigma;
        }
        for &z in &theta[Z_START..] {
            lp += -0.5 * z * z - LN_SQRT_2PI;
        }
        lp
    }

    /// Log density and its gradient in one pass. The gradient is written into
    /// `grad`; the return value is the log density. When the density is not
    /// finite the gradient contents are unspecified.
    pub fn log_density_and_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        debug_assert_eq!(theta.len(), self.dim());
        debug_assert_eq!(grad.len(), self.dim());
        grad.fill(0.0);
        let g = self.layout.g();
        let horizon = self.horizon;
        let sigmas = [
            theta[IDX_LOG_SIGMA_OMEGA].exp(),
            theta[IDX_LOG_SIGMA_LAMBDA].exp(),
            theta[IDX_LOG_SIGMA_PSI].exp(),
            theta[IDX_LOG_SIGMA_DELTA].exp(),
        ];
        let mut lik = 0.0;
        for i in 0..g {
            let coeffs = self.layout.coeffs_from_unconstrained(theta, i);
            let base = i * horizon;
            // Score sums against each covariate of this group's log intensity.
            let (mut s_const, mut s_own, mut s_others, mut s_aux) = (0.0, 0.0, 0.0, 0.0);
            for k in 0..horizon {
                let idx = base + k;
                if self.factor[idx] == 0 {
                    if self.x_obs[idx] > 0.0 {
                        return f64::NEG_INFINITY;
                    }
                    continue;
                }
                let eta = coeffs.omega
                    + coeffs.lambda * self.own_log[idx]
                    + coeffs.psi * self.others_log[idx]
                    + coeffs.delta * self.aux_lag_log[k];
                let mu = eta.exp();
                lik += self.x_obs[idx] * eta - mu;
                let resid = self.x_obs[idx] - mu;
                s_const += resid;
                s_own += resid * self.own_log[idx];
                s_others += resid * self.others_log[idx];
                s_aux += resid * self.aux_lag_log[k];
            }
            let scores = [s_const, s_own, s_others, s_aux];
            let mu_idx = [IDX_MU_OMEGA, IDX_MU_LAMBDA, IDX_MU_PSI, IDX_MU_DELTA];
            let ls_idx = [
                IDX_LOG_SIGMA_OMEGA,
                IDX_LOG_SIGMA_LAMBDA,
                IDX_LOG_SIGMA_PSI,
                IDX_LOG_SIGMA_DELTA,
            ];
            for family in 0..4 {
                let z = theta[self.layout.z_index(family, i)];
                grad[mu_idx[family]] += scores[family];
                grad[self.layout.z_index(family, i)] += sigmas[family] * scores[family];
                grad[ls_idx[family]] += sigmas[family] * z * scores[family];
            }
        }
        let omega_y = theta[IDX_OMEGA_Y];
        let lambda_y = theta[IDX_LAMBDA_Y];
        let gamma = theta[IDX_GAMMA];
        for k in 0..horizon {
            let eta = omega_y + lambda_y * self.aux_lag_log[k] + gamma * self.total_log[k];
            let mu = eta.exp();
            lik += self.y_obs[k] * eta - mu;
            let resid = self.y_obs[k] - mu;
            grad[IDX_OMEGA_Y] += resid;
            grad[IDX_LAMBDA_Y] += resid * self.aux_lag_log[k];
            grad[IDX_GAMMA] += resid * self.total_log[k];
        }
        lik -= self.lgamma_total;

        let sd_mu = self.prior.gaussian_sd_mu;
        let sd_sigma = self.prior.halfgaussian_sd_sigma;
        for idx in IDX_OMEGA_Y..=IDX_MU_DELTA {
            grad[idx] += -theta[idx] / (sd_mu * sd_mu);
        }
        for (family, idx) in (IDX_LOG_SIGMA_OMEGA..=IDX_LOG_SIGMA_DELTA).enumerate() {
            let sigma = sigmas[family];
            grad[idx] += 1.0 - sigma * sigma / (sd_sigma * sd_sigma);
        }
        for z_idx in Z_START..self.dim() {
            grad[z_idx] += -theta[z_idx];
        }
        lik + self.log_prior(theta)
    }
}

/// Log posterior of the panel at `theta`.
pub fn log_posterior(
    theta: &[f64],
    panel: &Panel,
    prior: &PriorSpec,
    splitting_enabled: bool,
) -> Result<f64, InferError> {
    let posterior = Posterior::new(panel, *prior, splitting_enabled)?;
    posterior.log_density(theta)
}

/// Exact gradient of [`log_posterior`] with respect to every unconstrained
/// coordinate. Errors where the log posterior is not finite.
pub fn grad_log_posterior(
    theta: &[f64],
    panel: &Panel,
    prior: &PriorSpec,
    splitting_enabled: bool,
) -> Result<Vec<f64>, InferError> {
    let posterior = Posterior::new(panel, *prior, splitting_enabled)?;
    posterior.check_dim(theta)?;
    let mut grad = vec![0.0; posterior.dim()];
    let value = posterior.log_density_and_grad(theta, &mut grad);
    if !value.is_finite() {
        return Err(InferError::NonFiniteDensity);
    }
    Ok(grad)
}
