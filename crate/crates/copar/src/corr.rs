//! Closed-form approximation to the net correlation between groups.
//!
//! Under a log-Gaussian approximation to the conditional counts, a shared
//! inter-group correlation, weak stationarity, and a second-order expansion of
//! `E[ln(X+1)]`, the stationarity equation for each group's log mean becomes
//! linear in the common correlation. Solving it per group yields one
//! approximation per group; agreement across groups is itself a check on the
//! assumptions.

use serde::Serialize;
use thiserror::Error;

use crate::model::{HyperParams, Panel};

/// Threshold below which the sign classifier reports a boundary case.
pub const SIGN_BOUNDARY_EPS: f64 = 1e-12;
/// Default spread of the per-group approximations tolerated before the
/// report is flagged inconsistent.
pub const DEFAULT_CONSISTENCY_TOLERANCE: f64 = 0.1;
/// Relative first-half vs second-half mean shift that triggers a
/// stationarity warning.
const STATIONARITY_SHIFT_LIMIT: f64 = 0.5;

#[derive(Debug, Error)]
pub enum CorrError {
    #[error("group {group} has stationary mean {mean} <= 1; the variance term is not positive")]
    MeanNotAboveOne { group: usize, mean: f64 },
    #[error("auxiliary stationary mean {0} must be positive")]
    AuxMeanNotPositive(f64),
    #[error("need at least 3 groups for the pairwise variance sum, got {0}")]
    TooFewGroups(usize),
    #[error("mu_psi must be nonzero")]
    ZeroMuPsi,
    #[error("stationary means: {0}")]
    InvalidMeans(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanSource {
    Empirical,
    UserSupplied,
}

/// Per-group and auxiliary stationary means, either estimated from a panel or
/// supplied directly.
#[derive(Debug, Clone, Serialize)]
pub struct StationaryMeans {
    pub mu_x: Vec<f64>,
    pub mu_y: f64,
    pub source: MeanSource,
    /// Nonempty when the series look nonstationary; the approximation is
    /// unreliable in that case.
    pub warnings: Vec<String>,
}

impl StationaryMeans {
    pub fn user_supplied(mu_x: Vec<f64>, mu_y: f64) -> Result<Self, CorrError> {
        let means = Self {
            mu_x,
            mu_y,
            source: MeanSource::UserSupplied,
            warnings: Vec::new(),
        };
        means.validate()?;
        Ok(means)
    }

    pub fn n_groups(&self) -> usize {
        self.mu_x.len()
    }

    pub fn validate(&self) -> Result<(), CorrError> {
        if self.mu_x.len() < 3 {
            return Err(CorrError::TooFewGroups(self.mu_x.len()));
        }
        for (i, &mean) in self.mu_x.iter().enumerate() {
            if !(mean.is_finite() && mean > 1.0) {
                return Err(CorrError::MeanNotAboveOne { group: i + 1, mean });
            }
        }
        if !(self.mu_y.is_finite() && self.mu_y > 0.0) {
            return Err(CorrError::AuxMeanNotPositive(self.mu_y));
        }
        Ok(())
    }
}

/// Time-averaged means of every series, with a warning for each series whose
/// first-half and second-half means differ by more than half the larger one.
pub fn stationary_means_from_panel(panel: &Panel) -> Result<StationaryMeans, CorrError> {
    fn average(series: &[u64]) -> f64 {
        series.iter().map(|&v| v as f64).sum::<f64>() / series.len() as f64
    }
    let mut mu_x = Vec::with_capacity(panel.n_groups());
    let mut warnings = Vec::new();
    for i in 0..panel.n_groups() {
        let mean = average(panel.x_row(i));
        if mean <= 1.0 {
            return Err(CorrError::MeanNotAboveOne { group: i + 1, mean });
        }
        if let Some(w) = half_mean_shift(panel.x_row(i), &format!("group {}", i + 1)) {
            warnings.push(w);
        }
        mu_x.push(mean);
    }
    let mu_y = average(panel.y_series());
    if mu_y <= 0.0 {
        return Err(CorrError::AuxMeanNotPositive(mu_y));
    }
    if let Some(w) = half_mean_shift(panel.y_series(), "auxiliary series") {
        warnings.push(w);
    }
    let means = StationaryMeans {
        mu_x,
        mu_y,
        source: MeanSource::Empirical,
        warnings,
    };
    if means.mu_x.len() >= 3 {
        means.validate()?;
    }
    Ok(means)
}

fn half_mean_shift(series: &[u64], label: &str) -> Option<String> {
    let half = series.len() / 2;
    if half == 0 {
        return None;
    }
    let mean = |slice: &[u64]| slice.iter().map(|&v| v as f64).sum::<f64>() / slice.len() as f64;
    let first = mean(&series[..half]);
    let second = mean(&series[half..]);
    let scale = first.max(second);
    if scale > 0.0 && (first - second).abs() / scale > STATIONARITY_SHIFT_LIMIT {
        Some(format!(
            "{label} looks nonstationary: first-half mean {first:.3}, second-half mean {second:.3}"
        ))
    } else {
        None
    }
}

/// Mean and variance of `Z` when `ln Z` is Gaussian with the given mean and
/// variance.
pub fn lognormal_moments(mu_z: f64, sigma2_z: f64) -> (f64, f64) {
    let mean = (mu_z + sigma2_z / 2.0).exp();
    let variance = (2.0 * mu_z + sigma2_z).exp() * (sigma2_z.exp() - 1.0);
    (mean, variance)
}

/// Second-order expansion of `E[ln(X + 1)]` around the mean.
pub fn taylor_log_mean(mean_x: f64, var_x: f64) -> f64 {
    (mean_x + 1.0).ln() + var_x / (2.0 * (mean_x + 1.0).powi(2))
}

/// Stationary variance implied by the log-Gaussian approximation,
/// `(mu - 1) * mu^3`. Positive only for `mu > 1`.
pub fn v_term(mu: f64) -> f64 {
    (mu - 1.0) * mu.powi(3)
}

/// The four per-group quantities entering the correlation approximation.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RhoTerms {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

struct TermParts {
    terms: RhoTerms,
    v_x: f64,
    taylor_remainder_x: f64,
    taylor_remainder_y: f64,
}

fn rho_terms_inner(i: usize, means: &StationaryMeans, hyper: &HyperParams) -> TermParts {
    let g = means.n_groups();
    let transformed: Vec<f64> = means.mu_x.iter().map(|&m| m.powf(1.5)).collect();
    let variances: Vec<f64> = means.mu_x.iter().map(|&m| v_term(m)).collect();

    // Sums over all groups j != i.
    let s: f64 = (0..g).filter(|&j| j != i).map(|j| transformed[j]).sum::<f64>() + 1.0;
    let w: f64 = (0..g).filter(|&j| j != i).map(|j| variances[j]).sum();
    // Ordered-pair sum of sqrt(V_j V_k) over j, k != i, j != k.
    let sqrt_sum: f64 = (0..g).filter(|&j| j != i).map(|j| variances[j].sqrt()).sum();
    let pair_sum = sqrt_sum * sqrt_sum - w;

    let two_s2 = 2.0 * s * s;
    let d = two_s2 / pair_sum;

    let remainder_x = variances[i] / (2.0 * (transformed[i] + 1.0).powi(2));
    let own_term = taylor_log_mean(transformed[i], variances[i]);
    let a = -d * (means.mu_x[i].ln() - hyper.mu_omega - hyper.mu_lambda * own_term);

    let ty = means.mu_y.powf(1.5);
    let vy = v_term(means.mu_y);
    let remainder_y = vy / (2.0 * (ty + 1.0).powi(2));
    let b = d * taylor_log_mean(ty, vy);

    let c = (w + s.ln() * two_s2) / pair_sum;

    TermParts {
        terms: RhoTerms { a, b, c, d },
        v_x: variances[i],
        taylor_remainder_x: remainder_x,
        taylor_remainder_y: remainder_y,
    }
}

/// The quantities `A_i`, `B_i`, `C_i`, `D_i` for group `i`.
pub fn rho_terms(
    i: usize,
    means: &StationaryMeans,
    hyper: &HyperParams,
) -> Result<RhoTerms, CorrError> {
    means.validate()?;
    if i >= means.n_groups() {
        return Err(CorrError::InvalidMeans(format!(
            "group index {i} out of range for {} groups",
            means.n_groups()
        )));
    }
    Ok(rho_terms_inner(i, means, hyper).terms)
}

/// Clamp a correlation approximation to `[-1, 1]`.
pub fn clamp_rho(value: f64) -> f64 {
    value.clamp(-1.0, 1.0)
}

/// Per-group diagnostics attached to a [`RhoReport`].
#[derive(Debug, Clone, Serialize)]
pub struct GroupTerms {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub v_x: f64,
    /// Second-order remainder proxy for this group's log-mean expansion.
    pub taylor_remainder: f64,
}

/// One correlation approximation per group, its clamp, and the agreement
/// check across groups.
#[derive(Debug, Clone, Serialize)]
pub struct RhoReport {
    pub rho_tilde: Vec<f64>,
    pub rho_star: Vec<f64>,
    /// Max minus min of the unclamped per-group values.
    pub dispersion: f64,
    pub consistent: bool,
    pub tolerance: f64,
    pub terms: Vec<GroupTerms>,
    pub v_y: f64,
    pub taylor_remainder_y: f64,
    pub warnings: Vec<String>,
}

/// Net-group-correlation approximation with the default consistency
/// tolerance.
pub fn rho_tilde(means: &StationaryMeans, hyper: &HyperParams) -> Result<RhoReport, CorrError> {
    rho_tilde_with_tolerance(means, hyper, DEFAULT_CONSISTENCY_TOLERANCE)
}

pub fn rho_tilde_with_tolerance(
    means: &StationaryMeans,
    hyper: &HyperParams,
    tolerance: f64,
) -> Result<RhoReport, CorrError> {
    means.validate()?;
    if hyper.mu_psi == 0.0 {
        return Err(CorrError::ZeroMuPsi);
    }
    let g = means.n_groups();
    let mut rho = Vec::with_capacity(g);
    let mut terms = Vec::with_capacity(g);
    let mut v_y = 0.0;
    let mut remainder_y = 0.0;
    for i in 0..g {
        let parts = rho_terms_inner(i, means, hyper);
        let RhoTerms { a, b, c, d } = parts.terms;
        rho.push(-a / hyper.mu_psi - hyper.mu_delta * b / hyper.mu_psi - c);
        terms.push(GroupTerms {
            a,
            b,
            c,
            d,
            v_x: parts.v_x,
            taylor_remainder: parts.taylor_remainder_x,
        });
        v_y = v_term(means.mu_y);
        remainder_y = parts.taylor_remainder_y;
    }
    let max = rho.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = rho.iter().cloned().fold(f64::INFINITY, f64::min);
    let dispersion = max - min;
    Ok(RhoReport {
        rho_star: rho.iter().map(|&v| clamp_rho(v)).collect(),
        rho_tilde: rho,
        dispersion,
        consistent: dispersion <= tolerance,
        tolerance,
        terms,
        v_y,
        taylor_remainder_y: remainder_y,
        warnings: means.warnings.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SignRegion {
    Positive,
    Negative,
    Boundary,
}

/// Sign of the correlation approximation for group `i`, read off the
/// coupling-plane inequalities without computing the ratio itself.
pub fn sign_region(
    i: usize,
    means: &StationaryMeans,
    hyper: &HyperParams,
) -> Result<SignRegion, CorrError> {
    if hyper.mu_psi == 0.0 {
        return Err(CorrError::ZeroMuPsi);
    }
    let RhoTerms { a, b, c, .. } = rho_terms(i, means, hyper)?;
    let s = a + hyper.mu_delta * b + hyper.mu_psi * c;
    if s.abs() <= SIGN_BOUNDARY_EPS {
        Ok(SignRegion::Boundary)
    } else if (hyper.mu_psi > 0.0) == (s < 0.0) {
        Ok(SignRegion::Positive)
    } else {
        Ok(SignRegion::Negative)
    }
}

/// Right-hand side of the linearized stationarity equation for group `i` at a
/// given correlation. `rho_tilde` is exactly the value making this equal to
/// `ln(mu_x[i])`, which the round-trip tests exploit.
pub fn stationarity_rhs(
    i: usize,
    means: &StationaryMeans,
    hyper: &HyperParams,
    rho: f64,
) -> Result<f64, CorrError> {
    means.validate()?;
    let g = means.n_groups();
    let transformed: Vec<f64> = means.mu_x.iter().map(|&m| m.powf(1.5)).collect();
    let variances: Vec<f64> = means.mu_x.iter().map(|&m| v_term(m)).collect();
    let s: f64 = (0..g).filter(|&j| j != i).map(|j| transformed[j]).sum::<f64>() + 1.0;
    let w: f64 = (0..g).filter(|&j| j != i).map(|j| variances[j]).sum();
    let sqrt_sum: f64 = (0..g).filter(|&j| j != i).map(|j| variances[j].sqrt()).sum();
    let pair_sum = sqrt_sum * sqrt_sum - w;
    let own = taylor_log_mean(transformed[i], variances[i]);
    let aux = taylor_log_mean(means.mu_y.powf(1.5), v_term(means.mu_y));
    Ok(hyper.mu_omega
        + hyper.mu_lambda * own
        + hyper.mu_psi * s.ln()
        + hyper.mu_delta * aux
        + hyper.mu_psi / (2.0 * s * s) * (w + rho * pair_sum))
}
