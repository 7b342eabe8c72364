//! Prior-posterior overlap: the shared area between a kernel density
//! estimate of the pooled draws and the parameter's prior density. Overlap
//! above 35% flags the parameter as weakly identifiable.

use super::nuts::PosteriorDraws;
use super::params::{LOCATION_NAMES, SIGMA_NAMES};
use super::posterior::PriorSpec;
use super::InferError;

/// Overlap percentage above which a parameter counts as weakly identifiable.
pub const WEAK_IDENTIFIABILITY_THRESHOLD: f64 = 35.0;
const QUADRATURE_NODES: usize = 4096;
const GRID_HALF_WIDTH_SDS: f64 = 6.0;
const MIN_POOLED_DRAWS: usize = 100;
const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpoResult {
    pub percent: f64,
    pub weakly_identifiable: bool,
}

enum PriorKind {
    Gaussian { sd: f64 },
    HalfGaussian { sd: f64 },
}

fn prior_kind(parameter: &str, prior: &PriorSpec) -> Result<PriorKind, InferError> {
    if LOCATION_NAMES.contains(&parameter) {
        Ok(PriorKind::Gaussian {
            sd: prior.gaussian_sd_mu,
        })
    } else if SIGMA_NAMES.contains(&parameter) {
        Ok(PriorKind::HalfGaussian {
            sd: prior.halfgaussian_sd_sigma,
        })
    } else {
        Err(InferError::NoPriorFor(parameter.to_string()))
    }
}

impl PriorKind {
    fn grid(&self) -> (f64, f64) {
        match self {
            PriorKind::Gaussian { sd } => (-GRID_HALF_WIDTH_SDS * sd, GRID_HALF_WIDTH_SDS * sd),
            PriorKind::HalfGaussian { sd } => (0.0, GRID_HALF_WIDTH_SDS * sd),
        }
    }

    fn density(&self, x: f64) -> f64 {
        match self {
            PriorKind::Gaussian { sd } => (-0.5 * (x / sd).powi(2)).exp() / (sd * SQRT_2PI),
            PriorKind::HalfGaussian { sd } => {
                if x < 0.0 {
                    0.0
                } else {
                    2.0 * (-0.5 * (x / sd).powi(2)).exp() / (sd * SQRT_2PI)
                }
            }
        }
    }
}

/// Silverman's bandwidth on the pooled draws.
fn silverman_bandwidth(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let sd = (sorted.iter().map(|&x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let q1 = sorted[(0.25 * (sorted.len() - 1) as f64).round() as usize];
    let q3 = sorted[(0.75 * (sorted.len() - 1) as f64).round() as usize];
    let iqr = (q3 - q1) / 1.34;
    let spread = if iqr > 0.0 { sd.min(iqr) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

/// Gaussian KDE evaluated at `x` over sorted draws, truncating kernels
/// beyond eight bandwidths.
fn kde_at(sorted: &[f64], bandwidth: f64, x: f64) -> f64 {
    let cutoff = 8.0 * bandwidth;
    let lo = sorted.partition_point(|&d| d < x - cutoff);
    let hi = sorted.partition_point(|&d| d <= x + cutoff);
    let mut total = 0.0;
    for &d in &sorted[lo..hi] {
        let z = (x - d) / bandwidth;
        total += (-0.5 * z * z).exp();
    }
    total / (sorted.len() as f64 * bandwidth * SQRT_2PI)
}

/// Percentage overlap `100 * integral of min(kde, prior)` over a grid of
/// [`QUADRATURE_NODES`] nodes spanning six prior SDs, trapezoid rule.
pub fn prior_posterior_overlap(
    draws: &PosteriorDraws,
    parameter: &str,
    prior: &PriorSpec,
) -> Result<PpoResult, InferError> {
    prior.validate()?;
    let kind = prior_kind(parameter, prior)?;
    let idx = draws
        .index_of(parameter)
        .ok_or_else(|| InferError::UnknownParameter(parameter.to_string()))?;
    let mut pooled = draws.pooled(idx);
    if pooled.len() < MIN_POOLED_DRAWS {
        return Err(InferError::TooFewDraws {
            need: MIN_POOLED_DRAWS,
            got: pooled.len(),
        });
    }
    pooled.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let bandwidth = silverman_bandwidth(&pooled);
    if !(bandwidth.is_finite() && bandwidth > 0.0) {
        // Degenerate posterior mass at a point shares no area with a proper prior.
        return Ok(PpoResult {
            percent: 0.0,
            weakly_identifiable: false,
        });
    }
    let (lo, hi) = kind.grid();
    let step = (hi - lo) / (QUADRATURE_NODES - 1) as f64;
    let mut integral = 0.0;
    let mut previous = 0.0;
    for node in 0..QUADRATURE_NODES {
        let x = lo + step * node as f64;
        let value = kde_at(&pooled, bandwidth, x).min(kind.density(x));
        if node > 0 {
            integral += 0.5 * (previous + value) * step;
        }
        previous = value;
    }
    let percent = (100.0 * integral).clamp(0.0, 100.0);
    Ok(PpoResult {
        percent,
        weakly_identifiable: percent > WEAK_IDENTIFIABILITY_THRESHOLD,
    })
}
