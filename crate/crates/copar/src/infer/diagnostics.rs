//! Convergence diagnostics over multi-chain draws.

use super::nuts::PosteriorDraws;
use super::InferError;

/// A diagnostic value with a flag for degenerate inputs (constant chains).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagValue {
    pub value: f64,
    pub degenerate: bool,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_var(xs: &[f64], m: f64) -> f64 {
    xs.iter().map(|&x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

fn columns_for(draws: &PosteriorDraws, parameter: &str) -> Result<Vec<Vec<f64>>, InferError> {
    let idx = draws
        .index_of(parameter)
        .ok_or_else(|| InferError::UnknownParameter(parameter.to_string()))?;
    if draws.n_chains() < 2 {
        return Err(InferError::TooFewChains {
            need: 2,
            got: draws.n_chains(),
        });
    }
    if draws.n_kept() < 10 {
        return Err(InferError::TooFewDraws {
            need: 10,
            got: draws.n_kept(),
        });
    }
    Ok((0..draws.n_chains())
        .map(|c| draws.param_column(c, idx))
        .collect())
}

/// Potential scale reduction factor from between- and within-chain variances.
/// Identical constant chains report 1 with the degenerate flag set.
pub fn gelman_rubin(draws: &PosteriorDraws, parameter: &str) -> Result<DiagValue, InferError> {
    let chains = columns_for(draws, parameter)?;
    let n = chains[0].len() as f64;
    let chain_means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let within = mean(
        &chains
            .iter()
            .zip(&chain_means)
            .map(|(c, &m)| sample_var(c, m))
            .collect::<Vec<f64>>(),
    );
    let grand = mean(&chain_means);
    let between_over_n = sample_var(&chain_means, grand);
    if within <= 0.0 {
        return Ok(if between_over_n <= 0.0 {
            DiagValue {
                value: 1.0,
                degenerate: true,
            }
        } else {
            DiagValue {
                value: f64::INFINITY,
                degenerate: true,
            }
        });
    }
    let var_plus = (n - 1.0) / n * within + between_over_n;
    Ok(DiagValue {
        value: (var_plus / within).sqrt(),
        degenerate: false,
    })
}

/// Autocorrelation-based effective sample size pooled across chains, with
/// Geyer's initial positive sequence truncation. Constant chains report 0
/// with the degenerate flag set.
pub fn effective_sample_size(
    draws: &PosteriorDraws,
    parameter: &str,
) -> Result<DiagValue, InferError> {
    let chains = columns_for(draws, parameter)?;
    let m = chains.len() as f64;
    let n = chains[0].len();
    let nf = n as f64;
    let chain_means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let within = mean(
        &chains
            .iter()
            .zip(&chain_means)
            .map(|(c, &mu)| sample_var(c, mu))
            .collect::<Vec<f64>>(),
    );
    let grand = mean(&chain_means);
    let between_over_n = if chains.len() > 1 {
        sample_var(&chain_means, grand)
    } else {
        0.0
    };
    let var_plus = (nf - 1.0) / nf * within + between_over_n;
    if !var_plus.is_finite() || var_plus <= 0.0 {
        return Ok(DiagValue {
            value: 0.0,
            degenerate: true,
        });
    }

    // Autocovariance at a lag, averaged over chains (biased 1/n scaling).
    let acov = |lag: usize| -> f64 {
        let mut total = 0.0;
        for (chain, &mu) in chains.iter().zip(&chain_means) {
            let mut s = 0.0;
            for t in lag..n {
                s += (chain[t] - mu) * (chain[t - lag] - mu);
            }
            total += s / nf;
        }
        total / m
    };

    let rho = |lag: usize| -> f64 { 1.0 - (within - acov(lag)) / var_plus };

    // Paired sums rho_{2k} + rho_{2k+1}, truncated at the first nonpositive.
    let mut tau = -1.0;
    let mut k = 0usize;
    loop {
        let even = if 2 * k >= n { break } else { rho(2 * k) };
        let odd = if 2 * k + 1 >= n { 0.0 } else { rho(2 * k + 1) };
        let pair = even + odd;
        if k > 0 && pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        k += 1;
    }
    let total_draws = m * nf;
    let cap = total_draws * (total_draws.log10()).max(1.0);
    let ess = (total_draws / tau.max(1e-12)).min(cap);
    Ok(DiagValue {
        value: ess,
        degenerate: false,
    })
}

/// Mean, SD, and central interval bounds of the pooled draws for a parameter.
#[derive(Debug, Clone, Copy)]
pub struct ParamStats {
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
    pub q2_5: f64,
    pub q97_5: f64,
}

/// Linear-interpolation quantile of (a copy of) the values.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

pub fn param_stats(draws: &PosteriorDraws, param: usize) -> ParamStats {
    let pooled = draws.pooled(param);
    let m = mean(&pooled);
    let sd = if pooled.len() > 1 {
        sample_var(&pooled, m).sqrt()
    } else {
        0.0
    };
    ParamStats {
        mean: m,
        sd,
        median: quantile(&pooled, 0.5),
        q2_5: quantile(&pooled, 0.025),
        q97_5: quantile(&pooled, 0.975),
    }
}
