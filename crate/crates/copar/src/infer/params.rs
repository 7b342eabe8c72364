//! Unconstrained parameter vector layout and transforms.
//!
//! The sampler works on `11 + 4g` unconstrained coordinates: the seven
//! location parameters, the four random-effect SDs on the log scale, and `4g`
//! standardized random-effect coordinates. A group effect is recovered
//! non-centered, e.g. `omega_x[i] = mu_omega + exp(log_sigma_omega) * z[i]`.

use crate::model::{GroupCoeffs, GroupEffects, HyperParams};

pub const IDX_OMEGA_Y: usize = 0;
pub const IDX_LAMBDA_Y: usize = 1;
pub const IDX_GAMMA: usize = 2;
pub const IDX_MU_OMEGA: usize = 3;
pub const IDX_MU_LAMBDA: usize = 4;
pub const IDX_MU_PSI: usize = 5;
pub const IDX_MU_DELTA: usize = 6;
pub const IDX_LOG_SIGMA_OMEGA: usize = 7;
pub const IDX_LOG_SIGMA_LAMBDA: usize = 8;
pub const IDX_LOG_SIGMA_PSI: usize = 9;
pub const IDX_LOG_SIGMA_DELTA: usize = 10;
/// First of the `4g` standardized random-effect coordinates.
pub const Z_START: usize = 11;

pub const LOCATION_NAMES: [&str; 7] = [
    "omega_Y",
    "lambda_Y",
    "gamma",
    "mu_omega",
    "mu_lambda",
    "mu_psi",
    "mu_delta",
];
pub const SIGMA_NAMES: [&str; 4] = ["sigma_omega", "sigma_lambda", "sigma_psi", "sigma_delta"];
/// The eleven population-level parameters, in report order.
pub const HYPER_NAMES: [&str; 11] = [
    "omega_Y",
    "lambda_Y",
    "gamma",
    "mu_omega",
    "mu_lambda",
    "mu_psi",
    "mu_delta",
    "sigma_omega",
    "sigma_lambda",
    "sigma_psi",
    "sigma_delta",
];

const EFFECT_FAMILIES: [&str; 4] = ["omega_X", "lambda_X", "psi", "delta"];

/// Index bookkeeping for a model with `g` groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    g: usize,
    unconstrained_names: Vec<String>,
    constrained_names: Vec<String>,
}

impl ParamLayout {
    pub fn new(g: usize) -> Self {
        let mut unconstrained: Vec<String> =
            LOCATION_NAMES.iter().map(|s| s.to_string()).collect();
        let mut constrained = unconstrained.clone();
        for name in SIGMA_NAMES {
            unconstrained.push(format!("log_{name}"));
            constrained.push(name.to_string());
        }
        for family in EFFECT_FAMILIES {
            for i in 1..=g {
                unconstrained.push(format!("z_{family}[{i}]"));
                constrained.push(format!("{family}[{i}]"));
            }
        }
        Self {
            g,
            unconstrained_names: unconstrained,
            constrained_names: constrained,
        }
    }

    pub fn g(&self) -> usize {
        self.g
    }

    pub fn dim(&self) -> usize {
        11 + 4 * self.g
    }

    pub fn unconstrained_names(&self) -> &[String] {
        &self.unconstrained_names
    }

    pub fn constrained_names(&self) -> &[String] {
        &self.constrained_names
    }

    pub fn constrained_index(&self, name: &str) -> Option<usize> {
        self.constrained_names.iter().position(|n| n == name)
    }

    /// Index of `z_<family>[i+1]` for family 0..=3 and group `i`.
    #[inline]
    pub fn z_index(&self, family: usize, i: usize) -> usize {
        Z_START + family * self.g + i
    }

    pub fn hyper_from_unconstrained(&self, theta: &[f64]) -> HyperParams {
        HyperParams {
            omega_y: theta[IDX_OMEGA_Y],
            lambda_y: theta[IDX_LAMBDA_Y],
            gamma: theta[IDX_GAMMA],
            mu_omega: theta[IDX_MU_OMEGA],
            mu_lambda: theta[IDX_MU_LAMBDA],
            mu_psi: theta[IDX_MU_PSI],
            mu_delta: theta[IDX_MU_DELTA],
            sigma_omega: theta[IDX_LOG_SIGMA_OMEGA].exp(),
            sigma_lambda: theta[IDX_LOG_SIGMA_LAMBDA].exp(),
            sigma_psi: theta[IDX_LOG_SIGMA_PSI].exp(),
            sigma_delta: theta[IDX_LOG_SIGMA_DELTA].exp(),
        }
    }

    #[inline]
    pub fn coeffs_from_unconstrained(&self, theta: &[f64], i: usize) -> GroupCoeffs {
        GroupCoeffs {
            omega: theta[IDX_MU_OMEGA] + theta[IDX_LOG_SIGMA_OMEGA].exp() * theta[self.z_index(0, i)],
            lambda: theta[IDX_MU_LAMBDA]
                + theta[IDX_LOG_SIGMA_LAMBDA].exp() * theta[self.z_index(1, i)],
            psi: theta[IDX_MU_PSI] + theta[IDX_LOG_SIGMA_PSI].exp() * theta[self.z_index(2, i)],
            delta: theta[IDX_MU_DELTA]
                + theta[IDX_LOG_SIGMA_DELTA].exp() * theta[self.z_index(3, i)],
        }
    }

    pub fn effects_from_unconstrained(&self, theta: &[f64]) -> GroupEffects {
        let coeffs: Vec<GroupCoeffs> = (0..self.g)
            .map(|i| self.coeffs_from_unconstrained(theta, i))
            .collect();
        GroupEffects {
            omega_x: coeffs.iter().map(|c| c.omega).collect(),
            lambda_x: coeffs.iter().map(|c| c.lambda).collect(),
            psi: coeffs.iter().map(|c| c.psi).collect(),
            delta: coeffs.iter().map(|c| c.delta).collect(),
        }
    }

    /// Map an unconstrained vector to the reported scale: SDs exponentiated,
    /// standardized coordinates replaced by the realized effects.
    pub fn to_constrained(&self, theta: &[f64]) -> Vec<f64> {
        let mut out = theta.to_vec();
        for idx in IDX_LOG_SIGMA_OMEGA..=IDX_LOG_SIGMA_DELTA {
            out[idx] = theta[idx].exp();
        }
        for i in 0..self.g {
            let coeffs = self.coeffs_from_unconstrained(theta, i);
            out[self.z_index(0, i)] = coeffs.omega;
            out[self.z_index(1, i)] = coeffs.lambda;
            out[self.z_index(2, i)] = coeffs.psi;
            out[self.z_index(3, i)] = coeffs.delta;
        }
        out
    }

    /// Inverse of [`Self::to_constrained`]. SDs must be strictly positive.
    pub fn from_constrained(&self, values: &[f64]) -> Vec<f64> {
        let mut out = values.to_vec();
        for idx in IDX_LOG_SIGMA_OMEGA..=IDX_LOG_SIGMA_DELTA {
            out[idx] = values[idx].ln();
        }
        let mus = [
            values[IDX_MU_OMEGA],
            values[IDX_MU_LAMBDA],
            values[IDX_MU_PSI],
            values[IDX_MU_DELTA],
        ];
        let sigmas = [
            values[IDX_LOG_SIGMA_OMEGA],
            values[IDX_LOG_SIGMA_LAMBDA],
            values[IDX_LOG_SIGMA_PSI],
            values[IDX_LOG_SIGMA_DELTA],
        ];
        for family in 0..4 {
            for i in 0..self.g {
                let idx = self.z_index(family, i);
                out[idx] = (values[idx] - mus[family]) / sigmas[family];
            }
        }
        out
    }
}
