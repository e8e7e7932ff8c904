use serde::{Deserialize, Serialize};

use super::correlation::CorrelationEstimate;
use super::critical::{check_level, sup_t_critical_value, Sided};
use super::estimate::EstimateSet;
use crate::error::{DmlError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandRow {
    pub target: String,
    pub estimate: f64,
    /// `sigma_hat_j`; the half-width is `critical_value * se / sqrt(n)`.
    pub se: f64,
    #[serde(with = "crate::numeric::nonfinite")]
    pub lower: f64,
    #[serde(with = "crate::numeric::nonfinite")]
    pub upper: f64,
}

/// Simultaneous band `theta_hat_j -+ n^{-1/2} sigma_hat_j c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandResult {
    pub level: f64,
    #[serde(with = "crate::numeric::nonfinite")]
    pub critical_value: f64,
    pub n: usize,
    pub draws: usize,
    pub seed: u64,
    pub targets: Vec<BandRow>,
}

impl BandResult {
    pub fn covers(&self, theta: &[f64]) -> bool {
        self.targets
            .iter()
            .zip(theta)
            .all(|(r, t)| r.lower <= *t && *t <= r.upper)
    }

    pub fn covers_each(&self, theta: &[f64]) -> Vec<bool> {
        self.targets
            .iter()
            .zip(theta)
            .map(|(r, t)| r.lower <= *t && *t <= r.upper)
            .collect()
    }
}

pub fn build_bands(
    est: &EstimateSet,
    corr: &CorrelationEstimate,
    level: f64,
    draws: usize,
    seed: u64,
) -> Result<BandResult> {
    if corr.p() != est.p() {
        return Err(DmlError::Argument(format!(
            "correlation is {0}x{0} but there are {1} targets",
            corr.p(),
            est.p()
        )));
    }
    let c = sup_t_critical_value(corr, level, draws, seed, Sided::TwoSided)?;
    bands_with_critical_value(est, c, level, draws, seed)
}

/// Bands at a given critical value (which may be infinite).
pub fn bands_with_critical_value(
    est: &EstimateSet,
    critical_value: f64,
    level: f64,
    draws: usize,
    seed: u64,
) -> Result<BandResult> {
    check_level(level)?;
    if !(critical_value >= 0.0) {
        return Err(DmlError::Argument(format!(
            "critical value must be nonnegative, got {critical_value}"
        )));
    }
    let root_n = (est.n as f64).sqrt();
    let targets = (0..est.p())
        .map(|j| {
            let se = est.sigma_hat[j];
            let half = if se == 0.0 {
                0.0
            } else {
                critical_value * se / root_n
            };
            BandRow {
                target: est.score.target_meta()[j].clone(),
                estimate: est.theta_hat[j],
                se,
                lower: est.theta_hat[j] - half,
                upper: est.theta_hat[j] + half,
            }
        })
        .collect();
    Ok(BandResult {
        level,
        critical_value,
        n: est.n,
        draws,
        seed,
        targets,
    })
}
