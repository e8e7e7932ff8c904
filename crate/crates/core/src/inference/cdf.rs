use serde::{Deserialize, Serialize};

use super::correlation::{estimate_correlation, DEFAULT_CORRELATION_RIDGE};
use super::critical::{check_level, sup_t_critical_value, Sided};
use super::estimate::{estimate_targets, EstimateSet};
use crate::error::{DmlError, Result};
use crate::model::{Dataset, FoldPlan, Label};
use crate::nuisance::NuisanceFitSet;
use crate::scores::MomentFunctional;

/// CDF functionals `F_{Y_outcome(arm)}(u)` over a grid.
pub fn cdf_functionals(arm: Label, outcome: usize, grid: &[f64]) -> Vec<MomentFunctional> {
    grid.iter()
        .map(|&threshold| MomentFunctional::CdfAtPoint {
            arm,
            outcome,
            threshold,
        })
        .collect()
}

pub fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty()
        || grid.iter().any(|u| !u.is_finite())
        || grid.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(DmlError::Argument(
            "grid must be nonempty, finite and strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Simultaneous band for a potential-outcome CDF on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfBandResult {
    pub arm: usize,
    pub grid: Vec<f64>,
    pub estimate: Vec<f64>,
    pub se: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Pointwise estimates before monotonization.
    pub raw_estimate: Vec<f64>,
    #[serde(with = "crate::numeric::nonfinite")]
    pub critical_value: f64,
    pub monotonized: bool,
    pub level: f64,
    pub n: usize,
    pub draws: usize,
    pub seed: u64,
}

impl CdfBandResult {
    pub fn covers(&self, truth: &[f64]) -> bool {
        self.lower
            .iter()
            .zip(&self.upper)
            .zip(truth)
            .all(|((l, u), t)| l <= t && t <= u)
    }
}

/// Equal-weight isotonic (nondecreasing) regression by pooling adjacent
/// violators.
pub fn pava(values: &[f64]) -> Vec<f64> {
    // blocks of (sum, count)
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (s1, c1) = blocks[blocks.len() - 1];
            let (s0, c0) = blocks[blocks.len() - 2];
            if s0 / c0 as f64 > s1 / c1 as f64 {
                blocks.pop();
                *blocks.last_mut().expect("two blocks") = (s0 + s1, c0 + c1);
            } else {
                break;
            }
        }
    }
    blocks
        .iter()
        .flat_map(|&(s, c)| std::iter::repeat_n(s / c as f64, c))
        .collect()
}

/// DML estimates of `F(u)` on the grid with a joint critical value from the
/// grid's score correlation, then monotonized and clipped to `[0, 1]`.
///
/// `fits` must be cross-fitted for [`cdf_functionals`] on the same grid.
/// Grid points whose scores are identically zero (outcomes all on one side
/// of `u`) get a zero-width band and are left out of the correlation.
#[allow(clippy::too_many_arguments)]
pub fn estimate_cdf_band(
    data: &Dataset,
    arm: Label,
    outcome: usize,
    grid: &[f64],
    fits: &NuisanceFitSet,
    plan: &FoldPlan,
    level: f64,
    draws: usize,
    seed: u64,
) -> Result<CdfBandResult> {
    check_grid(grid)?;
    check_level(level)?;
    let functionals = cdf_functionals(arm, outcome, grid);
    let est = estimate_targets(data, &functionals, fits, plan)?;
    let critical_value = joint_critical_value(&est, level, draws, seed)?;
    Ok(assemble(
        arm,
        grid,
        &est,
        critical_value,
        level,
        draws,
        seed,
    ))
}

pub(crate) fn joint_critical_value(
    est: &EstimateSet,
    level: f64,
    draws: usize,
    seed: u64,
) -> Result<f64> {
    let live: Vec<usize> = (0..est.p()).filter(|&j| est.sigma_hat[j] > 0.0).collect();
    let corr = if live.is_empty() {
        super::CorrelationEstimate::from_matrix(nalgebra::DMatrix::identity(1, 1), 0.0)?
    } else {
        estimate_correlation(&est.score.select(&live), DEFAULT_CORRELATION_RIDGE)?
    };
    sup_t_critical_value(&corr, level, draws, seed, Sided::TwoSided)
}

pub(crate) fn assemble(
    arm: Label,
    grid: &[f64],
    est: &EstimateSet,
    critical_value: f64,
    level: f64,
    draws: usize,
    seed: u64,
) -> CdfBandResult {
    let root_n = (est.n as f64).sqrt();
    let half: Vec<f64> = est
        .sigma_hat
        .iter()
        .map(|&s| {
            if s == 0.0 {
                0.0
            } else {
                critical_value * s / root_n
            }
        })
        .collect();
    let raw_lower: Vec<f64> = est
        .theta_hat
        .iter()
        .zip(&half)
        .map(|(t, h)| t - h)
        .collect();
    let raw_upper: Vec<f64> = est
        .theta_hat
        .iter()
        .zip(&half)
        .map(|(t, h)| t + h)
        .collect();
    let clip = |v: Vec<f64>| v.into_iter().map(|x| x.clamp(0.0, 1.0)).collect::<Vec<_>>();
    CdfBandResult {
        arm: arm.0,
        grid: grid.to_vec(),
        estimate: clip(pava(&est.theta_hat)),
        se: est.sigma_hat.clone(),
        lower: clip(pava(&raw_lower)),
        upper: clip(pava(&raw_upper)),
        raw_estimate: est.theta_hat.clone(),
        critical_value,
        monotonized: true,
        level,
        n: est.n,
        draws,
        seed,
    }
}

/// Quantile treatment effect with its band-implied interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QteResult {
    pub q: f64,
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
}

/// `inf { u_g : F(u_g) >= q }`, requiring `F(u_1) < q <= F(u_G)` so that
/// the quantile is located inside the grid.
pub fn generalized_inverse(grid: &[f64], cdf: &[f64], q: f64) -> Result<f64> {
    let (first, last) = (cdf[0], cdf[cdf.len() - 1]);
    if !(first < q && q <= last) {
        return Err(DmlError::Range(format!(
            "q = {q} is outside the CDF range ({first}, {last}] covered by the grid; widen the grid"
        )));
    }
    let g = cdf.iter().position(|&f| f >= q).expect("q <= last value");
    Ok(grid[g])
}

/// `F_1^{-1}(q) - F_0^{-1}(q)`; the lower end inverts the upper envelope of
/// `F_1` and the lower envelope of `F_0`, and symmetrically for the upper end.
pub fn qte_from_cdf(band1: &CdfBandResult, band0: &CdfBandResult, q: f64) -> Result<QteResult> {
    if !(q > 0.0 && q < 1.0) {
        return Err(DmlError::Argument(format!(
            "quantile level must lie in (0,1), got {q}"
        )));
    }
    if !(band1.monotonized && band0.monotonized) {
        return Err(DmlError::Argument("QTE needs monotonized CDF bands".into()));
    }
    let inv = |b: &CdfBandResult, f: &[f64]| generalized_inverse(&b.grid, f, q);
    Ok(QteResult {
        q,
        point: inv(band1, &band1.estimate)? - inv(band0, &band0.estimate)?,
        lower: inv(band1, &band1.upper)? - inv(band0, &band0.lower)?,
        upper: inv(band1, &band1.lower)? - inv(band0, &band0.upper)?,
    })
}
