use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::correlation::CorrelationEstimate;
use crate::error::{DmlError, Result};
use crate::rng;

/// Whether the statistic is `max_j |Z_j|` or `max_j Z_j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sided {
    #[default]
    TwoSided,
    OneSided,
}

/// Draws per independently seeded block.
const BLOCK: usize = 4096;

/// Eigenvalue floor used when Cholesky fails.
const EIGEN_FLOOR: f64 = 1e-12;

/// Lower-triangular or symmetric square root `L` with `L L' = corr`.
pub fn correlation_factor(corr: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(chol) = corr.clone().cholesky() {
        return Ok(chol.l());
    }
    let eig = corr.clone().symmetric_eigen();
    let scale = eig
        .eigenvalues
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1.0);
    if eig.eigenvalues.iter().any(|&v| v < -1e-8 * scale) {
        return Err(DmlError::Factorization(format!(
            "correlation matrix is not positive semidefinite (min eigenvalue {:.3e})",
            eig.eigenvalues.min()
        )));
    }
    let roots = eig.eigenvalues.map(|v| v.max(EIGEN_FLOOR).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots))
}

/// `draws` values of `max_j |Z_j|` (or `max_j Z_j`) for `Z ~ N(0, corr)`.
///
/// Block `b` is seeded from `(seed, b)` and blocks are concatenated in
/// index order, so the sample does not depend on the thread count.
pub fn gaussian_max_sample(
    corr: &CorrelationEstimate,
    draws: usize,
    seed: u64,
    sided: Sided,
) -> Result<Vec<f64>> {
    let factor = correlation_factor(&corr.matrix)?;
    let p = factor.nrows();
    let blocks = draws.div_ceil(BLOCK);
    let parts: Vec<Vec<f64>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let m = BLOCK.min(draws - b * BLOCK);
            let mut stream = rng::stream(rng::derive_seed(seed, b as u64));
            let normals = DMatrix::<f64>::from_fn(p, m, |_, _| StandardNormal.sample(&mut stream));
            let z = if p == 1 {
                normals * factor[(0, 0)]
            } else {
                &factor * normals
            };
            z.column_iter()
                .map(|c| match sided {
                    Sided::TwoSided => c.iter().fold(0.0f64, |acc, v| acc.max(v.abs())),
                    Sided::OneSided => c.iter().fold(f64::NEG_INFINITY, |acc, &v| acc.max(v)),
                })
                .collect()
        })
        .collect();
    Ok(parts.concat())
}

/// The `ceil(level (B + 1))`-th order statistic of `sample`, clamped to `B`.
pub fn order_statistic(sample: &mut [f64], level: f64) -> f64 {
    let b = sample.len();
    let k = ((level * (b as f64 + 1.0)).ceil() as usize).clamp(1, b);
    let (_, v, _) = sample.select_nth_unstable_by(k - 1, f64::total_cmp);
    *v
}

/// Sup-t critical value from Monte Carlo draws of the Gaussian maximum.
pub fn sup_t_critical_value(
    corr: &CorrelationEstimate,
    level: f64,
    draws: usize,
    seed: u64,
    sided: Sided,
) -> Result<f64> {
    check_level(level)?;
    if draws < 1000 {
        return Err(DmlError::Argument(format!(
            "at least 1000 draws are required, got {draws}"
        )));
    }
    let mut sample = gaussian_max_sample(corr, draws, seed, sided)?;
    Ok(order_statistic(&mut sample, level))
}

pub(crate) fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(DmlError::Argument("level must lie in (0,1)".into()))
    }
}
