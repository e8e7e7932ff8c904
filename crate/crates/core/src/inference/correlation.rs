use nalgebra::DMatrix;

use crate::error::{DmlError, Result};
use crate::numeric::{min_eigenvalue, KahanSum};
use crate::scores::ScoreMatrix;

/// Default ridge added to a numerically singular correlation matrix.
pub const DEFAULT_CORRELATION_RIDGE: f64 = 1e-8;

/// Eigenvalue below which a correlation matrix is treated as singular.
const SINGULAR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationEstimate {
    pub matrix: DMatrix<f64>,
    pub ridge_applied: f64,
    pub min_eigenvalue: f64,
}

impl CorrelationEstimate {
    pub fn p(&self) -> usize {
        self.matrix.nrows()
    }

    /// Validates a given correlation matrix and regularizes it as
    /// [`estimate_correlation`] does.
    pub fn from_matrix(matrix: DMatrix<f64>, ridge: f64) -> Result<Self> {
        let p = matrix.nrows();
        if p == 0 || matrix.ncols() != p {
            return Err(DmlError::Validation(
                "correlation matrix must be square and nonempty".into(),
            ));
        }
        for j in 0..p {
            if (matrix[(j, j)] - 1.0).abs() > 1e-12 {
                return Err(DmlError::Validation(format!(
                    "correlation diagonal entry {j} is {}",
                    matrix[(j, j)]
                )));
            }
            for k in 0..j {
                if (matrix[(j, k)] - matrix[(k, j)]).abs() > 1e-12 || !matrix[(j, k)].is_finite() {
                    return Err(DmlError::Validation(
                        "correlation matrix must be finite and symmetric".into(),
                    ));
                }
            }
        }
        regularize(matrix, ridge)
    }

    /// Correlation implied by a covariance matrix with positive diagonal.
    pub fn from_covariance(cov: &DMatrix<f64>, ridge: f64) -> Result<Self> {
        let p = cov.nrows();
        let sd: Vec<f64> = (0..p).map(|j| cov[(j, j)].sqrt()).collect();
        if let Some(j) = sd.iter().position(|s| !(*s > 0.0)) {
            return Err(DmlError::DegenerateScore {
                target: format!("target {j}"),
            });
        }
        let m = DMatrix::from_fn(p, p, |j, k| {
            if j == k {
                1.0
            } else {
                cov[(j, k)] / (sd[j] * sd[k])
            }
        });
        regularize(m, ridge)
    }
}

fn regularize(mut matrix: DMatrix<f64>, ridge: f64) -> Result<CorrelationEstimate> {
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(DmlError::Argument(format!(
            "correlation ridge must be nonnegative, got {ridge}"
        )));
    }
    let mut min = min_eigenvalue(&matrix);
    let mut applied = 0.0;
    if min < SINGULAR && ridge > 0.0 {
        let p = matrix.nrows();
        for j in 0..p {
            matrix[(j, j)] += ridge;
        }
        matrix /= 1.0 + ridge;
        for j in 0..p {
            matrix[(j, j)] = 1.0;
        }
        applied = ridge;
        min = min_eigenvalue(&matrix);
    }
    Ok(CorrelationEstimate {
        matrix,
        ridge_applied: applied,
        min_eigenvalue: min,
    })
}

/// Sample correlation of the (re)centered score columns.
pub fn estimate_correlation(score: &ScoreMatrix, ridge: f64) -> Result<CorrelationEstimate> {
    let centered = if score.centered() {
        score.clone()
    } else {
        score.to_centered()
    };
    let p = centered.p();
    let n = centered.n() as f64;
    let mut sd = vec![0.0; p];
    for (j, s) in sd.iter_mut().enumerate() {
        let v: KahanSum = centered.column(j).iter().map(|x| x * x).collect();
        *s = (v.total() / n).sqrt();
        if !(*s > 0.0) {
            return Err(DmlError::DegenerateScore {
                target: centered.target_meta()[j].clone(),
            });
        }
    }
    let mut m = DMatrix::identity(p, p);
    for j in 0..p {
        let cj = centered.column(j);
        for k in 0..j {
            let ck = centered.column(k);
            let v: KahanSum = cj.iter().zip(ck).map(|(a, b)| a * b).collect();
            let r = (v.total() / n / (sd[j] * sd[k])).clamp(-1.0, 1.0);
            m[(j, k)] = r;
            m[(k, j)] = r;
        }
    }
    regularize(m, ridge)
}
