use serde::{Deserialize, Serialize};

use super::Theorem1Inputs;
use crate::error::{DmlError, Result};
use crate::model::{Dgp, NuisanceFn};
use crate::nuisance::NuisanceFitSet;
use crate::numeric::min_eigenvalue;
use crate::scores::{MomentFunctional, ScoreMatrix};

/// Rank threshold below which the oracle correlation counts as singular.
const SINGULAR: f64 = 1e-10;

/// Bound inputs measured against simulation truth. Entropy and envelope
/// fields are left to the caller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalInputs {
    pub sigma_min: f64,
    pub lambda_min: f64,
    pub b_n: f64,
    pub r_gamma: f64,
    pub r_alpha: f64,
    pub warnings: Vec<String>,
}

impl EmpiricalInputs {
    /// Overwrites the measured fields of `base`.
    pub fn apply(&self, base: Theorem1Inputs) -> Theorem1Inputs {
        Theorem1Inputs {
            sigma_min: self.sigma_min,
            lambda_min: self.lambda_min,
            b_n: self.b_n,
            r_gamma: self.r_gamma,
            r_alpha: self.r_alpha,
            ..base
        }
    }
}

/// Measures `sigma_min` and `lambda_min` from the exact oracle covariance,
/// `b_n` from the sample oracle scores `score` (uncentered, at the truth)
/// and the nuisance rates as worst fold-wise `L2(P)` errors.
pub fn empirical_bound_inputs(
    dgp: &dyn Dgp,
    functionals: &[MomentFunctional],
    fits: &NuisanceFitSet,
    score: &ScoreMatrix,
    q: f64,
) -> Result<EmpiricalInputs> {
    let discrete = dgp.as_discrete().ok_or_else(|| {
        DmlError::Precondition("bound inputs need a DGP with enumerable truth".into())
    })?;
    let p = functionals.len();
    if p == 0 || score.p() != p || fits.n_targets() != p {
        return Err(DmlError::Argument(
            "functionals, fits and score disagree on the number of targets".into(),
        ));
    }
    if !(q.is_finite() && q >= 4.0) {
        return Err(DmlError::Validation(format!(
            "q must be at least 4, got {q}"
        )));
    }
    let mut warnings = Vec::new();
    let cov = dgp.oracle_covariance(functionals)?;
    let sd: Vec<f64> = (0..p).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();
    let sigma_min = sd.iter().cloned().fold(f64::INFINITY, f64::min);
    if sigma_min == 0.0 {
        warnings.push("an oracle score has zero variance".to_string());
    }
    let live: Vec<usize> = (0..p).filter(|&j| sd[j] > 0.0).collect();
    let lambda_min = if live.is_empty() {
        0.0
    } else {
        let corr = nalgebra::DMatrix::from_fn(live.len(), live.len(), |a, b| {
            let (j, k) = (live[a], live[b]);
            if j == k {
                1.0
            } else {
                cov[(j, k)] / (sd[j] * sd[k])
            }
        });
        let m = min_eigenvalue(&corr);
        if m < SINGULAR {
            warnings.push(format!(
                "oracle correlation is singular (min eigenvalue {m:.3e}); lambda_min set to 0"
            ));
            0.0
        } else {
            m
        }
    };

    let n = score.n() as f64;
    let mut max_q = 0.0;
    let mut fourth = vec![0.0; live.len()];
    for i in 0..score.n() {
        let mut row_max = 0.0f64;
        for (slot, &j) in live.iter().enumerate() {
            let z = score.get(i, j) / sd[j];
            row_max = row_max.max(z.abs());
            fourth[slot] += z.powi(4);
        }
        max_q += row_max.powf(q);
    }
    let q_norm = (max_q / n).powf(1.0 / q);
    let fourth_root = fourth.iter().map(|s| (s / n).sqrt()).fold(0.0, f64::max);
    let b_n = q_norm.max(fourth_root);

    let (mut r_gamma, mut r_alpha) = (0.0f64, 0.0f64);
    for (j, f) in functionals.iter().enumerate() {
        let g0 = dgp.regression(f.outcome_kind())?;
        let a0 = dgp.riesz(f)?;
        for fold in fits.folds() {
            let fit = &fold.targets()[j];
            let g = discrete
                .expectation(|_, d, x| (fit.regression.eval(d, x) - g0.eval(d, x)).powi(2))?;
            let a =
                discrete.expectation(|_, d, x| (fit.riesz.eval(d, x) - a0.eval(d, x)).powi(2))?;
            r_gamma = r_gamma.max(g.sqrt());
            r_alpha = r_alpha.max(a.sqrt());
        }
    }
    Ok(EmpiricalInputs {
        sigma_min,
        lambda_min,
        b_n,
        r_gamma,
        r_alpha,
        warnings,
    })
}
