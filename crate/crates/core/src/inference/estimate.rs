use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{DmlError, Result};
use crate::model::{Dataset, FoldPlan};
use crate::nuisance::NuisanceFitSet;
use crate::scores::{orthogonal_score, MomentFunctional, ScoreMatrix};

/// Cross-fitted point estimates with plug-in standard deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateSet {
    pub theta_hat: Vec<f64>,
    /// `sigma_hat_j^2 = E_n[psi_hat_j^2]`; zero only for degenerate scores.
    pub sigma_hat: Vec<f64>,
    pub n: usize,
    /// Centered scores `psi_hat_j(Z_i)`.
    pub score: ScoreMatrix,
}

/// Serializable summary row of an estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub target: String,
    pub estimate: f64,
    pub sigma: f64,
    pub std_error: f64,
}

impl EstimateSet {
    pub fn p(&self) -> usize {
        self.theta_hat.len()
    }

    pub fn rows(&self) -> Vec<EstimateRow> {
        let root_n = (self.n as f64).sqrt();
        (0..self.p())
            .map(|j| EstimateRow {
                target: self.score.target_meta()[j].clone(),
                estimate: self.theta_hat[j],
                sigma: self.sigma_hat[j],
                std_error: self.sigma_hat[j] / root_n,
            })
            .collect()
    }

    /// `sqrt(n) |theta_hat_j - theta_j| / scale_j`, with `0/0` read as 0.
    pub fn t_statistics(&self, theta: &[f64], scale: &[f64]) -> Vec<f64> {
        let root_n = (self.n as f64).sqrt();
        (0..self.p())
            .map(|j| {
                let dev = root_n * (self.theta_hat[j] - theta[j]).abs();
                if dev == 0.0 {
                    0.0
                } else {
                    dev / scale[j]
                }
            })
            .collect()
    }
}

/// Evaluates cross-fitted scores: rows of fold `l` use the fits trained on
/// the complement of `l`.
pub fn estimate_targets(
    data: &Dataset,
    functionals: &[MomentFunctional],
    fits: &NuisanceFitSet,
    plan: &FoldPlan,
) -> Result<EstimateSet> {
    fits.audit(plan)?;
    if fits.n_targets() != functionals.len() {
        return Err(DmlError::Audit(format!(
            "fit set has {} targets but {} functionals were given",
            fits.n_targets(),
            functionals.len()
        )));
    }
    let n = data.n();
    let members: Vec<Vec<usize>> = (0..plan.folds()).map(|f| plan.members(f)).collect();
    // representers are often shared across targets; evaluate each once
    let mut alpha_cache: Vec<(usize, *const (), Arc<Vec<f64>>)> = Vec::new();
    let mut columns = Vec::with_capacity(functionals.len());
    for (j, functional) in functionals.iter().enumerate() {
        let outcome = functional.outcome_kind();
        let mut col = vec![0.0; n];
        for (f, rows) in members.iter().enumerate() {
            let fit = fits.target(f, j);
            let key = Arc::as_ptr(&fit.riesz) as *const ();
            let alpha = match alpha_cache.iter().find(|(ff, k, _)| *ff == f && *k == key) {
                Some((_, _, v)) => v.clone(),
                None => {
                    let v: Arc<Vec<f64>> = Arc::new(
                        rows.iter()
                            .map(|&i| fit.riesz.predict(data.d(i), data.x(i)))
                            .collect(),
                    );
                    alpha_cache.push((f, key, v.clone()));
                    v
                }
            };
            for (r, &i) in rows.iter().enumerate() {
                let a = alpha[r];
                let fixed_alpha = move |_: crate::model::Label, _: &[f64]| a;
                col[i] = orthogonal_score(
                    functional,
                    data.d(i),
                    data.x(i),
                    outcome.apply(data.y(i)),
                    0.0,
                    fit.regression.as_ref(),
                    &fixed_alpha,
                )?;
            }
        }
        columns.push(col);
    }
    let meta = functionals.iter().map(MomentFunctional::describe).collect();
    let raw = ScoreMatrix::from_columns(columns, meta, false)?;
    let theta_hat = raw.column_means();
    let score = raw.to_centered();
    let sigma_hat = (0..score.p())
        .map(|j| {
            crate::numeric::mean(&score.column(j).iter().map(|v| v * v).collect::<Vec<_>>()).sqrt()
        })
        .collect();
    Ok(EstimateSet {
        theta_hat,
        sigma_hat,
        n,
        score,
    })
}
