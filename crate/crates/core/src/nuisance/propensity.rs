use std::sync::Arc;

use super::design::Design;
use super::dictionary::Dictionary;
use super::logistic::{fit_logit, LogitModel, NewtonOptions};
use crate::error::{DmlError, Result};
use crate::model::{Dataset, Label, Propensity};

/// Fitted multinomial-logit propensities, clipped and renormalized.
#[derive(Debug, Clone)]
pub struct PropensityFit {
    model: LogitModel,
    dictionary: Arc<Dictionary>,
    clip: f64,
}

impl PropensityFit {
    pub fn clip(&self) -> f64 {
        self.clip
    }

    pub fn model(&self) -> &LogitModel {
        &self.model
    }

    /// Vector of clipped probabilities over all labels.
    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        let classes = self.model.classes();
        let mut b = vec![0.0; self.dictionary.len()];
        // the dictionary is treatment-free, so the label passed is irrelevant
        self.dictionary.eval_into(Label(0), x, &mut b);
        let mut p = vec![0.0; classes];
        self.model.probabilities_into(&b, &mut p);
        for v in p.iter_mut() {
            *v = v.clamp(self.clip, 1.0 - self.clip);
        }
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= total);
        p
    }
}

impl Propensity for PropensityFit {
    fn prob(&self, d: Label, x: &[f64]) -> f64 {
        self.probabilities(x).get(d.0).copied().unwrap_or(f64::NAN)
    }
}

/// Penalized multinomial logit of the treatment label on the
/// treatment-free part of `dictionary`.
pub fn fit_propensity(data: &Dataset, dictionary: &Dictionary, clip: f64) -> Result<PropensityFit> {
    let rows: Vec<usize> = (0..data.n()).collect();
    fit_propensity_rows(data, &rows, dictionary, clip, NewtonOptions::default())
}

pub fn fit_propensity_rows(
    data: &Dataset,
    rows: &[usize],
    dictionary: &Dictionary,
    clip: f64,
    options: NewtonOptions,
) -> Result<PropensityFit> {
    if !(clip > 0.0 && clip < 0.5) {
        return Err(DmlError::Argument(format!(
            "propensity clip must lie in (0, 0.5), got {clip}"
        )));
    }
    let dictionary = Arc::new(dictionary.covariate_part());
    dictionary.check_covariates(data.covariate_dim())?;
    let classes = data.labels().len();
    let mut seen = vec![false; classes];
    for &i in rows {
        seen[data.d(i).0] = true;
    }
    if let Some(l) = seen.iter().position(|s| !s) {
        return Err(DmlError::Estimation(format!(
            "treatment label \"{}\" is absent from the training rows",
            data.labels()[l]
        )));
    }
    let design = Design::new(data, rows, &dictionary);
    let targets: Vec<usize> = rows.iter().map(|&i| data.d(i).0).collect();
    let model = fit_logit(&design, &targets, classes, options)?;
    Ok(PropensityFit {
        model,
        dictionary,
        clip,
    })
}
