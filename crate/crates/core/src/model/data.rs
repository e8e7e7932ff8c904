use serde::{Deserialize, Serialize};

use crate::error::{DmlError, Result};

/// Index of a treatment label within a dataset's declared label set.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Label(pub usize);

impl Label {
    pub fn index(self) -> usize {
        self.0
    }
}

/// `n` records of (outcome vector, treatment label, covariate vector).
///
/// Outcomes and covariates are stored row-major so that a record's row can be
/// handed to nuisance functions as a slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    n: usize,
    p_y: usize,
    k: usize,
    outcomes: Vec<f64>,
    treatment: Vec<Label>,
    labels: Vec<String>,
    covariates: Vec<f64>,
    weights: Option<Vec<f64>>,
}

impl Dataset {
    /// Builds a dataset from row-major blocks, validating every invariant.
    pub fn new(
        outcomes: Vec<f64>,
        p_y: usize,
        treatment: Vec<Label>,
        labels: Vec<String>,
        covariates: Vec<f64>,
        k: usize,
        weights: Option<Vec<f64>>,
    ) -> Result<Self> {
        let n = treatment.len();
        if n == 0 {
            return Err(DmlError::Validation(
                "dataset must contain at least one record".into(),
            ));
        }
        if p_y == 0 {
            return Err(DmlError::Validation(
                "dataset needs at least one outcome column".into(),
            ));
        }
        if outcomes.len() != n * p_y {
            return Err(DmlError::Validation(format!(
                "outcome block has {} values, expected {n}x{p_y}",
                outcomes.len()
            )));
        }
        if covariates.len() != n * k {
            return Err(DmlError::Validation(format!(
                "covariate block has {} values, expected {n}x{k}",
                covariates.len()
            )));
        }
        if labels.is_empty() {
            return Err(DmlError::Validation("declared label set is empty".into()));
        }
        if let Some(bad) = treatment.iter().find(|d| d.0 >= labels.len()) {
            return Err(DmlError::Validation(format!(
                "treatment label index {} outside the declared set of {}",
                bad.0,
                labels.len()
            )));
        }
        if let Some(i) = outcomes.iter().position(|v| !v.is_finite()) {
            return Err(DmlError::Validation(format!(
                "non-finite outcome in row {}",
                i / p_y
            )));
        }
        if let Some(i) = covariates.iter().position(|v| !v.is_finite()) {
            return Err(DmlError::Validation(format!(
                "non-finite covariate in row {}",
                i / k.max(1)
            )));
        }
        if let Some(w) = &weights {
            if w.len() != n {
                return Err(DmlError::Validation("weights length differs from n".into()));
            }
            if w.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(DmlError::Validation(
                    "weights must be finite and positive".into(),
                ));
            }
        }
        Ok(Self {
            n,
            p_y,
            k,
            outcomes,
            treatment,
            labels,
            covariates,
            weights,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn outcome_dim(&self) -> usize {
        self.p_y
    }

    pub fn covariate_dim(&self) -> usize {
        self.k
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, name: &str) -> Option<Label> {
        self.labels.iter().position(|l| l == name).map(Label)
    }

    #[inline]
    pub fn y(&self, i: usize) -> &[f64] {
        &self.outcomes[i * self.p_y..(i + 1) * self.p_y]
    }

    #[inline]
    pub fn d(&self, i: usize) -> Label {
        self.treatment[i]
    }

    #[inline]
    pub fn x(&self, i: usize) -> &[f64] {
        &self.covariates[i * self.k..(i + 1) * self.k]
    }

    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }

    pub fn has_weights(&self) -> bool {
        self.weights.is_some()
    }

    pub fn treatment(&self) -> &[Label] {
        &self.treatment
    }

    /// Number of records carrying each label.
    pub fn label_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.labels.len()];
        for d in &self.treatment {
            counts[d.0] += 1;
        }
        counts
    }

    /// Copy of the listed rows, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let mut outcomes = Vec::with_capacity(rows.len() * self.p_y);
        let mut covariates = Vec::with_capacity(rows.len() * self.k);
        let mut treatment = Vec::with_capacity(rows.len());
        for &i in rows {
            outcomes.extend_from_slice(self.y(i));
            covariates.extend_from_slice(self.x(i));
            treatment.push(self.d(i));
        }
        Dataset {
            n: rows.len(),
            p_y: self.p_y,
            k: self.k,
            outcomes,
            treatment,
            labels: self.labels.clone(),
            covariates,
            weights: self
                .weights
                .as_ref()
                .map(|w| rows.iter().map(|&i| w[i]).collect()),
        }
    }

    /// Same records with every outcome multiplied by `s`.
    pub fn scale_outcomes(&self, s: f64) -> Dataset {
        let mut out = self.clone();
        out.outcomes.iter_mut().for_each(|v| *v *= s);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Dataset {
        Dataset::new(
            vec![1.0, 2.0, 3.0],
            1,
            vec![Label(0), Label(1), Label(0)],
            vec!["0".into(), "1".into()],
            vec![0.5, 0.1, 0.2],
            1,
            None,
        )
        .unwrap()
    }

    #[test]
    fn accessors_follow_rows() {
        let data = tiny();
        assert_eq!(data.n(), 3);
        assert_eq!(data.y(1), &[2.0]);
        assert_eq!(data.x(2), &[0.2]);
        assert_eq!(data.d(1), Label(1));
        assert_eq!(data.label_counts(), vec![2, 1]);
        let sub = data.subset(&[2, 0]);
        assert_eq!(sub.y(0), &[3.0]);
        assert_eq!(sub.x(1), &[0.5]);
    }

    #[test]
    fn rejects_bad_blocks() {
        let err = Dataset::new(
            vec![1.0, f64::NAN],
            1,
            vec![Label(0); 2],
            vec!["a".into()],
            vec![],
            0,
            None,
        );
        assert!(matches!(err, Err(DmlError::Validation(_))));
        let err = Dataset::new(
            vec![1.0],
            1,
            vec![Label(3)],
            vec!["a".into()],
            vec![],
            0,
            None,
        );
        assert!(matches!(err, Err(DmlError::Validation(_))));
        let err = Dataset::new(vec![], 1, vec![], vec!["a".into()], vec![], 0, None);
        assert!(err.is_err());
    }
}
