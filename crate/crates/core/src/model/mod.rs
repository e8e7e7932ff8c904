//! Data representation, data-generating processes and fold plans.

mod continuous;
mod csv_input;
mod data;
mod dgp;
mod folds;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use continuous::{normal_cdf, GaussianDgp, NoiseKind, OutcomeEquation};
pub use csv_input::{load_csv, CsvSchema};
pub use data::{Dataset, Label};
pub use dgp::{enumerate_expectation, generate_dataset, Atom, Dgp, DiscreteDgp};
pub use folds::{make_folds, FoldPlan};

/// A real function of the observed record `(d, x)`: regressions, Riesz
/// representers and dictionary terms all have this shape.
pub trait NuisanceFn: Send + Sync {
    fn eval(&self, d: Label, x: &[f64]) -> f64;
}

impl<F> NuisanceFn for F
where
    F: Fn(Label, &[f64]) -> f64 + Send + Sync,
{
    #[inline]
    fn eval(&self, d: Label, x: &[f64]) -> f64 {
        self(d, x)
    }
}

pub type SharedFn = Arc<dyn NuisanceFn>;

/// Conditional treatment probabilities `P(D = d | X = x)`.
pub trait Propensity: Send + Sync {
    fn prob(&self, d: Label, x: &[f64]) -> f64;
}

impl<F> Propensity for F
where
    F: Fn(Label, &[f64]) -> f64 + Send + Sync,
{
    #[inline]
    fn prob(&self, d: Label, x: &[f64]) -> f64 {
        self(d, x)
    }
}

/// Which transformation of the outcome row a target regresses on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    /// Outcome column `j`.
    Column(usize),
    /// Indicator `1{Y_j <= threshold}`.
    Below { column: usize, threshold: f64 },
}

impl OutcomeKind {
    #[inline]
    pub fn apply(&self, y: &[f64]) -> f64 {
        match *self {
            OutcomeKind::Column(j) => y[j],
            OutcomeKind::Below { column, threshold } => {
                if y[column] <= threshold {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn column(&self) -> usize {
        match *self {
            OutcomeKind::Column(j) => j,
            OutcomeKind::Below { column, .. } => column,
        }
    }

    pub fn is_binary(&self) -> bool {
        matches!(self, OutcomeKind::Below { .. })
    }
}
