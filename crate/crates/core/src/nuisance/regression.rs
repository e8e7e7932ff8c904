use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::design::Design;
use super::dictionary::Dictionary;
use super::logistic::{fit_logit, LogitModel, NewtonOptions};
use crate::error::{DmlError, Result};
use crate::model::{Dataset, Label, NuisanceFn, OutcomeKind, SharedFn};
use crate::numeric::{check_conditioning, sigmoid};

#[derive(Clone)]
enum Form {
    Linear {
        coefficients: Vec<f64>,
        dictionary: Arc<Dictionary>,
    },
    Logit {
        model: LogitModel,
        dictionary: Arc<Dictionary>,
    },
    Constant(f64),
    Fixed(SharedFn),
}

/// A fitted regression `gamma_hat(d, x)`.
#[derive(Clone)]
pub struct RegressionFit {
    form: Form,
    ridge: f64,
}

impl std::fmt::Debug for RegressionFit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match &self.form {
            Form::Linear { coefficients, .. } => format!("linear{coefficients:?}"),
            Form::Logit { .. } => "logit".into(),
            Form::Constant(c) => format!("constant({c})"),
            Form::Fixed(_) => "fixed".into(),
        };
        write!(f, "RegressionFit({kind}, ridge={})", self.ridge)
    }
}

impl RegressionFit {
    /// Wraps a known function, such as the true regression.
    pub fn fixed(f: SharedFn) -> Self {
        Self {
            form: Form::Fixed(f),
            ridge: 0.0,
        }
    }

    pub fn constant(value: f64) -> Self {
        Self {
            form: Form::Constant(value),
            ridge: 0.0,
        }
    }

    /// Least-squares coefficients, or the logit index coefficients for a
    /// distribution regression.
    pub fn coefficients(&self) -> Option<&[f64]> {
        match &self.form {
            Form::Linear { coefficients, .. } => Some(coefficients),
            Form::Logit { model, .. } => Some(model.coefficients(1)),
            _ => None,
        }
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    #[inline]
    pub fn predict(&self, d: Label, x: &[f64]) -> f64 {
        match &self.form {
            Form::Linear {
                coefficients,
                dictionary,
            } => dictionary.dot(coefficients, d, x),
            Form::Logit { model, dictionary } => {
                sigmoid(dictionary.dot(model.coefficients(1), d, x))
            }
            Form::Constant(c) => *c,
            Form::Fixed(f) => f.eval(d, x),
        }
    }
}

impl NuisanceFn for RegressionFit {
    #[inline]
    fn eval(&self, d: Label, x: &[f64]) -> f64 {
        self.predict(d, x)
    }
}

/// Scale-free default: `1e-6 trace(G) / dim`.
fn default_ridge(gram: &DMatrix<f64>) -> f64 {
    1e-6 * gram.trace() / gram.nrows() as f64
}

/// Normal equations of a weighted ridge regression, factorized once and
/// reusable across outcomes that share the rows and dictionary.
pub struct RidgeSystem {
    design: Design,
    dictionary: Arc<Dictionary>,
    factor: Cholesky<f64, Dyn>,
    ridge: f64,
}

impl RidgeSystem {
    pub fn new(
        data: &Dataset,
        rows: &[usize],
        dictionary: Arc<Dictionary>,
        ridge: Option<f64>,
    ) -> Result<Self> {
        dictionary.check_covariates(data.covariate_dim())?;
        if let Some(r) = ridge {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(DmlError::Argument(format!(
                    "ridge must be a nonnegative real, got {r}"
                )));
            }
        }
        if rows.is_empty() {
            return Err(DmlError::Estimation("regression on zero rows".into()));
        }
        let design = Design::new(data, rows, &dictionary);
        if !design.is_finite() {
            return Err(DmlError::Estimation(
                "design matrix has non-finite entries".into(),
            ));
        }
        let mut gram = design.gram();
        let ridge = ridge.unwrap_or_else(|| default_ridge(&gram));
        if ridge == 0.0 {
            check_conditioning(&gram, "regression")?;
        }
        for j in 1..gram.nrows() {
            gram[(j, j)] += ridge;
        }
        let factor = gram.cholesky().ok_or_else(|| {
            DmlError::Rank(
                "regression: normal equations are not positive definite; use a positive ridge"
                    .into(),
            )
        })?;
        Ok(Self {
            design,
            dictionary,
            factor,
            ridge,
        })
    }

    pub fn fit(
        &self,
        data: &Dataset,
        rows: &[usize],
        outcome: OutcomeKind,
    ) -> Result<RegressionFit> {
        let dim = self.design.dim;
        let mut rhs = DVector::zeros(dim);
        for (r, &i) in rows.iter().enumerate() {
            let wy = self.design.weights[r] * outcome.apply(data.y(i));
            for (j, b) in self.design.row(r).iter().enumerate() {
                rhs[j] += wy * b;
            }
        }
        let coef = self.factor.solve(&rhs);
        if coef.iter().any(|c| !c.is_finite()) {
            return Err(DmlError::Estimation(
                "regression produced non-finite coefficients".into(),
            ));
        }
        Ok(RegressionFit {
            form: Form::Linear {
                coefficients: coef.iter().copied().collect(),
                dictionary: self.dictionary.clone(),
            },
            ridge: self.ridge,
        })
    }
}

/// Weighted ridge regression of an outcome on the dictionary.
///
/// Minimizes `sum_i w_i (y_i - <b, basis_i>)^2 + ridge |b_{-0}|^2` where the
/// constant is unpenalized; `None` selects `1e-6 trace(G) / dim`.
pub fn fit_regression(
    data: &Dataset,
    outcome: OutcomeKind,
    dictionary: &Arc<Dictionary>,
    ridge: Option<f64>,
) -> Result<RegressionFit> {
    let rows: Vec<usize> = (0..data.n()).collect();
    fit_regression_rows(data, &rows, outcome, dictionary, ridge)
}

pub fn fit_regression_rows(
    data: &Dataset,
    rows: &[usize],
    outcome: OutcomeKind,
    dictionary: &Arc<Dictionary>,
    ridge: Option<f64>,
) -> Result<RegressionFit> {
    check_outcome(data, outcome)?;
    RidgeSystem::new(data, rows, dictionary.clone(), ridge)?.fit(data, rows, outcome)
}

/// Logistic regression of the binary outcome on the dictionary.
///
/// When every training outcome is identical the fit is that constant.
pub fn fit_distribution_regression(
    data: &Dataset,
    rows: &[usize],
    outcome: OutcomeKind,
    dictionary: &Arc<Dictionary>,
    penalty: Option<f64>,
) -> Result<RegressionFit> {
    check_outcome(data, outcome)?;
    dictionary.check_covariates(data.covariate_dim())?;
    let targets: Vec<f64> = rows.iter().map(|&i| outcome.apply(data.y(i))).collect();
    if targets.iter().any(|&t| t != 0.0 && t != 1.0) {
        return Err(DmlError::Argument(
            "logistic regression needs a binary outcome".into(),
        ));
    }
    if rows.is_empty() {
        return Err(DmlError::Estimation("regression on zero rows".into()));
    }
    if targets.iter().all(|&t| t == targets[0]) {
        return Ok(RegressionFit::constant(targets[0]));
    }
    let design = Design::new(data, rows, dictionary);
    let classes: Vec<usize> = targets.iter().map(|&t| t as usize).collect();
    let options = NewtonOptions {
        penalty: penalty.unwrap_or(NewtonOptions::default().penalty),
        ..Default::default()
    };
    let model = fit_logit(&design, &classes, 2, options)?;
    Ok(RegressionFit {
        form: Form::Logit {
            model,
            dictionary: dictionary.clone(),
        },
        ridge: options.penalty,
    })
}

fn check_outcome(data: &Dataset, outcome: OutcomeKind) -> Result<()> {
    if outcome.column() >= data.outcome_dim() {
        return Err(DmlError::Argument(format!(
            "outcome column {} outside the {} available",
            outcome.column(),
            data.outcome_dim()
        )));
    }
    Ok(())
}
