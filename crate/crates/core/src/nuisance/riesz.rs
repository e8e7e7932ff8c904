use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::design::Design;
use super::dictionary::Dictionary;
use crate::error::{DmlError, Result};
use crate::model::{Dataset, Label, NuisanceFn, Propensity, SharedFn};
use crate::numeric::check_conditioning;
use crate::scores::{LinearFunctional, MomentFunctional};

/// Default bound on `|alpha_hat|`, the reciprocal of the default clip.
pub const DEFAULT_CLIP_BOUND: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RieszKind {
    PlugIn,
    Automatic,
    Fixed,
}

#[derive(Clone)]
enum Form {
    PlugIn {
        propensity: Arc<dyn Propensity>,
        functional: MomentFunctional,
    },
    Linear {
        coefficients: Vec<f64>,
        dictionary: Arc<Dictionary>,
    },
    Fixed(SharedFn),
}

/// A fitted representer, clipped to `[-clip_bound, clip_bound]`.
#[derive(Clone)]
pub struct RieszFit {
    form: Form,
    clip_bound: f64,
}

impl std::fmt::Debug for RieszFit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "RieszFit({:?}, clip_bound={})",
            self.kind(),
            self.clip_bound
        )
    }
}

impl RieszFit {
    pub fn fixed(f: SharedFn, clip_bound: f64) -> Result<Self> {
        check_bound(clip_bound)?;
        Ok(Self {
            form: Form::Fixed(f),
            clip_bound,
        })
    }

    pub fn kind(&self) -> RieszKind {
        match self.form {
            Form::PlugIn { .. } => RieszKind::PlugIn,
            Form::Linear { .. } => RieszKind::Automatic,
            Form::Fixed(_) => RieszKind::Fixed,
        }
    }

    pub fn clip_bound(&self) -> f64 {
        self.clip_bound
    }

    pub fn coefficients(&self) -> Option<&[f64]> {
        match &self.form {
            Form::Linear { coefficients, .. } => Some(coefficients),
            _ => None,
        }
    }

    /// Representer before clipping.
    pub fn raw(&self, d: Label, x: &[f64]) -> f64 {
        match &self.form {
            Form::PlugIn {
                propensity,
                functional,
            } => match functional.weights(x) {
                Ok(w) => {
                    let c = w.coefficient(d);
                    if c == 0.0 {
                        0.0
                    } else {
                        c / propensity.prob(d, x)
                    }
                }
                Err(_) => f64::NAN,
            },
            Form::Linear {
                coefficients,
                dictionary,
            } => dictionary.dot(coefficients, d, x),
            Form::Fixed(f) => f.eval(d, x),
        }
    }

    #[inline]
    pub fn predict(&self, d: Label, x: &[f64]) -> f64 {
        self.raw(d, x).clamp(-self.clip_bound, self.clip_bound)
    }
}

impl NuisanceFn for RieszFit {
    #[inline]
    fn eval(&self, d: Label, x: &[f64]) -> f64 {
        self.predict(d, x)
    }
}

fn check_bound(clip_bound: f64) -> Result<()> {
    if clip_bound > 0.0 {
        Ok(())
    } else {
        Err(DmlError::Argument(format!(
            "clip bound must be positive, got {clip_bound}"
        )))
    }
}

/// `1{d = treated}/pi_treated(x) - 1{d = control}/pi_control(x)`.
pub fn riesz_plugin(
    propensity: Arc<dyn Propensity>,
    treated: Label,
    control: Label,
    clip_bound: f64,
) -> Result<RieszFit> {
    if treated == control {
        return Err(DmlError::Argument(
            "treated and control labels coincide".into(),
        ));
    }
    riesz_plugin_for(
        propensity,
        &MomentFunctional::ManyTreatments { treated, control },
        clip_bound,
    )
}

/// `c_d(x) / pi_d(x)` for any family with coefficients `c_d(x)`.
pub fn riesz_plugin_for(
    propensity: Arc<dyn Propensity>,
    functional: &MomentFunctional,
    clip_bound: f64,
) -> Result<RieszFit> {
    check_bound(clip_bound)?;
    Ok(RieszFit {
        form: Form::PlugIn {
            propensity,
            functional: functional.clone(),
        },
        clip_bound,
    })
}

/// Dictionary least squares for the representer:
/// `b = (G + ridge I)^{-1} M` with `G = E_n[basis basis']` and
/// `M = E_n[m(W, basis)]`.
pub fn riesz_automatic(
    data: &Dataset,
    functional: &dyn LinearFunctional,
    dictionary: &Arc<Dictionary>,
    ridge: f64,
    clip_bound: f64,
) -> Result<RieszFit> {
    let rows: Vec<usize> = (0..data.n()).collect();
    riesz_automatic_rows(data, &rows, functional, dictionary, Some(ridge), clip_bound)
}

/// As [`riesz_automatic`] on a subset of rows; `None` selects the ridge
/// `1e-6 trace(G) / dim`.
pub fn riesz_automatic_rows(
    data: &Dataset,
    rows: &[usize],
    functional: &dyn LinearFunctional,
    dictionary: &Arc<Dictionary>,
    ridge: Option<f64>,
    clip_bound: f64,
) -> Result<RieszFit> {
    check_bound(clip_bound)?;
    dictionary.check_covariates(data.covariate_dim())?;
    if rows.is_empty() {
        return Err(DmlError::Estimation(
            "representer regression on zero rows".into(),
        ));
    }
    let design = Design::new(data, rows, dictionary);
    let n = design.n as f64;
    let mut g = design.gram() / n;
    let dim = dictionary.len();
    let mut m = DVector::zeros(dim);
    for (r, &i) in rows.iter().enumerate() {
        let w = design.weights[r] / n;
        for (j, term) in dictionary.terms().iter().enumerate() {
            let v = functional.apply(data.d(i), data.x(i), term)?;
            m[j] += w * v;
        }
    }
    if g.iter().chain(m.iter()).any(|v| !v.is_finite()) {
        return Err(DmlError::Evaluation(
            "representer moments are not finite".into(),
        ));
    }
    let ridge = match ridge {
        Some(r) if r >= 0.0 && r.is_finite() => r,
        Some(r) => {
            return Err(DmlError::Argument(format!(
                "ridge must be a nonnegative real, got {r}"
            )))
        }
        None => 1e-6 * g.trace() / dim as f64,
    };
    if ridge == 0.0 {
        check_conditioning(&g, "representer regression")?;
    }
    for j in 0..dim {
        g[(j, j)] += ridge;
    }
    let chol = g.cholesky().ok_or_else(|| {
        DmlError::Rank(
            "representer regression: Gram matrix is singular; use a positive ridge".into(),
        )
    })?;
    let b = chol.solve(&m);
    Ok(RieszFit {
        form: Form::Linear {
            coefficients: b.iter().copied().collect(),
            dictionary: dictionary.clone(),
        },
        clip_bound,
    })
}

impl NuisanceFn for super::dictionary::BasisTerm {
    #[inline]
    fn eval(&self, d: Label, x: &[f64]) -> f64 {
        super::dictionary::BasisTerm::eval(self, d, x)
    }
}
