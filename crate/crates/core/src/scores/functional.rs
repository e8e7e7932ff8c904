use serde::{Deserialize, Serialize};

use crate::error::{DmlError, Result};
use crate::model::{Label, NuisanceFn, OutcomeKind};

/// Deterministic treatment assignment rule `x -> {0, 1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicyRule {
    Always,
    Never,
    /// Treat when `x[covariate] > threshold` (or `<=` when `above` is false).
    Threshold {
        covariate: usize,
        threshold: f64,
        #[serde(default = "default_above")]
        above: bool,
    },
}

fn default_above() -> bool {
    true
}

impl PolicyRule {
    pub fn assign(&self, x: &[f64]) -> Result<f64> {
        match *self {
            PolicyRule::Always => Ok(1.0),
            PolicyRule::Never => Ok(0.0),
            PolicyRule::Threshold {
                covariate,
                threshold,
                above,
            } => {
                let v = x.get(covariate).ok_or_else(|| {
                    DmlError::Evaluation(format!(
                        "policy reads covariate {covariate} but the record has {}",
                        x.len()
                    ))
                })?;
                Ok(if (*v > threshold) == above { 1.0 } else { 0.0 })
            }
        }
    }
}

/// Coefficients `c_d(x)` in `m(w, gamma) = sum_d c_d(x) gamma(d, x)`.
///
/// Every implemented family evaluates the regression at no more than two
/// treatment labels, so the terms live inline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weights {
    terms: [(Label, f64); 2],
    len: usize,
}

impl Weights {
    fn one(d: Label, c: f64) -> Self {
        Self {
            terms: [(d, c), (d, 0.0)],
            len: 1,
        }
    }

    fn two(a: (Label, f64), b: (Label, f64)) -> Self {
        Self {
            terms: [a, b],
            len: 2,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (Label, f64)> + '_ {
        self.terms[..self.len].iter().copied()
    }

    /// Coefficient attached to label `d` (zero when absent).
    pub fn coefficient(&self, d: Label) -> f64 {
        self.iter().filter(|(l, _)| *l == d).map(|(_, c)| c).sum()
    }
}

/// A linear moment functional `gamma -> m(w, gamma)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum MomentFunctional {
    /// `gamma(treated, x) - gamma(control, x)` on outcome column 0.
    ManyTreatments { treated: Label, control: Label },
    /// `gamma_j(treated, x) - gamma_j(control, x)` on outcome column `outcome`.
    ManyOutcomes {
        outcome: usize,
        treated: Label,
        control: Label,
    },
    /// `gamma(control, x) + pi(x) (gamma(treated, x) - gamma(control, x))`.
    PolicyValue {
        policy: PolicyRule,
        treated: Label,
        control: Label,
    },
    /// `gamma_u(arm, x)` where `gamma_u` regresses `1{Y <= threshold}`.
    CdfAtPoint {
        arm: Label,
        outcome: usize,
        threshold: f64,
    },
}

/// A map `gamma -> m(w, gamma)` that is linear in `gamma`.
pub trait LinearFunctional: Send + Sync {
    fn apply(&self, d: Label, x: &[f64], gamma: &dyn NuisanceFn) -> Result<f64>;
}

impl LinearFunctional for MomentFunctional {
    fn apply(&self, _d: Label, x: &[f64], gamma: &dyn NuisanceFn) -> Result<f64> {
        self.evaluate(x, gamma)
    }
}

/// `m(w, gamma) = gamma(w)`, whose representer is the constant 1.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityFunctional;

impl LinearFunctional for IdentityFunctional {
    fn apply(&self, d: Label, x: &[f64], gamma: &dyn NuisanceFn) -> Result<f64> {
        Ok(gamma.eval(d, x))
    }
}

/// Identifies functionals that share a Riesz representer.
#[derive(Debug, Clone, PartialEq)]
pub enum RepresenterKey {
    Contrast(Label, Label),
    Policy(PolicyRule, Label, Label),
    Arm(Label),
}

impl MomentFunctional {
    pub fn weights(&self, x: &[f64]) -> Result<Weights> {
        Ok(match self {
            MomentFunctional::ManyTreatments { treated, control }
            | MomentFunctional::ManyOutcomes {
                treated, control, ..
            } => Weights::two((*treated, 1.0), (*control, -1.0)),
            MomentFunctional::PolicyValue {
                policy,
                treated,
                control,
            } => {
                let pi = policy.assign(x)?;
                Weights::two((*treated, pi), (*control, 1.0 - pi))
            }
            MomentFunctional::CdfAtPoint { arm, .. } => Weights::one(*arm, 1.0),
        })
    }

    /// `m(w, gamma)` for the record with covariates `x`.
    #[inline]
    pub fn evaluate(&self, x: &[f64], gamma: &dyn NuisanceFn) -> Result<f64> {
        let w = self.weights(x)?;
        Ok(w.iter()
            .map(|(d, c)| if c == 0.0 { 0.0 } else { c * gamma.eval(d, x) })
            .sum())
    }

    pub fn outcome_kind(&self) -> OutcomeKind {
        match *self {
            MomentFunctional::ManyTreatments { .. } | MomentFunctional::PolicyValue { .. } => {
                OutcomeKind::Column(0)
            }
            MomentFunctional::ManyOutcomes { outcome, .. } => OutcomeKind::Column(outcome),
            MomentFunctional::CdfAtPoint {
                outcome, threshold, ..
            } => OutcomeKind::Below {
                column: outcome,
                threshold,
            },
        }
    }

    pub fn representer_key(&self) -> RepresenterKey {
        match self {
            MomentFunctional::ManyTreatments { treated, control }
            | MomentFunctional::ManyOutcomes {
                treated, control, ..
            } => RepresenterKey::Contrast(*treated, *control),
            MomentFunctional::PolicyValue {
                policy,
                treated,
                control,
            } => RepresenterKey::Policy(policy.clone(), *treated, *control),
            MomentFunctional::CdfAtPoint { arm, .. } => RepresenterKey::Arm(*arm),
        }
    }

    /// Checks labels and outcome indices against a dataset shape.
    pub fn validate(&self, n_labels: usize, p_y: usize) -> Result<()> {
        let check = |l: &Label| {
            if l.0 >= n_labels {
                Err(DmlError::Argument(format!(
                    "label index {} outside the label set",
                    l.0
                )))
            } else {
                Ok(())
            }
        };
        match self {
            MomentFunctional::ManyTreatments { treated, control }
            | MomentFunctional::ManyOutcomes {
                treated, control, ..
            }
            | MomentFunctional::PolicyValue {
                treated, control, ..
            } => {
                check(treated)?;
                check(control)?;
                if treated == control {
                    return Err(DmlError::Argument(
                        "treated and control labels coincide".into(),
                    ));
                }
            }
            MomentFunctional::CdfAtPoint { arm, threshold, .. } => {
                check(arm)?;
                if !threshold.is_finite() {
                    return Err(DmlError::Argument("CDF threshold must be finite".into()));
                }
            }
        }
        if self.outcome_kind().column() >= p_y {
            return Err(DmlError::Argument(format!(
                "outcome column {} outside the {p_y} available",
                self.outcome_kind().column()
            )));
        }
        Ok(())
    }

    pub fn describe(&self) -> String {
        match self {
            MomentFunctional::ManyTreatments { treated, control } => {
                format!("ate[d{}-d{}]", treated.0, control.0)
            }
            MomentFunctional::ManyOutcomes {
                outcome,
                treated,
                control,
            } => format!("ate[y{outcome}; d{}-d{}]", treated.0, control.0),
            MomentFunctional::PolicyValue { policy, .. } => match policy {
                PolicyRule::Always => "policy[always]".into(),
                PolicyRule::Never => "policy[never]".into(),
                PolicyRule::Threshold {
                    covariate,
                    threshold,
                    above,
                } => format!(
                    "policy[x{covariate} {} {threshold}]",
                    if *above { ">" } else { "<=" }
                ),
            },
            MomentFunctional::CdfAtPoint {
                arm,
                outcome,
                threshold,
            } => format!("cdf[y{outcome}(d{}) <= {threshold}]", arm.0),
        }
    }
}
