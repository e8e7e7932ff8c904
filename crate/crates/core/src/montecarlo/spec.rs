use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{DmlError, Result};
use crate::inference::{cdf_functionals, Sided};
use crate::model::{Dgp, DiscreteDgp, GaussianDgp, Label, NoiseKind};
use crate::nuisance::{
    Dictionary, DictionarySpec, RegressionMethod, RieszMethod, TargetRecipe, DEFAULT_CLIP_BOUND,
};
use crate::scores::MomentFunctional;

/// A named DGP from the catalog or a user-specified Gaussian design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum DgpSpec {
    ConfoundedBinary,
    ThreeArm,
    RareOutcome,
    IndependentOutcomes { p: usize, noise: NoiseKind },
    Gaussian { design: GaussianDgp },
}

impl DgpSpec {
    pub fn build(&self) -> Result<Arc<dyn Dgp>> {
        Ok(match self {
            DgpSpec::ConfoundedBinary => Arc::new(DiscreteDgp::confounded_binary()),
            DgpSpec::ThreeArm => Arc::new(DiscreteDgp::three_arm()),
            DgpSpec::RareOutcome => Arc::new(DiscreteDgp::rare_outcome()),
            DgpSpec::IndependentOutcomes { p, noise } => {
                if *p == 0 {
                    return Err(DmlError::Validation("dgp.p must be at least 1".into()));
                }
                Arc::new(GaussianDgp::independent_outcomes(*p, *noise))
            }
            DgpSpec::Gaussian { design } => {
                let d = GaussianDgp::new(
                    design.covariates,
                    design.propensity_intercept,
                    design.propensity_slopes.clone(),
                    design.outcomes.clone(),
                    design.noise,
                )?;
                Arc::new(d)
            }
        })
    }
}

/// The family of targets estimated in each replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    /// One treatment contrast per outcome column.
    Contrasts {
        #[serde(default = "one")]
        treated: Label,
        #[serde(default)]
        control: Label,
    },
    /// `F_{Y(arm)}` on a grid.
    Cdf {
        arm: Label,
        #[serde(default)]
        outcome: usize,
        grid: Vec<f64>,
    },
    Explicit {
        functionals: Vec<MomentFunctional>,
    },
}

fn one() -> Label {
    Label(1)
}

impl TargetSpec {
    pub fn functionals(&self, dgp: &dyn Dgp) -> Result<Vec<MomentFunctional>> {
        self.functionals_for(dgp.labels().len(), dgp.outcome_dim())
    }

    /// Targets for data with `n_labels` treatment labels and `outcome_dim`
    /// outcome columns.
    pub fn functionals_for(
        &self,
        n_labels: usize,
        outcome_dim: usize,
    ) -> Result<Vec<MomentFunctional>> {
        let fs = match self {
            TargetSpec::Contrasts { treated, control } => (0..outcome_dim)
                .map(|outcome| MomentFunctional::ManyOutcomes {
                    outcome,
                    treated: *treated,
                    control: *control,
                })
                .collect(),
            TargetSpec::Cdf { arm, outcome, grid } => {
                crate::inference::check_grid(grid)?;
                cdf_functionals(*arm, *outcome, grid)
            }
            TargetSpec::Explicit { functionals } => functionals.clone(),
        };
        if fs.is_empty() {
            return Err(DmlError::Validation(
                "at least one target is required".into(),
            ));
        }
        for f in &fs {
            f.validate(n_labels, outcome_dim)?;
        }
        Ok(fs)
    }

    pub fn is_cdf(&self) -> bool {
        matches!(self, TargetSpec::Cdf { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RieszSpec {
    /// Coefficients over a logistic propensity.
    #[default]
    PlugIn,
    Automatic {
        ridge: Option<f64>,
    },
}

/// Deliberate misspecification of the representer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlphaPerturbation {
    /// `factor * alpha_0`.
    Scale { factor: f64 },
    /// `value * c_d(x)`: ignores the propensity entirely.
    Constant { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NuisanceSpec {
    /// True regression and representer.
    Oracle,
    CrossFit {
        #[serde(default)]
        dictionary: DictionarySpec,
        #[serde(default)]
        ridge: Option<f64>,
        #[serde(default)]
        riesz: RieszSpec,
        #[serde(default = "default_clip")]
        clip: f64,
        /// Logistic regression for indicator outcomes.
        #[serde(default = "yes")]
        distribution_regression: bool,
    },
    /// Truth shifted by a constant for the regression and perturbed per
    /// `alpha` for the representer.
    Perturbed {
        #[serde(default)]
        gamma_shift: f64,
        alpha: AlphaPerturbation,
    },
}

fn default_clip() -> f64 {
    0.01
}

fn yes() -> bool {
    true
}

impl Default for NuisanceSpec {
    fn default() -> Self {
        NuisanceSpec::CrossFit {
            dictionary: DictionarySpec::default(),
            ridge: None,
            riesz: RieszSpec::PlugIn,
            clip: default_clip(),
            distribution_regression: true,
        }
    }
}

impl NuisanceSpec {
    /// Recipes with the truth taken from `dgp`.
    pub fn recipes(
        &self,
        dgp: &dyn Dgp,
        functionals: &[MomentFunctional],
        cdf: bool,
    ) -> Result<Vec<TargetRecipe>> {
        self.recipes_for(
            dgp.covariate_dim(),
            dgp.labels().len(),
            Some(dgp),
            functionals,
            cdf,
        )
    }

    /// Recipes for data of the given shape; `truth` is needed only by the
    /// oracle and perturbed variants.
    pub fn recipes_for(
        &self,
        covariates: usize,
        n_labels: usize,
        truth: Option<&dyn Dgp>,
        functionals: &[MomentFunctional],
        cdf: bool,
    ) -> Result<Vec<TargetRecipe>> {
        let need_truth = || {
            truth.ok_or_else(|| {
                DmlError::Validation(
                    "nuisance.kind oracle/perturbed needs a simulated data source".into(),
                )
            })
        };
        match self {
            NuisanceSpec::Oracle => {
                let dgp = need_truth()?;
                functionals
                    .iter()
                    .map(|f| {
                        Ok(TargetRecipe {
                            regression: RegressionMethod::Fixed(dgp.regression(f.outcome_kind())?),
                            riesz: RieszMethod::Fixed(dgp.riesz(f)?),
                            clip_bound: f64::INFINITY,
                        })
                    })
                    .collect()
            }
            NuisanceSpec::Perturbed { gamma_shift, alpha } => {
                let dgp = need_truth()?;
                if !gamma_shift.is_finite() {
                    return Err(DmlError::Validation(
                        "nuisance.gamma_shift must be finite".into(),
                    ));
                }
                functionals
                    .iter()
                    .map(|f| {
                        let g0 = dgp.regression(f.outcome_kind())?;
                        let shift = *gamma_shift;
                        let gamma: crate::model::SharedFn =
                            Arc::new(move |d: Label, x: &[f64]| g0.eval(d, x) + shift);
                        let alpha: crate::model::SharedFn = match *alpha {
                            AlphaPerturbation::Scale { factor } => {
                                let a0 = dgp.riesz(f)?;
                                Arc::new(move |d: Label, x: &[f64]| factor * a0.eval(d, x))
                            }
                            AlphaPerturbation::Constant { value } => {
                                let f = f.clone();
                                Arc::new(move |d: Label, x: &[f64]| {
                                    f.weights(x).map_or(f64::NAN, |w| value * w.coefficient(d))
                                })
                            }
                        };
                        Ok(TargetRecipe {
                            regression: RegressionMethod::Fixed(gamma),
                            riesz: RieszMethod::Fixed(alpha),
                            clip_bound: f64::INFINITY,
                        })
                    })
                    .collect()
            }
            NuisanceSpec::CrossFit {
                dictionary,
                ridge,
                riesz,
                clip,
                distribution_regression,
            } => {
                let dict = Arc::new(Dictionary::from_spec(dictionary, covariates, n_labels)?);
                let regression = if cdf && *distribution_regression {
                    RegressionMethod::Logistic {
                        dictionary: dict.clone(),
                        penalty: None,
                    }
                } else {
                    RegressionMethod::Ridge {
                        dictionary: dict.clone(),
                        ridge: *ridge,
                    }
                };
                let riesz = match *riesz {
                    RieszSpec::PlugIn => RieszMethod::PlugIn {
                        dictionary: dict,
                        clip: *clip,
                        penalty: None,
                    },
                    RieszSpec::Automatic { ridge } => RieszMethod::Automatic {
                        dictionary: dict,
                        ridge,
                    },
                };
                Ok(vec![TargetRecipe {
                    regression,
                    riesz,
                    clip_bound: DEFAULT_CLIP_BOUND,
                }])
            }
        }
    }
}

/// How the band half-width multiplier is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CriticalSpec {
    #[default]
    Sampled,
    Fixed {
        value: f64,
    },
    Infinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Coverage,
    Ks,
    DecompositionAudit,
}

/// A fully serializable experiment; its hash identifies the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub dgp: DgpSpec,
    pub n: usize,
    pub targets: TargetSpec,
    #[serde(default)]
    pub nuisance: NuisanceSpec,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_level")]
    pub level: f64,
    pub replications: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub mode: Mode,
    /// Gaussian draws behind each sampled critical value.
    #[serde(default = "default_draws")]
    pub draws: usize,
    /// Size of the Gaussian-max reference sample in `ks` mode.
    #[serde(default = "default_draws")]
    pub gaussian_draws: usize,
    #[serde(default)]
    pub critical_value: CriticalSpec,
    /// Side of the sup-t statistic in `ks` mode.
    #[serde(default = "one_sided")]
    pub sided: Sided,
}

fn default_folds() -> usize {
    5
}

fn default_level() -> f64 {
    0.95
}

fn default_draws() -> usize {
    100_000
}

fn one_sided() -> Sided {
    Sided::OneSided
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(DmlError::Validation(
                "replications must be at least 1".into(),
            ));
        }
        if self.folds < 2 {
            return Err(DmlError::Validation("folds must be at least 2".into()));
        }
        if self.n < 2 * self.folds {
            return Err(DmlError::Validation(format!(
                "n = {} is too small for {} folds",
                self.n, self.folds
            )));
        }
        crate::inference::check_level(self.level)?;
        if let CriticalSpec::Fixed { value } = self.critical_value {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(DmlError::Validation(
                    "critical_value.value must be finite and nonnegative".into(),
                ));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("spec serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
