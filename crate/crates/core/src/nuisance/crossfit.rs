use std::sync::Arc;

use rayon::prelude::*;

use super::dictionary::Dictionary;
use super::logistic::NewtonOptions;
use super::propensity::{fit_propensity_rows, PropensityFit};
use super::regression::{fit_distribution_regression, RegressionFit, RidgeSystem};
use super::riesz::{riesz_automatic_rows, riesz_plugin_for, RieszFit};
use crate::error::{DmlError, Result};
use crate::model::{Dataset, FoldPlan, OutcomeKind, Propensity, SharedFn};
use crate::scores::{MomentFunctional, RepresenterKey};

/// How to estimate the regression of one target.
#[derive(Clone)]
pub enum RegressionMethod {
    Ridge {
        dictionary: Arc<Dictionary>,
        ridge: Option<f64>,
    },
    /// Logistic distribution regression; the outcome must be an indicator.
    Logistic {
        dictionary: Arc<Dictionary>,
        penalty: Option<f64>,
    },
    /// A known function (e.g. the truth in simulations).
    Fixed(SharedFn),
    /// Pick the candidate with the smallest squared error on the held-out
    /// fold; uses that fold once for selection.
    Select(Vec<RegressionMethod>),
}

/// How to estimate the Riesz representer of one target.
#[derive(Clone)]
pub enum RieszMethod {
    /// `c_d(x) / pi_hat(d | x)` with a multinomial-logit propensity.
    PlugIn {
        dictionary: Arc<Dictionary>,
        clip: f64,
        penalty: Option<f64>,
    },
    Automatic {
        dictionary: Arc<Dictionary>,
        ridge: Option<f64>,
    },
    Fixed(SharedFn),
}

#[derive(Clone)]
pub struct TargetRecipe {
    pub regression: RegressionMethod,
    pub riesz: RieszMethod,
    pub clip_bound: f64,
}

impl TargetRecipe {
    fn uses_data(&self) -> bool {
        !matches!(self.regression, RegressionMethod::Fixed(_))
            || !matches!(self.riesz, RieszMethod::Fixed(_))
    }
}

/// Fitted nuisances for one target on one fold.
#[derive(Debug, Clone)]
pub struct TargetFit {
    pub regression: Arc<RegressionFit>,
    pub riesz: Arc<RieszFit>,
    /// Index of the chosen candidate under [`RegressionMethod::Select`].
    pub selected: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct FoldFits {
    pub fold: usize,
    train_rows: Vec<usize>,
    targets: Vec<TargetFit>,
}

impl FoldFits {
    /// Rows the fits were trained on.
    pub fn train_rows(&self) -> &[usize] {
        &self.train_rows
    }

    pub fn targets(&self) -> &[TargetFit] {
        &self.targets
    }
}

/// Per-fold, per-target fits with their training provenance.
#[derive(Debug, Clone)]
pub struct NuisanceFitSet {
    n: usize,
    folds: Vec<FoldFits>,
    candidates: usize,
}

impl NuisanceFitSet {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn folds(&self) -> &[FoldFits] {
        &self.folds
    }

    pub fn n_targets(&self) -> usize {
        self.folds.first().map_or(0, |f| f.targets.len())
    }

    pub fn target(&self, fold: usize, j: usize) -> &TargetFit {
        &self.folds[fold].targets[j]
    }

    /// Entropy parameter `a_n = max(e, r)` for selection among `r` recipes
    /// (`e` under pure sample splitting).
    pub fn entropy_a_n(&self) -> f64 {
        (self.candidates as f64).max(std::f64::consts::E)
    }

    /// Replaces the recorded training rows of a fold; lets tests exercise
    /// the audit.
    #[doc(hidden)]
    pub fn overwrite_provenance(&mut self, fold: usize, rows: Vec<usize>) {
        self.folds[fold].train_rows = rows;
    }

    /// Checks that every fold's fits were trained on exactly the complement
    /// of that fold under `plan`.
    pub fn audit(&self, plan: &FoldPlan) -> Result<()> {
        if plan.n() != self.n || plan.folds() != self.folds.len() {
            return Err(DmlError::Audit(format!(
                "fit set covers n={} with {} folds but the plan has n={} with {} folds",
                self.n,
                self.folds.len(),
                plan.n(),
                plan.folds()
            )));
        }
        for (f, fits) in self.folds.iter().enumerate() {
            if fits.fold != f {
                return Err(DmlError::Audit(format!("fold {f} is stored out of order")));
            }
            if let Some(&i) = fits
                .train_rows
                .iter()
                .find(|&&i| i >= self.n || (!plan.is_pooled() && plan.fold_of(i) == f))
            {
                return Err(DmlError::Audit(format!(
                    "fold {f} was trained on row {i} of its own fold"
                )));
            }
            if fits.train_rows != plan.complement(f) {
                return Err(DmlError::Audit(format!(
                    "fold {f} training rows differ from its complement"
                )));
            }
        }
        Ok(())
    }
}

struct FoldCache<'a> {
    data: &'a Dataset,
    rows: &'a [usize],
    systems: Vec<((usize, Option<u64>), Arc<RidgeSystem>)>,
    propensities: Vec<((usize, u64, Option<u64>), Arc<PropensityFit>)>,
}

impl<'a> FoldCache<'a> {
    fn ridge_system(
        &mut self,
        dictionary: &Arc<Dictionary>,
        ridge: Option<f64>,
    ) -> Result<Arc<RidgeSystem>> {
        let key = (Arc::as_ptr(dictionary) as usize, ridge.map(f64::to_bits));
        if let Some((_, s)) = self.systems.iter().find(|(k, _)| *k == key) {
            return Ok(s.clone());
        }
        let s = Arc::new(RidgeSystem::new(
            self.data,
            self.rows,
            dictionary.clone(),
            ridge,
        )?);
        self.systems.push((key, s.clone()));
        Ok(s)
    }

    fn propensity(
        &mut self,
        dictionary: &Arc<Dictionary>,
        clip: f64,
        penalty: Option<f64>,
    ) -> Result<Arc<PropensityFit>> {
        let key = (
            Arc::as_ptr(dictionary) as usize,
            clip.to_bits(),
            penalty.map(f64::to_bits),
        );
        if let Some((_, p)) = self.propensities.iter().find(|(k, _)| *k == key) {
            return Ok(p.clone());
        }
        let options = NewtonOptions {
            penalty: penalty.unwrap_or(NewtonOptions::default().penalty),
            ..Default::default()
        };
        let p = Arc::new(fit_propensity_rows(
            self.data, self.rows, dictionary, clip, options,
        )?);
        self.propensities.push((key, p.clone()));
        Ok(p)
    }

    fn regression(
        &mut self,
        method: &RegressionMethod,
        outcome: OutcomeKind,
        holdout: &[usize],
    ) -> Result<(RegressionFit, Option<usize>)> {
        Ok(match method {
            RegressionMethod::Ridge { dictionary, ridge } => (
                self.ridge_system(dictionary, *ridge)?
                    .fit(self.data, self.rows, outcome)?,
                None,
            ),
            RegressionMethod::Logistic {
                dictionary,
                penalty,
            } => (
                fit_distribution_regression(self.data, self.rows, outcome, dictionary, *penalty)?,
                None,
            ),
            RegressionMethod::Fixed(f) => (RegressionFit::fixed(f.clone()), None),
            RegressionMethod::Select(candidates) => {
                if candidates.is_empty() {
                    return Err(DmlError::Argument(
                        "selection needs at least one candidate".into(),
                    ));
                }
                let mut best: Option<(f64, usize, RegressionFit)> = None;
                for (c, cand) in candidates.iter().enumerate() {
                    let (fit, _) = self.regression(cand, outcome, holdout)?;
                    let loss: f64 = holdout
                        .iter()
                        .map(|&i| {
                            let r = outcome.apply(self.data.y(i))
                                - fit.predict(self.data.d(i), self.data.x(i));
                            self.data.weight(i) * r * r
                        })
                        .sum();
                    if best.as_ref().is_none_or(|(l, _, _)| loss < *l) {
                        best = Some((loss, c, fit));
                    }
                }
                let (_, c, fit) = best.expect("nonempty candidates");
                (fit, Some(c))
            }
        })
    }

    fn riesz(
        &mut self,
        method: &RieszMethod,
        functional: &MomentFunctional,
        clip_bound: f64,
    ) -> Result<RieszFit> {
        match method {
            RieszMethod::PlugIn {
                dictionary,
                clip,
                penalty,
            } => {
                let p: Arc<dyn Propensity> = self.propensity(dictionary, *clip, *penalty)?;
                riesz_plugin_for(p, functional, clip_bound)
            }
            RieszMethod::Automatic { dictionary, ridge } => riesz_automatic_rows(
                self.data, self.rows, functional, dictionary, *ridge, clip_bound,
            ),
            RieszMethod::Fixed(f) => RieszFit::fixed(f.clone(), clip_bound),
        }
    }
}

fn candidate_count(method: &RegressionMethod) -> usize {
    match method {
        RegressionMethod::Select(c) => c.len(),
        _ => 1,
    }
}

/// Fits every target's nuisances on each fold's complement.
///
/// `recipes` holds either one recipe shared by all targets or one per
/// target. Fits that share a dictionary, outcome or representer are
/// computed once per fold.
pub fn cross_fit(
    data: &Dataset,
    plan: &FoldPlan,
    functionals: &[MomentFunctional],
    recipes: &[TargetRecipe],
) -> Result<NuisanceFitSet> {
    if plan.n() != data.n() {
        return Err(DmlError::Argument(format!(
            "fold plan covers {} rows but the data have {}",
            plan.n(),
            data.n()
        )));
    }
    if functionals.is_empty() {
        return Err(DmlError::Argument("at least one target is required".into()));
    }
    if recipes.len() != 1 && recipes.len() != functionals.len() {
        return Err(DmlError::Argument(format!(
            "expected 1 or {} nuisance recipes, got {}",
            functionals.len(),
            recipes.len()
        )));
    }
    for f in functionals {
        f.validate(data.labels().len(), data.outcome_dim())?;
    }
    let recipe_of = |j: usize| if recipes.len() == 1 { 0 } else { j };
    let uses_data = recipes.iter().any(TargetRecipe::uses_data);
    let folds: Vec<FoldFits> = (0..plan.folds())
        .into_par_iter()
        .map(|f| -> Result<FoldFits> {
            let train = plan.complement(f);
            let holdout = plan.members(f);
            if uses_data {
                let mut seen = vec![false; data.labels().len()];
                for &i in &train {
                    seen[data.d(i).0] = true;
                }
                if let Some(l) = seen.iter().position(|s| !s) {
                    return Err(DmlError::Estimation(format!(
                        "fold {f}: treatment label \"{}\" is absent from the training complement",
                        data.labels()[l]
                    )));
                }
            }
            let mut cache = FoldCache {
                data,
                rows: &train,
                systems: Vec::new(),
                propensities: Vec::new(),
            };
            let mut regressions: Vec<((usize, OutcomeKind), (Arc<RegressionFit>, Option<usize>))> =
                Vec::new();
            let mut representers: Vec<((usize, RepresenterKey), Arc<RieszFit>)> = Vec::new();
            let mut targets = Vec::with_capacity(functionals.len());
            for (j, functional) in functionals.iter().enumerate() {
                let r = recipe_of(j);
                let recipe = &recipes[r];
                let outcome = functional.outcome_kind();
                let (regression, selected) =
                    match regressions.iter().find(|(k, _)| *k == (r, outcome)) {
                        Some((_, v)) => v.clone(),
                        None => {
                            let (fit, sel) = cache
                                .regression(&recipe.regression, outcome, &holdout)
                                .map_err(|e| with_fold(e, f, functional))?;
                            let v = (Arc::new(fit), sel);
                            regressions.push(((r, outcome), v.clone()));
                            v
                        }
                    };
                let key = (r, functional.representer_key());
                let riesz = match representers.iter().find(|(k, _)| *k == key) {
                    Some((_, v)) => v.clone(),
                    None => {
                        let fit = Arc::new(
                            cache
                                .riesz(&recipe.riesz, functional, recipe.clip_bound)
                                .map_err(|e| with_fold(e, f, functional))?,
                        );
                        representers.push((key, fit.clone()));
                        fit
                    }
                };
                targets.push(TargetFit {
                    regression,
                    riesz,
                    selected,
                });
            }
            Ok(FoldFits {
                fold: f,
                train_rows: train,
                targets,
            })
        })
        .collect::<Result<_>>()?;
    let candidates = recipes
        .iter()
        .map(|r| candidate_count(&r.regression))
        .max()
        .unwrap_or(1);
    Ok(NuisanceFitSet {
        n: data.n(),
        folds,
        candidates,
    })
}

fn with_fold(e: DmlError, fold: usize, functional: &MomentFunctional) -> DmlError {
    match e {
        DmlError::Estimation(msg) => {
            DmlError::Estimation(format!("fold {fold}, {}: {msg}", functional.describe()))
        }
        other => other,
    }
}
