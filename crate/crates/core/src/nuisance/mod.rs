//! Regression and Riesz representer estimation under cross-fitting.

mod crossfit;
mod design;
mod dictionary;
mod logistic;
mod propensity;
mod regression;
mod riesz;

pub use crossfit::{
    cross_fit, FoldFits, NuisanceFitSet, RegressionMethod, RieszMethod, TargetFit, TargetRecipe,
};
pub use dictionary::{BasisTerm, Dictionary, DictionarySpec};
pub use logistic::{LogitModel, NewtonOptions};
pub use propensity::{fit_propensity, fit_propensity_rows, PropensityFit};
pub use regression::{
    fit_distribution_regression, fit_regression, fit_regression_rows, RegressionFit, RidgeSystem,
};
pub use riesz::{
    riesz_automatic, riesz_automatic_rows, riesz_plugin, riesz_plugin_for, RieszFit, RieszKind,
    DEFAULT_CLIP_BOUND,
};
