//! Moment functionals, orthogonal scores and exact diagnostics.

mod diagnostics;
mod functional;
mod score;

pub use diagnostics::{
    check_orthogonality, double_robustness_residual, expected_score, oracle_decomposition,
    orthogonality_at, OracleDecomposition,
};
pub use functional::{
    IdentityFunctional, LinearFunctional, MomentFunctional, PolicyRule, RepresenterKey, Weights,
};
pub use score::{orthogonal_score, ScoreMatrix};

/// `m(w, gamma)` for the record with covariates `x`.
pub fn moment_value(
    functional: &MomentFunctional,
    x: &[f64],
    gamma: &dyn crate::model::NuisanceFn,
) -> crate::Result<f64> {
    functional.evaluate(x, gamma)
}
