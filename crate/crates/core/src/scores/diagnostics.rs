use serde::{Deserialize, Serialize};

use super::score::orthogonal_score;
use super::MomentFunctional;
use crate::error::{DmlError, Result};
use crate::model::{Dataset, Dgp, DiscreteDgp, FoldPlan, Label, NuisanceFn};
use crate::nuisance::NuisanceFitSet;
use crate::numeric::KahanSum;

/// Exact nuisances of a discrete DGP for one functional.
struct Truth {
    theta: f64,
    gamma: crate::model::SharedFn,
    alpha: crate::model::SharedFn,
}

fn truth(dgp: &DiscreteDgp, functional: &MomentFunctional) -> Result<Truth> {
    functional
        .validate(dgp.labels().len(), dgp.outcome_dim())
        .map_err(|e| DmlError::Precondition(e.to_string()))?;
    Ok(Truth {
        theta: dgp.theta(functional)?,
        gamma: dgp.regression(functional.outcome_kind())?,
        alpha: dgp.riesz(functional)?,
    })
}

/// `E_P[psi(W, theta, gamma, alpha)]` by enumeration.
pub fn expected_score(
    dgp: &DiscreteDgp,
    functional: &MomentFunctional,
    theta: f64,
    gamma: &dyn NuisanceFn,
    alpha: &dyn NuisanceFn,
) -> Result<f64> {
    let outcome = functional.outcome_kind();
    let mut err = None;
    let v = dgp.expectation(|y, d, x| {
        orthogonal_score(functional, d, x, outcome.apply(y), theta, gamma, alpha).unwrap_or_else(
            |e| {
                err.get_or_insert(e);
                f64::NAN
            },
        )
    });
    match err {
        Some(e) => Err(e),
        None => v,
    }
}

struct Shifted<'a> {
    base: &'a dyn NuisanceFn,
    direction: &'a dyn NuisanceFn,
    r: f64,
}

impl NuisanceFn for Shifted<'_> {
    fn eval(&self, d: Label, x: &[f64]) -> f64 {
        self.base.eval(d, x) + self.r * self.direction.eval(d, x)
    }
}

/// Central-difference Gateaux derivatives of the expected score at the
/// truth, in the directions `direction_gamma` and `direction_alpha`.
pub fn check_orthogonality(
    dgp: &DiscreteDgp,
    functional: &MomentFunctional,
    direction_gamma: &dyn NuisanceFn,
    direction_alpha: &dyn NuisanceFn,
    h: f64,
) -> Result<(f64, f64)> {
    let t = truth(dgp, functional)?;
    orthogonality_at(
        dgp,
        functional,
        t.theta,
        t.gamma.as_ref(),
        t.alpha.as_ref(),
        direction_gamma,
        direction_alpha,
        h,
    )
}

/// As [`check_orthogonality`] around arbitrary `(theta, gamma, alpha)`.
#[allow(clippy::too_many_arguments)]
pub fn orthogonality_at(
    dgp: &DiscreteDgp,
    functional: &MomentFunctional,
    theta: f64,
    gamma: &dyn NuisanceFn,
    alpha: &dyn NuisanceFn,
    direction_gamma: &dyn NuisanceFn,
    direction_alpha: &dyn NuisanceFn,
    h: f64,
) -> Result<(f64, f64)> {
    if !(h > 0.0 && h <= 0.1) {
        return Err(DmlError::Argument(format!(
            "step h must lie in (0, 0.1], got {h}"
        )));
    }
    let along_gamma = |r: f64| {
        let g = Shifted {
            base: gamma,
            direction: direction_gamma,
            r,
        };
        expected_score(dgp, functional, theta, &g, alpha)
    };
    let along_alpha = |r: f64| {
        let a = Shifted {
            base: alpha,
            direction: direction_alpha,
            r,
        };
        expected_score(dgp, functional, theta, gamma, &a)
    };
    let dg = (along_gamma(h)? - along_gamma(-h)?) / (2.0 * h);
    let da = (along_alpha(h)? - along_alpha(-h)?) / (2.0 * h);
    Ok((dg, da))
}

/// `(E_P[psi(W, theta_0, gamma, alpha)], -E_P[(alpha - alpha_0)(gamma - gamma_0)])`.
pub fn double_robustness_residual(
    dgp: &DiscreteDgp,
    functional: &MomentFunctional,
    gamma: &dyn NuisanceFn,
    alpha: &dyn NuisanceFn,
) -> Result<(f64, f64)> {
    let t = truth(dgp, functional)?;
    let lhs = expected_score(dgp, functional, t.theta, gamma, alpha)?;
    let rhs = -dgp.expectation(|_, d, x| {
        (alpha.eval(d, x) - t.alpha.eval(d, x)) * (gamma.eval(d, x) - t.gamma.eval(d, x))
    })?;
    Ok((lhs, rhs))
}

/// Split of `sqrt(n)(theta_hat - theta_0)` into the oracle term, three
/// centered empirical-process terms and the bias term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleDecomposition {
    pub target: String,
    /// `sqrt(n)(theta_hat - theta_0)`.
    pub total: f64,
    /// `sqrt(n)(theta_bar - theta_0)` with the oracle score.
    pub oracle_term: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    /// `oracle_term + a + b + c + d - total`.
    pub residual: f64,
    /// `sqrt(n) max_l ||alpha_hat_l - alpha_0||_2 ||gamma_hat_l - gamma_0||_2`.
    pub d_bound: f64,
    pub gamma_error_l2: f64,
    pub alpha_error_l2: f64,
}

impl OracleDecomposition {
    /// Tolerance of the exact identity.
    pub fn identity_holds(&self, tol: f64) -> bool {
        self.residual.abs() <= tol * (1.0 + self.total.abs())
    }
}

/// Exact decomposition of each cross-fitted estimate, with population
/// expectations taken over the DGP atoms and fitted functions held fixed.
pub fn oracle_decomposition(
    data: &Dataset,
    dgp: &DiscreteDgp,
    functionals: &[MomentFunctional],
    fits: &NuisanceFitSet,
    plan: &FoldPlan,
) -> Result<Vec<OracleDecomposition>> {
    fits.audit(plan)?;
    if fits.n_targets() != functionals.len() {
        return Err(DmlError::Argument(
            "fit set and functionals disagree on the number of targets".into(),
        ));
    }
    let n = data.n() as f64;
    let root_n = n.sqrt();
    let mut out = Vec::with_capacity(functionals.len());
    for (j, functional) in functionals.iter().enumerate() {
        let t = truth(dgp, functional)?;
        let outcome = functional.outcome_kind();
        let (g0, a0) = (t.gamma.as_ref(), t.alpha.as_ref());
        let mut hat = KahanSum::new();
        let mut bar = KahanSum::new();
        let (mut a_sum, mut b_sum, mut c_sum, mut d_sum) = (
            KahanSum::new(),
            KahanSum::new(),
            KahanSum::new(),
            KahanSum::new(),
        );
        let (mut worst, mut worst_g, mut worst_a) = (0.0f64, 0.0f64, 0.0f64);
        for fold in 0..plan.folds() {
            let fit = fits.target(fold, j);
            let (gh, ah) = (fit.regression.as_ref(), fit.riesz.as_ref());
            let dg = |d: Label, x: &[f64]| gh.eval(d, x) - g0.eval(d, x);
            let da = |d: Label, x: &[f64]| ah.eval(d, x) - a0.eval(d, x);
            let f_a = |d: Label, x: &[f64]| -> Result<f64> {
                Ok(functional.evaluate(x, &dg)? - a0.eval(d, x) * dg(d, x))
            };
            let f_b = |y: f64, d: Label, x: &[f64]| da(d, x) * (y - g0.eval(d, x));
            let f_c = |d: Label, x: &[f64]| -da(d, x) * dg(d, x);
            let mut err = None;
            let mean_a = dgp.expectation(|_, d, x| {
                f_a(d, x).unwrap_or_else(|e| {
                    err.get_or_insert(e);
                    f64::NAN
                })
            });
            if let Some(e) = err {
                return Err(e);
            }
            let mean_a = mean_a?;
            let mean_b = dgp.expectation(|y, d, x| f_b(outcome.apply(y), d, x))?;
            let mean_c = dgp.expectation(|_, d, x| f_c(d, x))?;
            let g_l2 = dgp.expectation(|_, d, x| dg(d, x).powi(2))?.sqrt();
            let a_l2 = dgp.expectation(|_, d, x| da(d, x).powi(2))?.sqrt();
            worst = worst.max(g_l2 * a_l2);
            worst_g = worst_g.max(g_l2);
            worst_a = worst_a.max(a_l2);
            let members = plan.members(fold);
            d_sum.add(members.len() as f64 * mean_c);
            for i in members {
                let (d, x) = (data.d(i), data.x(i));
                let y = outcome.apply(data.y(i));
                hat.add(orthogonal_score(functional, d, x, y, 0.0, gh, ah)?);
                bar.add(orthogonal_score(functional, d, x, y, 0.0, g0, a0)?);
                a_sum.add(f_a(d, x)? - mean_a);
                b_sum.add(f_b(y, d, x) - mean_b);
                c_sum.add(f_c(d, x) - mean_c);
            }
        }
        let total = root_n * (hat.total() / n - t.theta);
        let oracle_term = root_n * (bar.total() / n - t.theta);
        let (a, b, c, d) = (
            a_sum.total() / root_n,
            b_sum.total() / root_n,
            c_sum.total() / root_n,
            d_sum.total() / root_n,
        );
        out.push(OracleDecomposition {
            target: functional.describe(),
            total,
            oracle_term,
            a,
            b,
            c,
            d,
            residual: oracle_term + a + b + c + d - total,
            d_bound: root_n * worst,
            gamma_error_l2: worst_g,
            alpha_error_l2: worst_a,
        });
    }
    Ok(out)
}
