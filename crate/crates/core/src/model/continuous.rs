use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use super::data::{Dataset, Label};
use super::dgp::Dgp;
use super::{OutcomeKind, Propensity, SharedFn};
use crate::error::{DmlError, Result};
use crate::numeric::{gaussian_expectation, sigmoid};
use crate::rng;
use crate::scores::{MomentFunctional, PolicyRule};

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Error distribution of the outcome equations (before scaling).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Gaussian,
    /// Standard logistic: distribution regression with a logit link is then
    /// correctly specified.
    Logistic,
    /// `Exp(1) - 1`, a skewed mean-zero law.
    CenteredExponential,
}

impl NoiseKind {
    pub fn cdf(self, t: f64) -> f64 {
        match self {
            NoiseKind::Gaussian => normal_cdf(t),
            NoiseKind::Logistic => sigmoid(t),
            NoiseKind::CenteredExponential => {
                if t <= -1.0 {
                    0.0
                } else {
                    -(-(t + 1.0)).exp_m1()
                }
            }
        }
    }

    pub fn variance(self) -> f64 {
        match self {
            NoiseKind::Gaussian | NoiseKind::CenteredExponential => 1.0,
            NoiseKind::Logistic => std::f64::consts::PI.powi(2) / 3.0,
        }
    }

    fn sample<R: Rng>(self, rng: &mut R) -> f64 {
        match self {
            NoiseKind::Gaussian => StandardNormal.sample(rng),
            NoiseKind::Logistic => {
                let u: f64 = rng.random::<f64>();
                // random() lies in [0, 1); reflect to avoid ln 0
                let u = if u == 0.0 { f64::MIN_POSITIVE } else { u };
                (u / (1.0 - u)).ln()
            }
            NoiseKind::CenteredExponential => {
                let e: f64 = Exp1.sample(rng);
                e - 1.0
            }
        }
    }
}

/// `Y_j = intercept + effect * 1{D = 1} + <slopes, X> + scale * eps_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeEquation {
    pub intercept: f64,
    pub effect: f64,
    pub slopes: Vec<f64>,
    pub scale: f64,
}

/// Binary treatment with Gaussian covariates, logistic propensity and linear
/// outcome equations with independent errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianDgp {
    pub covariates: usize,
    pub propensity_intercept: f64,
    pub propensity_slopes: Vec<f64>,
    pub outcomes: Vec<OutcomeEquation>,
    pub noise: NoiseKind,
    #[serde(skip, default = "binary_labels")]
    labels: Vec<String>,
}

fn binary_labels() -> Vec<String> {
    vec!["0".into(), "1".into()]
}

impl GaussianDgp {
    pub fn new(
        covariates: usize,
        propensity_intercept: f64,
        propensity_slopes: Vec<f64>,
        outcomes: Vec<OutcomeEquation>,
        noise: NoiseKind,
    ) -> Result<Self> {
        let dgp = Self {
            covariates,
            propensity_intercept,
            propensity_slopes,
            outcomes,
            noise,
            labels: binary_labels(),
        };
        dgp.validate()?;
        Ok(dgp)
    }

    pub fn validate(&self) -> Result<()> {
        if self.covariates == 0 {
            return Err(DmlError::Validation(
                "at least one covariate is required".into(),
            ));
        }
        if self.outcomes.is_empty() {
            return Err(DmlError::Validation(
                "at least one outcome equation is required".into(),
            ));
        }
        if self.propensity_slopes.len() != self.covariates {
            return Err(DmlError::Validation(
                "propensity slopes must match the covariate count".into(),
            ));
        }
        for (j, eq) in self.outcomes.iter().enumerate() {
            if eq.slopes.len() != self.covariates {
                return Err(DmlError::Validation(format!(
                    "outcome {j}: slopes must match the covariate count"
                )));
            }
            if !(eq.scale > 0.0 && eq.scale.is_finite()) {
                return Err(DmlError::Validation(format!(
                    "outcome {j}: scale must be positive"
                )));
            }
        }
        let finite = std::iter::once(self.propensity_intercept)
            .chain(self.propensity_slopes.iter().copied())
            .chain(self.outcomes.iter().flat_map(|e| {
                [e.intercept, e.effect]
                    .into_iter()
                    .chain(e.slopes.iter().copied())
            }))
            .all(f64::is_finite);
        if !finite {
            return Err(DmlError::Validation("DGP parameters must be finite".into()));
        }
        Ok(())
    }

    /// Three covariates and `p` outcome equations that differ only in their
    /// treatment effect, so oracle scores are uncorrelated across targets.
    pub fn independent_outcomes(p: usize, noise: NoiseKind) -> Self {
        let outcomes = (0..p)
            .map(|j| OutcomeEquation {
                intercept: 0.0,
                effect: 0.5 + 0.01 * j as f64,
                slopes: vec![1.0, 0.5, -0.5],
                scale: 1.0,
            })
            .collect();
        Self::new(3, 0.0, vec![0.5, -0.25, 0.25], outcomes, noise).expect("catalog DGP is valid")
    }

    fn index(&self, x: &[f64]) -> f64 {
        self.propensity_intercept + dot(&self.propensity_slopes, x)
    }

    fn mean(&self, j: usize, d: Label, x: &[f64]) -> f64 {
        let eq = &self.outcomes[j];
        eq.intercept + if d.0 == 1 { eq.effect } else { 0.0 } + dot(&eq.slopes, x)
    }

    /// Squared norm of the propensity slopes: the variance of the logit.
    fn logit_variance(&self) -> f64 {
        dot(&self.propensity_slopes, &self.propensity_slopes)
    }

    /// `E[1/P(D=1|X) + 1/P(D=0|X)]` in closed form.
    pub fn inverse_propensity_mass(&self) -> f64 {
        let s2 = self.logit_variance();
        let b0 = self.propensity_intercept;
        2.0 + (b0 + 0.5 * s2).exp() + (-b0 + 0.5 * s2).exp()
    }

    /// `P(Y_j(arm) <= u)`.
    pub fn potential_cdf(&self, j: usize, arm: Label, u: f64) -> f64 {
        let eq = &self.outcomes[j];
        let shift = eq.intercept + if arm.0 == 1 { eq.effect } else { 0.0 };
        let sd = dot(&eq.slopes, &eq.slopes).sqrt();
        let noise = self.noise;
        gaussian_expectation(|z| noise.cdf((u - shift - z) / eq.scale), 0.0, sd)
    }

    fn check_functional(&self, f: &MomentFunctional) -> Result<()> {
        f.validate(2, self.outcomes.len())?;
        if let MomentFunctional::PolicyValue {
            policy: PolicyRule::Threshold { covariate, .. },
            ..
        } = f
        {
            if *covariate >= self.covariates {
                return Err(DmlError::Argument(format!(
                    "policy covariate {covariate} out of range"
                )));
            }
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

impl Dgp for GaussianDgp {
    fn labels(&self) -> &[String] {
        &self.labels
    }

    fn outcome_dim(&self) -> usize {
        self.outcomes.len()
    }

    fn covariate_dim(&self) -> usize {
        self.covariates
    }

    fn generate(&self, n: usize, seed: u64) -> Result<Dataset> {
        if n == 0 {
            return Err(DmlError::Argument("sample size must be at least 1".into()));
        }
        let (k, p) = (self.covariates, self.outcomes.len());
        let mut rng = rng::stream(seed);
        let mut covariates = Vec::with_capacity(n * k);
        let mut outcomes = Vec::with_capacity(n * p);
        let mut treatment = Vec::with_capacity(n);
        let mut x = vec![0.0; k];
        for _ in 0..n {
            for v in x.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
            let d = Label(usize::from(rng.random::<f64>() < sigmoid(self.index(&x))));
            for (j, eq) in self.outcomes.iter().enumerate() {
                outcomes.push(self.mean(j, d, &x) + eq.scale * self.noise.sample(&mut rng));
            }
            covariates.extend_from_slice(&x);
            treatment.push(d);
        }
        Dataset::new(
            outcomes,
            p,
            treatment,
            self.labels.clone(),
            covariates,
            k,
            None,
        )
    }

    fn regression(&self, outcome: OutcomeKind) -> Result<SharedFn> {
        let j = outcome.column();
        if j >= self.outcomes.len() {
            return Err(DmlError::Argument(format!(
                "outcome column {j} out of range"
            )));
        }
        let me = self.clone();
        Ok(match outcome {
            OutcomeKind::Column(_) => Arc::new(move |d: Label, x: &[f64]| me.mean(j, d, x)),
            OutcomeKind::Below { threshold, .. } => Arc::new(move |d: Label, x: &[f64]| {
                me.noise
                    .cdf((threshold - me.mean(j, d, x)) / me.outcomes[j].scale)
            }),
        })
    }

    fn propensity(&self) -> Arc<dyn Propensity> {
        let me = self.clone();
        Arc::new(move |d: Label, x: &[f64]| {
            let p1 = sigmoid(me.index(x));
            match d.0 {
                1 => p1,
                0 => 1.0 - p1,
                _ => f64::NAN,
            }
        })
    }

    fn theta(&self, f: &MomentFunctional) -> Result<f64> {
        self.check_functional(f)?;
        Ok(match *f {
            MomentFunctional::ManyTreatments { treated, control }
            | MomentFunctional::ManyOutcomes {
                treated, control, ..
            } => {
                let eq = &self.outcomes[f.outcome_kind().column()];
                let arm = |l: Label| if l.0 == 1 { eq.effect } else { 0.0 };
                arm(treated) - arm(control)
            }
            MomentFunctional::PolicyValue {
                ref policy,
                treated,
                control,
            } => {
                let eq = &self.outcomes[0];
                let share = match *policy {
                    PolicyRule::Always => 1.0,
                    PolicyRule::Never => 0.0,
                    PolicyRule::Threshold {
                        threshold, above, ..
                    } => {
                        if above {
                            1.0 - normal_cdf(threshold)
                        } else {
                            normal_cdf(threshold)
                        }
                    }
                };
                let arm = |l: Label| if l.0 == 1 { eq.effect } else { 0.0 };
                eq.intercept + arm(control) + share * (arm(treated) - arm(control))
            }
            MomentFunctional::CdfAtPoint {
                arm,
                outcome,
                threshold,
            } => self.potential_cdf(outcome, arm, threshold),
        })
    }

    /// Closed form for treatment contrasts between the two arms; other
    /// families have no closed form here.
    fn oracle_covariance(&self, functionals: &[MomentFunctional]) -> Result<DMatrix<f64>> {
        let p = functionals.len();
        let mut columns = Vec::with_capacity(p);
        for f in functionals {
            self.check_functional(f)?;
            match *f {
                MomentFunctional::ManyTreatments { treated, .. }
                | MomentFunctional::ManyOutcomes { treated, .. } => {
                    let sign = if treated.0 == 1 { 1.0 } else { -1.0 };
                    columns.push((f.outcome_kind().column(), sign));
                }
                _ => {
                    return Err(DmlError::Precondition(format!(
                        "no closed-form oracle covariance for {}",
                        f.describe()
                    )))
                }
            }
        }
        let base = self.inverse_propensity_mass() * self.noise.variance();
        let mut cov = DMatrix::zeros(p, p);
        for a in 0..p {
            for b in 0..p {
                let (ja, sa) = columns[a];
                let (jb, sb) = columns[b];
                if ja == jb {
                    let s = self.outcomes[ja].scale;
                    cov[(a, b)] = sa * sb * s * s * base;
                }
            }
        }
        Ok(cov)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::mean;

    #[test]
    fn noise_laws_are_centered_with_stated_variance() {
        let mut rng = rng::stream(5);
        for kind in [
            NoiseKind::Gaussian,
            NoiseKind::Logistic,
            NoiseKind::CenteredExponential,
        ] {
            let draws: Vec<f64> = (0..200_000).map(|_| kind.sample(&mut rng)).collect();
            let m = mean(&draws);
            let v = draws.iter().map(|e| (e - m).powi(2)).sum::<f64>() / draws.len() as f64;
            assert!(m.abs() < 0.02, "{kind:?} mean {m}");
            assert!((v / kind.variance() - 1.0).abs() < 0.03, "{kind:?} var {v}");
            // CDF matches the empirical frequency at a central point
            let below = draws.iter().filter(|&&e| e <= 0.3).count() as f64 / draws.len() as f64;
            assert!((below - kind.cdf(0.3)).abs() < 0.01);
        }
    }

    #[test]
    fn closed_form_inverse_propensity_mass() {
        let dgp = GaussianDgp::independent_outcomes(1, NoiseKind::Gaussian);
        let data = dgp.generate(400_000, 3).unwrap();
        let prop = dgp.propensity();
        let vals: Vec<f64> = (0..data.n())
            .map(|i| 1.0 / prop.prob(Label(1), data.x(i)) + 1.0 / prop.prob(Label(0), data.x(i)))
            .collect();
        assert!((mean(&vals) / dgp.inverse_propensity_mass() - 1.0).abs() < 0.01);
    }

    #[test]
    fn cdf_truth_matches_simulation() {
        let dgp = GaussianDgp::independent_outcomes(1, NoiseKind::Logistic);
        let data = dgp.generate(200_000, 8).unwrap();
        let f = MomentFunctional::CdfAtPoint {
            arm: Label(1),
            outcome: 0,
            threshold: 0.7,
        };
        let truth = dgp.theta(&f).unwrap();
        let gamma = dgp.regression(f.outcome_kind()).unwrap();
        let plug: Vec<f64> = (0..data.n())
            .map(|i| gamma.eval(Label(1), data.x(i)))
            .collect();
        assert!((mean(&plug) - truth).abs() < 0.005);
        assert!(truth > 0.0 && truth < 1.0);
    }

    #[test]
    fn oracle_covariance_is_diagonal_for_distinct_outcomes() {
        let dgp = GaussianDgp::independent_outcomes(3, NoiseKind::Gaussian);
        let fs: Vec<_> = (0..3)
            .map(|j| MomentFunctional::ManyOutcomes {
                outcome: j,
                treated: Label(1),
                control: Label(0),
            })
            .collect();
        let cov = dgp.oracle_covariance(&fs).unwrap();
        assert_eq!(cov[(0, 1)], 0.0);
        assert!((cov[(2, 2)] - dgp.inverse_propensity_mass()).abs() < 1e-12);
        assert!((dgp.theta(&fs[2]).unwrap() - 0.52).abs() < 1e-12);
    }

    #[test]
    fn rejects_mismatched_parameters() {
        assert!(GaussianDgp::new(2, 0.0, vec![1.0], vec![], NoiseKind::Gaussian).is_err());
    }
}
