use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{DmlError, Result};
use crate::model::{Label, SharedFn};

/// One feature map `(d, x) -> R`.
#[derive(Clone)]
pub enum BasisTerm {
    Constant,
    /// `1{d = label}`.
    Indicator(Label),
    /// `x[covariate]^degree`.
    Power {
        covariate: usize,
        degree: u32,
    },
    /// `x[a] * x[b]`.
    Product {
        a: usize,
        b: usize,
    },
    /// `1{d = label} * x[covariate]^degree`.
    TreatedPower {
        label: Label,
        covariate: usize,
        degree: u32,
    },
    Custom {
        name: String,
        f: SharedFn,
        uses_treatment: bool,
    },
}

impl fmt::Debug for BasisTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl BasisTerm {
    #[inline]
    pub fn eval(&self, d: Label, x: &[f64]) -> f64 {
        match self {
            BasisTerm::Constant => 1.0,
            BasisTerm::Indicator(l) => f64::from(u8::from(d == *l)),
            BasisTerm::Power { covariate, degree } => x[*covariate].powi(*degree as i32),
            BasisTerm::Product { a, b } => x[*a] * x[*b],
            BasisTerm::TreatedPower {
                label,
                covariate,
                degree,
            } => {
                if d == *label {
                    x[*covariate].powi(*degree as i32)
                } else {
                    0.0
                }
            }
            BasisTerm::Custom { f, .. } => f.eval(d, x),
        }
    }

    pub fn uses_treatment(&self) -> bool {
        match self {
            BasisTerm::Indicator(_) | BasisTerm::TreatedPower { .. } => true,
            BasisTerm::Custom { uses_treatment, .. } => *uses_treatment,
            _ => false,
        }
    }

    pub fn name(&self) -> String {
        match self {
            BasisTerm::Constant => "1".into(),
            BasisTerm::Indicator(l) => format!("d={}", l.0),
            BasisTerm::Power {
                covariate,
                degree: 1,
            } => format!("x{covariate}"),
            BasisTerm::Power { covariate, degree } => format!("x{covariate}^{degree}"),
            BasisTerm::Product { a, b } => format!("x{a}*x{b}"),
            BasisTerm::TreatedPower {
                label,
                covariate,
                degree,
            } => {
                format!("[d={}]*x{covariate}^{degree}", label.0)
            }
            BasisTerm::Custom { name, .. } => name.clone(),
        }
    }

    fn max_covariate(&self) -> Option<usize> {
        match *self {
            BasisTerm::Power { covariate, .. } | BasisTerm::TreatedPower { covariate, .. } => {
                Some(covariate)
            }
            BasisTerm::Product { a, b } => Some(a.max(b)),
            _ => None,
        }
    }
}

/// How to build a dictionary from covariate and label counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DictionarySpec {
    /// Polynomial degree in each covariate.
    #[serde(default = "one")]
    pub degree: u32,
    /// Pairwise products of distinct covariates.
    #[serde(default)]
    pub interactions: bool,
    /// `1{d = l}` for every non-reference label.
    #[serde(default = "yes")]
    pub treatment_intercepts: bool,
    /// `1{d = l} x_c` for every non-reference label and covariate.
    #[serde(default)]
    pub treatment_slopes: bool,
}

fn one() -> u32 {
    1
}

fn yes() -> bool {
    true
}

impl Default for DictionarySpec {
    fn default() -> Self {
        Self {
            degree: 1,
            interactions: false,
            treatment_intercepts: true,
            treatment_slopes: false,
        }
    }
}

/// Ordered list of basis functions whose first entry is the constant.
#[derive(Debug, Clone)]
pub struct Dictionary {
    terms: Vec<BasisTerm>,
}

impl Dictionary {
    pub fn new(terms: Vec<BasisTerm>) -> Result<Self> {
        match terms.first() {
            Some(BasisTerm::Constant) => {}
            _ => {
                return Err(DmlError::Argument(
                    "the first dictionary term must be the constant".into(),
                ))
            }
        }
        if terms
            .iter()
            .skip(1)
            .any(|t| matches!(t, BasisTerm::Constant))
        {
            return Err(DmlError::Argument(
                "the constant may appear only once".into(),
            ));
        }
        Ok(Self { terms })
    }

    pub fn constant() -> Self {
        Self {
            terms: vec![BasisTerm::Constant],
        }
    }

    pub fn from_spec(spec: &DictionarySpec, covariates: usize, n_labels: usize) -> Result<Self> {
        if spec.degree > 8 {
            return Err(DmlError::Argument(
                "polynomial degree above 8 is not supported".into(),
            ));
        }
        let mut terms = vec![BasisTerm::Constant];
        if spec.treatment_intercepts {
            terms.extend((1..n_labels).map(|l| BasisTerm::Indicator(Label(l))));
        }
        for c in 0..covariates {
            for degree in 1..=spec.degree {
                terms.push(BasisTerm::Power {
                    covariate: c,
                    degree,
                });
            }
        }
        if spec.interactions {
            for a in 0..covariates {
                for b in a + 1..covariates {
                    terms.push(BasisTerm::Product { a, b });
                }
            }
        }
        if spec.treatment_slopes {
            for l in 1..n_labels {
                for c in 0..covariates {
                    terms.push(BasisTerm::TreatedPower {
                        label: Label(l),
                        covariate: c,
                        degree: 1,
                    });
                }
            }
        }
        Self::new(terms)
    }

    /// Indicators of every `(d, cell)` pair of a finite covariate support,
    /// reparametrized as constant plus all pairs but the first.
    pub fn saturated(cells: &[Vec<f64>], n_labels: usize) -> Self {
        let mut terms = vec![BasisTerm::Constant];
        for (ci, cell) in cells.iter().enumerate() {
            for l in 0..n_labels {
                if ci == 0 && l == 0 {
                    continue;
                }
                let point = cell.clone();
                let f: SharedFn = Arc::new(move |d: Label, x: &[f64]| {
                    f64::from(u8::from(
                        d.0 == l
                            && x.iter()
                                .zip(&point)
                                .all(|(a, b)| a.to_bits() == b.to_bits()),
                    ))
                });
                terms.push(BasisTerm::Custom {
                    name: format!("cell{ci},d={l}"),
                    f,
                    uses_treatment: true,
                });
            }
        }
        Self { terms }
    }

    /// Cell indicators without treatment: saturated for propensities.
    pub fn saturated_covariates(cells: &[Vec<f64>]) -> Self {
        let mut terms = vec![BasisTerm::Constant];
        for (ci, cell) in cells.iter().enumerate().skip(1) {
            let point = cell.clone();
            let f: SharedFn = Arc::new(move |_: Label, x: &[f64]| {
                f64::from(u8::from(
                    x.iter()
                        .zip(&point)
                        .all(|(a, b)| a.to_bits() == b.to_bits()),
                ))
            });
            terms.push(BasisTerm::Custom {
                name: format!("cell{ci}"),
                f,
                uses_treatment: false,
            });
        }
        Self { terms }
    }

    /// Terms that do not depend on the treatment label.
    pub fn covariate_part(&self) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .filter(|t| !t.uses_treatment())
                .cloned()
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[BasisTerm] {
        &self.terms
    }

    pub fn names(&self) -> Vec<String> {
        self.terms.iter().map(BasisTerm::name).collect()
    }

    /// Writes the basis at `(d, x)` into `out`.
    #[inline]
    pub fn eval_into(&self, d: Label, x: &[f64], out: &mut [f64]) {
        for (o, t) in out.iter_mut().zip(&self.terms) {
            *o = t.eval(d, x);
        }
    }

    pub fn eval(&self, d: Label, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.eval_into(d, x, &mut out);
        out
    }

    /// `<coefficients, basis(d, x)>` without allocating.
    #[inline]
    pub fn dot(&self, coefficients: &[f64], d: Label, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .zip(coefficients)
            .map(|(t, c)| c * t.eval(d, x))
            .sum()
    }

    /// Checks that every covariate index is in range.
    pub fn check_covariates(&self, k: usize) -> Result<()> {
        match self.terms.iter().filter_map(BasisTerm::max_covariate).max() {
            Some(c) if c >= k => Err(DmlError::Argument(format!(
                "dictionary references covariate {c} but the data have {k}"
            ))),
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_layout() {
        let spec = DictionarySpec {
            degree: 2,
            interactions: true,
            treatment_intercepts: true,
            treatment_slopes: true,
        };
        let dict = Dictionary::from_spec(&spec, 2, 3).unwrap();
        assert_eq!(
            dict.names(),
            [
                "1",
                "d=1",
                "d=2",
                "x0",
                "x0^2",
                "x1",
                "x1^2",
                "x0*x1",
                "[d=1]*x0^1",
                "[d=1]*x1^1",
                "[d=2]*x0^1",
                "[d=2]*x1^1"
            ]
        );
        let v = dict.eval(Label(2), &[2.0, -1.0]);
        assert_eq!(
            v,
            [1.0, 0.0, 1.0, 2.0, 4.0, -1.0, 1.0, -2.0, 0.0, 0.0, 2.0, -1.0]
        );
        assert_eq!(dict.covariate_part().len(), 6);
        assert!(dict.check_covariates(1).is_err());
    }

    #[test]
    fn constant_must_lead() {
        assert!(Dictionary::new(vec![BasisTerm::Power {
            covariate: 0,
            degree: 1
        }])
        .is_err());
        assert!(Dictionary::new(vec![BasisTerm::Constant, BasisTerm::Constant]).is_err());
    }

    #[test]
    fn saturated_spans_cell_indicators() {
        let cells = vec![vec![0.0], vec![1.0]];
        let dict = Dictionary::saturated(&cells, 2);
        assert_eq!(dict.len(), 4);
        assert_eq!(dict.eval(Label(1), &[1.0]), [1.0, 0.0, 0.0, 1.0]);
        assert_eq!(
            Dictionary::saturated_covariates(&cells).eval(Label(0), &[1.0]),
            [1.0, 1.0]
        );
    }
}
