//! Numeric evaluation of the finite-sample Gaussian approximation bounds.
//!
//! Universal constants are configurable and default to 1, so every total
//! is meaningful only up to those constants.

mod empirical;
mod lemmas;
mod theorem1;
mod theorem2;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{DmlError, Result};

pub use empirical::{empirical_bound_inputs, EmpiricalInputs};
pub use lemmas::{
    anti_concentration_bound, entropy_compose, entropy_sum, maximal_inequality_bound,
};
pub use theorem1::{
    theorem1_bound, theorem1_delta1, theorem1_delta2, theorem1_report, theorem1_term_a, Regime,
    Theorem1Bound, Theorem1Constants, Theorem1Inputs,
};
pub use theorem2::{
    theorem2_bound, theorem2_r_vee, theorem2_terms, Prefactor, Theorem2Constants, Theorem2Inputs,
    Theorem2Terms,
};

pub const VACUOUS: &str = "bound vacuous at these inputs";

/// Note attached to every report.
pub const CONSTANTS_NOTE: &str = "up to configured constants";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundTerm {
    pub name: String,
    #[serde(with = "crate::numeric::nonfinite")]
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub theorem: u8,
    pub regime: Option<Regime>,
    pub inputs: serde_json::Value,
    pub terms: Vec<BoundTerm>,
    #[serde(with = "crate::numeric::nonfinite")]
    pub total: f64,
    pub constants_used: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
    pub note: String,
}

impl BoundReport {
    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|t| t.name == name).map(|t| t.value)
    }
}

pub(crate) fn check(name: &str, value: f64, ok: bool, expected: &str) -> Result<()> {
    if value.is_finite() && ok {
        Ok(())
    } else {
        Err(DmlError::Validation(format!(
            "{name} must be {expected}, got {value}"
        )))
    }
}
