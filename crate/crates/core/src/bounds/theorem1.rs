use std::collections::BTreeMap;
use std::f64::consts::{E, SQRT_2};

use serde::{Deserialize, Serialize};

use super::{check, BoundReport, BoundTerm, CONSTANTS_NOTE, VACUOUS};
use crate::error::{DmlError, Result};

/// Tail assumption on the oracle score used for the Gaussian
/// approximation term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Bounded `q`-th moment of the maximum score, `q >= 4`.
    #[default]
    #[serde(alias = "heavy")]
    HeavyTailQ,
    #[serde(alias = "subgauss")]
    SubGaussian,
    Bounded,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::HeavyTailQ => "heavy_tail_q",
            Regime::SubGaussian => "sub_gaussian",
            Regime::Bounded => "bounded",
        }
    }
}

/// Unspecified constants of the finite-sample distance bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Theorem1Constants {
    /// Gaussian approximation constant (also used for the lighter-tail regimes).
    pub c_q: f64,
    /// Maximal inequality constant.
    pub k: f64,
}

impl Default for Theorem1Constants {
    fn default() -> Self {
        Self { c_q: 1.0, k: 1.0 }
    }
}

/// Inputs of the finite-dimensional bound. `n` and `p` are real so the
/// formulas can be evaluated at convenient points such as `n = e^10`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Theorem1Inputs {
    pub n: f64,
    pub p: f64,
    pub q: f64,
    pub b_n: f64,
    pub lambda_min: f64,
    pub sigma_min: f64,
    pub q_bar: f64,
    pub alpha_bar: f64,
    pub sigma_bar: f64,
    pub delta: f64,
    pub v_n: f64,
    pub a_n: f64,
    pub m_n: f64,
    pub r_gamma: f64,
    pub r_alpha: f64,
    pub c: f64,
    #[serde(default)]
    pub constants: Theorem1Constants,
}

impl Default for Theorem1Inputs {
    fn default() -> Self {
        Self {
            n: 1e4,
            p: 10.0,
            q: 4.0,
            b_n: 1.0,
            lambda_min: 1.0,
            sigma_min: 1.0,
            q_bar: 1.0,
            alpha_bar: 1.0,
            sigma_bar: 1.0,
            delta: 0.0,
            v_n: 1.0,
            a_n: E,
            m_n: 1.0,
            r_gamma: 0.0,
            r_alpha: 0.0,
            c: 1.0,
            constants: Theorem1Constants::default(),
        }
    }
}

impl Theorem1Inputs {
    pub fn validate(&self) -> Result<()> {
        check("n", self.n, self.n > 1.0, "a real number > 1")?;
        check("p", self.p, self.p >= 2.0, "at least 2, so that log p > 0")?;
        check("q", self.q, self.q >= 4.0, "at least 4")?;
        check("b_n", self.b_n, self.b_n > 0.0, "positive")?;
        check(
            "lambda_min",
            self.lambda_min,
            self.lambda_min > 0.0,
            "positive",
        )?;
        check(
            "sigma_min",
            self.sigma_min,
            self.sigma_min > 0.0,
            "positive",
        )?;
        check("q_bar", self.q_bar, self.q_bar >= 0.0, "nonnegative")?;
        check(
            "alpha_bar",
            self.alpha_bar,
            self.alpha_bar >= 0.0,
            "nonnegative",
        )?;
        check(
            "sigma_bar",
            self.sigma_bar,
            self.sigma_bar >= 0.0,
            "nonnegative",
        )?;
        check("delta", self.delta, self.delta >= 0.0, "nonnegative")?;
        check("v_n", self.v_n, self.v_n >= 1.0, "at least 1")?;
        check("a_n", self.a_n, self.a_n >= E, "at least e")?;
        check("m_n", self.m_n, self.m_n >= 0.0, "nonnegative")?;
        check("r_gamma", self.r_gamma, self.r_gamma >= 0.0, "nonnegative")?;
        check("r_alpha", self.r_alpha, self.r_alpha >= 0.0, "nonnegative")?;
        check("c", self.c, self.c > 0.0, "positive")?;
        check(
            "constants.c_q",
            self.constants.c_q,
            self.constants.c_q > 0.0,
            "positive",
        )?;
        check(
            "constants.k",
            self.constants.k,
            self.constants.k > 0.0,
            "positive",
        )?;
        Ok(())
    }
}

/// Itemized bound on the Kolmogorov distance of the sup-t statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Bound {
    pub term_a: f64,
    pub term_b: f64,
    pub term_c: f64,
    pub delta_1n: f64,
    pub delta_2n: f64,
    pub total: f64,
    pub regime: Regime,
}

impl Theorem1Bound {
    pub fn vacuous(&self) -> bool {
        self.total >= 1.0
    }
}

pub fn theorem1_term_a(input: &Theorem1Inputs, regime: Regime) -> Result<f64> {
    input.validate()?;
    let Theorem1Inputs {
        n,
        p,
        q,
        b_n: b,
        lambda_min: lam,
        ..
    } = *input;
    let (lp, ln) = (p.ln(), n.ln());
    let first = b * lp.powf(1.5) * ln / (n.sqrt() * lam);
    let braces = match regime {
        Regime::Bounded => first,
        Regime::SubGaussian => first + b * b * lp * lp / (n * lam).sqrt(),
        Regime::HeavyTailQ => {
            let second = b * b * lp * lp * ln / (n.powf(1.0 - 2.0 / q) * lam);
            let inner = b.powf(q) * lp.powf(1.5 * q - 4.0) * ln * (p * n).ln()
                / (n.powf(q / 2.0 - 1.0) * lam.powf(q / 2.0));
            first + second + inner.powf(1.0 / (q - 2.0))
        }
    };
    Ok(input.constants.c_q * braces)
}

pub fn theorem1_delta1(input: &Theorem1Inputs) -> Result<f64> {
    input.validate()?;
    let i = *input;
    let rate_part =
        ((2.0 + SQRT_2) * i.alpha_bar + SQRT_2 * i.q_bar) * i.r_gamma + i.sigma_bar * i.r_alpha;
    let log3a = (3.0 * i.a_n).ln();
    let entropy = (3.0 * i.v_n * log3a).sqrt();
    let envelope = 3.0 * i.v_n * i.n.powf(1.0 / (2.0 + i.delta) - 0.5) * 5.0 * i.m_n * log3a;
    Ok(i.constants.k * (rate_part * entropy + envelope))
}

pub fn theorem1_delta2(input: &Theorem1Inputs) -> Result<f64> {
    input.validate()?;
    Ok(input.n.sqrt() * input.r_gamma * input.r_alpha)
}

pub fn theorem1_bound(input: &Theorem1Inputs, regime: Regime) -> Result<Theorem1Bound> {
    let term_a = theorem1_term_a(input, regime)?;
    let delta_1n = theorem1_delta1(input)?;
    let delta_2n = theorem1_delta2(input)?;
    let term_b = 6.0 * input.p.ln().sqrt() / input.sigma_min * (delta_1n + delta_2n);
    let term_c = input.c / input.n.ln();
    let total = term_a + term_b + term_c;
    if !total.is_finite() {
        return Err(DmlError::Evaluation(format!("bound evaluates to {total}")));
    }
    Ok(Theorem1Bound {
        term_a,
        term_b,
        term_c,
        delta_1n,
        delta_2n,
        total,
        regime,
    })
}

/// The bound with its inputs echoed, for reports.
pub fn theorem1_report(input: &Theorem1Inputs, regime: Regime) -> Result<BoundReport> {
    let b = theorem1_bound(input, regime)?;
    let terms = [
        ("term_a", b.term_a),
        ("term_b", b.term_b),
        ("term_c", b.term_c),
        ("delta_1n", b.delta_1n),
        ("delta_2n", b.delta_2n),
    ]
    .into_iter()
    .map(|(name, value)| BoundTerm {
        name: name.into(),
        value,
    })
    .collect();
    let constants_used = BTreeMap::from([
        ("c_q".to_string(), input.constants.c_q),
        ("k".to_string(), input.constants.k),
    ]);
    let mut warnings = Vec::new();
    if b.vacuous() {
        warnings.push(VACUOUS.to_string());
    }
    Ok(BoundReport {
        theorem: 1,
        regime: Some(regime),
        inputs: serde_json::to_value(input).map_err(|e| DmlError::Evaluation(e.to_string()))?,
        terms,
        total: b.total,
        constants_used,
        warnings,
        note: CONSTANTS_NOTE.into(),
    })
}
