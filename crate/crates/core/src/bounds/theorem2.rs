use std::collections::BTreeMap;
use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use super::{check, BoundReport, BoundTerm, CONSTANTS_NOTE, VACUOUS};
use crate::error::{DmlError, Result};

/// Which derivative bound scales the deviation terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Prefactor {
    /// `1 / C_0`.
    #[default]
    UpperC0,
    /// `1 / c_0`.
    LowerC0,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Theorem2Constants {
    pub k: f64,
    pub d_q: f64,
    #[serde(rename = "D_q")]
    pub big_d_q: f64,
    pub kappa: f64,
    pub chi: f64,
    pub prefactor: Prefactor,
}

impl Default for Theorem2Constants {
    fn default() -> Self {
        Self {
            k: 1.0,
            d_q: 1.0,
            big_d_q: 1.0,
            kappa: 1.0,
            chi: 1.0,
            prefactor: Prefactor::UpperC0,
        }
    }
}

/// Inputs of the bound for a continuum of targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Theorem2Inputs {
    pub n: f64,
    pub q: f64,
    pub epsilon_n: f64,
    pub c0: f64,
    pub c1: f64,
    #[serde(rename = "C0")]
    pub big_c0: f64,
    pub b_1n: f64,
    pub b_2n: f64,
    pub omega: f64,
    pub delta: f64,
    pub v_n: f64,
    pub a_n: f64,
    pub m_n: f64,
    pub r_eta: f64,
    pub b_n: f64,
    #[serde(rename = "V_n")]
    pub big_v_n: f64,
    #[serde(rename = "A_n")]
    pub big_a_n: f64,
    pub gamma: f64,
    pub c: f64,
    #[serde(default)]
    pub constants: Theorem2Constants,
}

impl Default for Theorem2Inputs {
    fn default() -> Self {
        Self {
            n: 1e4,
            q: 4.0,
            epsilon_n: 0.0,
            c0: 0.5,
            c1: 0.5,
            big_c0: 2.0,
            b_1n: 1.0,
            b_2n: 1.0,
            omega: 2.0,
            delta: 0.0,
            v_n: 1.0,
            a_n: E,
            m_n: 1.0,
            r_eta: 0.1,
            b_n: 1.0,
            big_v_n: 1.0,
            big_a_n: 1e4,
            gamma: 0.5,
            c: 1.0,
            constants: Theorem2Constants::default(),
        }
    }
}

impl Theorem2Inputs {
    pub fn validate(&self) -> Result<()> {
        check("n", self.n, self.n > 1.0, "a real number > 1")?;
        check("q", self.q, self.q >= 4.0, "at least 4")?;
        check(
            "epsilon_n",
            self.epsilon_n,
            self.epsilon_n >= 0.0,
            "nonnegative",
        )?;
        check("c0", self.c0, self.c0 > 0.0, "positive")?;
        check("c1", self.c1, self.c1 > 0.0, "positive")?;
        check("C0", self.big_c0, self.big_c0 > 0.0, "positive")?;
        check("b_1n", self.b_1n, self.b_1n >= 0.0, "nonnegative")?;
        check("b_2n", self.b_2n, self.b_2n >= 0.0, "nonnegative")?;
        check(
            "omega",
            self.omega,
            self.omega > 0.0 && self.omega <= 2.0,
            "in (0, 2]",
        )?;
        check("delta", self.delta, self.delta >= 0.0, "nonnegative")?;
        check("v_n", self.v_n, self.v_n >= 1.0, "at least 1")?;
        check("a_n", self.a_n, self.a_n >= E, "at least e")?;
        check("m_n", self.m_n, self.m_n >= 0.0, "nonnegative")?;
        check("r_eta", self.r_eta, self.r_eta >= 0.0, "nonnegative")?;
        check("b_n", self.b_n, self.b_n > 0.0, "positive")?;
        check("V_n", self.big_v_n, self.big_v_n > 0.0, "positive")?;
        check("A_n", self.big_a_n, self.big_a_n >= self.n, "at least n")?;
        check(
            "gamma",
            self.gamma,
            self.gamma > 0.0 && self.gamma < 1.0,
            "in (0, 1)",
        )?;
        check("c", self.c, self.c > 0.0, "positive")?;
        let k = &self.constants;
        for (name, v) in [
            ("constants.k", k.k),
            ("constants.d_q", k.d_q),
            ("constants.D_q", k.big_d_q),
        ] {
            check(name, v, v >= 0.0, "nonnegative")?;
        }
        check("constants.kappa", k.kappa, k.kappa > 0.0, "positive")?;
        check("constants.chi", k.chi, k.chi > 0.0, "positive")?;
        Ok(())
    }

    fn prefactor(&self) -> f64 {
        match self.constants.prefactor {
            Prefactor::UpperC0 => 1.0 / self.big_c0,
            Prefactor::LowerC0 => 1.0 / self.c0,
        }
    }
}

/// Every intermediate of the continuum bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Terms {
    pub r_vee: f64,
    pub delta_1n: f64,
    pub delta_2n: f64,
    pub delta_3n: f64,
    pub l_n: f64,
    pub r_1n: f64,
    pub r_2n: f64,
    pub total: f64,
}

/// Preliminary rate: worse of the nuisance rate and the implied rate for theta.
pub fn theorem2_r_vee(i: &Theorem2Inputs) -> Result<f64> {
    i.validate()?;
    let root_n = i.n.sqrt();
    let k = i.constants.k;
    let envelope = i.v_n * i.n.powf(1.0 / (2.0 + i.delta) - 0.5) * i.m_n * i.a_n.ln();
    let theta_rate = i.epsilon_n / (i.c1 * root_n)
        + k / (i.c1 * root_n) * (i.big_c0 * (i.v_n * i.a_n.ln()).sqrt() + envelope)
        + i.b_1n * i.r_eta / i.c1;
    Ok(theta_rate.max(i.r_eta))
}

pub fn theorem2_terms(i: &Theorem2Inputs) -> Result<Theorem2Terms> {
    let r_vee = theorem2_r_vee(i)?;
    let pre = i.prefactor();
    let k = i.constants.k;
    let log2a = (2.0 * i.a_n).ln();
    let delta_1n = pre
        * k
        * (i.big_c0.sqrt() * r_vee.powf(i.omega / 2.0) * (2.0 * i.v_n * log2a).sqrt()
            + 2.0 * i.v_n * i.n.powf(1.0 / (2.0 + i.delta) - 0.5) * 2.0 * i.m_n * log2a);
    let delta_2n = pre * 0.5 * i.n.sqrt() * i.b_2n * r_vee * r_vee;
    let log_ab = (i.big_a_n * i.b_n).ln();
    let l_n = i.constants.d_q * i.big_v_n * i.n.ln().max(log_ab);
    let (b, g, n) = (i.b_n, i.gamma, i.n);
    let delta_3n = b * l_n / (g.sqrt() * n.powf(0.5 - 1.0 / i.q))
        + b.sqrt() * l_n.powf(0.75) / (g.sqrt() * n.powf(0.25))
        + (b * l_n * l_n).cbrt() / (g.cbrt() * n.powf(1.0 / 6.0));
    let r_1n = i.epsilon_n / i.c0 + delta_1n + delta_2n + delta_3n;
    let r_2n = i.constants.big_d_q * (g + n.ln() / n) + i.c / n.ln();
    let total = if r_1n == 0.0 {
        r_2n
    } else {
        let entropy = i.constants.chi * (i.big_v_n * log_ab.max(0.0)).sqrt();
        i.constants.kappa * r_1n * (entropy + (-r_1n.ln()).max(1.0).sqrt()) + r_2n
    };
    if !total.is_finite() {
        return Err(DmlError::Evaluation(format!("bound evaluates to {total}")));
    }
    Ok(Theorem2Terms {
        r_vee,
        delta_1n,
        delta_2n,
        delta_3n,
        l_n,
        r_1n,
        r_2n,
        total,
    })
}

pub fn theorem2_bound(i: &Theorem2Inputs) -> Result<BoundReport> {
    let t = theorem2_terms(i)?;
    let terms = [
        ("r_vee", t.r_vee),
        ("delta_1n", t.delta_1n),
        ("delta_2n", t.delta_2n),
        ("delta_3n", t.delta_3n),
        ("l_n", t.l_n),
        ("r_1n", t.r_1n),
        ("r_2n", t.r_2n),
    ]
    .into_iter()
    .map(|(name, value)| BoundTerm {
        name: name.into(),
        value,
    })
    .collect();
    let k = &i.constants;
    let constants_used = BTreeMap::from([
        ("k".to_string(), k.k),
        ("d_q".to_string(), k.d_q),
        ("D_q".to_string(), k.big_d_q),
        ("kappa".to_string(), k.kappa),
        ("chi".to_string(), k.chi),
        ("prefactor".to_string(), i.prefactor()),
    ]);
    let mut warnings = Vec::new();
    if t.total >= 1.0 {
        warnings.push(VACUOUS.to_string());
    }
    Ok(BoundReport {
        theorem: 2,
        regime: None,
        inputs: serde_json::to_value(i).map_err(|e| DmlError::Evaluation(e.to_string()))?,
        terms,
        total: t.total,
        constants_used,
        warnings,
        note: CONSTANTS_NOTE.into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vanishing_components_leave_delta3() {
        let i = Theorem2Inputs {
            epsilon_n: 0.0,
            r_eta: 0.0,
            m_n: 0.0,
            b_1n: 0.0,
            constants: Theorem2Constants {
                k: 0.0,
                ..Default::default()
            },
            ..Default::default()
        };
        let t = theorem2_terms(&i).unwrap();
        assert_eq!(t.r_vee, 0.0);
        assert_eq!((t.delta_1n, t.delta_2n), (0.0, 0.0));
        assert_eq!(t.r_1n, t.delta_3n);
    }

    #[test]
    fn r2_hand_value() {
        let n = 10f64.exp();
        let i = Theorem2Inputs {
            n,
            big_a_n: n,
            gamma: 0.5,
            c: 1.0,
            ..Default::default()
        };
        let t = theorem2_terms(&i).unwrap();
        assert!((t.r_2n - (0.5 + 10.0 * (-10f64).exp() + 0.1)).abs() < 1e-14);
    }

    #[test]
    fn zero_r1_returns_r2() {
        let i = Theorem2Inputs {
            epsilon_n: 0.0,
            r_eta: 0.0,
            m_n: 0.0,
            constants: Theorem2Constants {
                k: 0.0,
                d_q: 0.0,
                ..Default::default()
            },
            ..Default::default()
        };
        let t = theorem2_terms(&i).unwrap();
        assert_eq!(t.r_1n, 0.0);
        assert_eq!(t.total, t.r_2n);
    }

    #[test]
    fn prefactor_override() {
        let base = Theorem2Inputs::default();
        let lower = Theorem2Inputs {
            constants: Theorem2Constants {
                prefactor: Prefactor::LowerC0,
                ..Default::default()
            },
            ..base
        };
        let (a, b) = (
            theorem2_terms(&base).unwrap(),
            theorem2_terms(&lower).unwrap(),
        );
        let ratio = base.big_c0 / base.c0;
        assert!((b.delta_1n / a.delta_1n - ratio).abs() < 1e-12);
        assert!((b.delta_2n / a.delta_2n - ratio).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_gamma_and_small_a() {
        assert!(theorem2_bound(&Theorem2Inputs {
            gamma: 1.0,
            ..Default::default()
        })
        .is_err());
        assert!(theorem2_bound(&Theorem2Inputs {
            big_a_n: 10.0,
            ..Default::default()
        })
        .is_err());
    }

    #[test]
    fn report_echo_reproduces() {
        let r = theorem2_bound(&Theorem2Inputs::default()).unwrap();
        let echoed: Theorem2Inputs = serde_json::from_value(r.inputs.clone()).unwrap();
        assert_eq!(theorem2_bound(&echoed).unwrap(), r);
    }
}
