use std::f64::consts::E;

use super::check;
use crate::error::{DmlError, Result};

/// Maximal inequality for a VC-type class with envelope `q`-norm `m`:
/// `K (sigma sqrt(v log a) + v n^{1/q - 1/2} m log a)`. The confidence
/// level enters only through `k`.
#[allow(clippy::too_many_arguments)]
pub fn maximal_inequality_bound(
    sigma: f64,
    v: f64,
    a: f64,
    m: f64,
    q: f64,
    k: f64,
    n: f64,
) -> Result<f64> {
    check("sigma", sigma, sigma >= 0.0, "nonnegative")?;
    check("v", v, v >= 1.0, "at least 1")?;
    check("a", a, a >= E, "at least e")?;
    check("m", m, m >= 0.0, "nonnegative")?;
    check("q", q, q >= 2.0, "at least 2")?;
    check("k", k, k > 0.0, "positive")?;
    check("n", n, n >= 1.0, "at least 1")?;
    let la = a.ln();
    Ok(k * (sigma * (v * la).sqrt() + v * n.powf(1.0 / q - 0.5) * m * la))
}

/// Entropy parameters `(v, a)` of the sum of two classes.
pub fn entropy_sum(v1: f64, a1: f64, v2: f64, a2: f64) -> Result<(f64, f64)> {
    entropy_compose(&[(v1, a1), (v2, a2)])
}

/// Entropy parameters of the sum of `k` classes, each covered at radius
/// `eps / k`: `(sum v, k max a)`.
pub fn entropy_compose(classes: &[(f64, f64)]) -> Result<(f64, f64)> {
    if classes.is_empty() {
        return Err(DmlError::Argument(
            "entropy_compose needs at least one class".into(),
        ));
    }
    let mut v = 0.0;
    let mut a = 0.0f64;
    for &(vi, ai) in classes {
        check("v", vi, vi >= 1.0, "at least 1")?;
        check("a", ai, ai >= E, "at least e")?;
        v += vi;
        a = a.max(ai);
    }
    Ok((v, classes.len() as f64 * a))
}

/// Anti-concentration of a Gaussian maximum: `12 eps sqrt(log p) / sigma`.
pub fn anti_concentration_bound(p: f64, epsilon: f64, sigma: f64) -> Result<f64> {
    check("p", p, p >= 2.0, "at least 2")?;
    check("epsilon", epsilon, epsilon >= 0.0, "nonnegative")?;
    check("sigma", sigma, sigma > 0.0, "positive")?;
    Ok(12.0 * epsilon * p.ln().sqrt() / sigma)
}
