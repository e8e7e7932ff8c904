use crate::error::{DmlError, Result};
use crate::model::{Label, NuisanceFn};

use super::MomentFunctional;

/// `m(w, gamma) + alpha(w) (y - gamma(w)) - theta` at the record `(d, x)`
/// with transformed outcome `y`.
#[allow(clippy::too_many_arguments)]
#[inline]
pub fn orthogonal_score(
    functional: &MomentFunctional,
    d: Label,
    x: &[f64],
    y: f64,
    theta: f64,
    gamma: &dyn NuisanceFn,
    alpha: &dyn NuisanceFn,
) -> Result<f64> {
    let m = functional.evaluate(x, gamma)?;
    let g = gamma.eval(d, x);
    let a = alpha.eval(d, x);
    if !(m.is_finite() && g.is_finite() && a.is_finite() && y.is_finite()) {
        return Err(DmlError::Evaluation(format!(
            "{}: non-finite score component (m={m}, gamma={g}, alpha={a}, y={y})",
            functional.describe()
        )));
    }
    Ok(m + a * (y - g) - theta)
}

/// `n x p` matrix of evaluated scores, stored column by column.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    n: usize,
    p: usize,
    values: Vec<f64>,
    target_meta: Vec<String>,
    centered: bool,
}

impl ScoreMatrix {
    /// `columns[j]` holds the scores of target `j`.
    pub fn from_columns(
        columns: Vec<Vec<f64>>,
        target_meta: Vec<String>,
        centered: bool,
    ) -> Result<Self> {
        let p = columns.len();
        if p == 0 || target_meta.len() != p {
            return Err(DmlError::Validation(
                "score matrix needs one label per nonempty column".into(),
            ));
        }
        let n = columns[0].len();
        if n == 0 || columns.iter().any(|c| c.len() != n) {
            return Err(DmlError::Validation(
                "score columns must share a positive length".into(),
            ));
        }
        let values: Vec<f64> = columns.into_iter().flatten().collect();
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(DmlError::Evaluation(format!(
                "non-finite score at row {} of target {}",
                pos % n,
                target_meta[pos / n]
            )));
        }
        Ok(Self {
            n,
            p,
            values,
            target_meta,
            centered,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn centered(&self) -> bool {
        self.centered
    }

    pub fn target_meta(&self) -> &[String] {
        &self.target_meta
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.n + i]
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.values[j * self.n..(j + 1) * self.n]
    }

    pub fn column_means(&self) -> Vec<f64> {
        (0..self.p)
            .map(|j| crate::numeric::mean(self.column(j)))
            .collect()
    }

    /// Copy with every column shifted to mean zero.
    pub fn to_centered(&self) -> Self {
        let means = self.column_means();
        let mut out = self.clone();
        for j in 0..self.p {
            for v in &mut out.values[j * self.n..(j + 1) * self.n] {
                *v -= means[j];
            }
        }
        out.centered = true;
        out
    }

    /// Keeps the listed columns in the given order.
    pub fn select(&self, columns: &[usize]) -> Self {
        let cols = columns.iter().map(|&j| self.column(j).to_vec()).collect();
        let meta = columns
            .iter()
            .map(|&j| self.target_meta[j].clone())
            .collect();
        Self::from_columns(cols, meta, self.centered).expect("subset of a valid matrix")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ate() -> MomentFunctional {
        MomentFunctional::ManyTreatments {
            treated: Label(1),
            control: Label(0),
        }
    }

    #[test]
    fn exact_fit_drops_correction() {
        let gamma = |d: Label, x: &[f64]| x[0] + d.0 as f64;
        let alpha = |_: Label, _: &[f64]| 7.0;
        let y = gamma(Label(1), &[0.5]);
        let s = orthogonal_score(&ate(), Label(1), &[0.5], y, 0.25, &gamma, &alpha).unwrap();
        assert_eq!(s, 1.0 - 0.25);
    }

    #[test]
    fn zero_representer_gives_plugin_score() {
        let gamma = |d: Label, _: &[f64]| 2.0 * d.0 as f64;
        let alpha = |_: Label, _: &[f64]| 0.0;
        let s = orthogonal_score(&ate(), Label(0), &[0.0], 10.0, 0.5, &gamma, &alpha).unwrap();
        assert_eq!(s, 1.5);
    }

    #[test]
    fn theta_at_score_value_gives_zero() {
        let gamma = |d: Label, x: &[f64]| x[0] * (1.0 + d.0 as f64);
        let alpha = |d: Label, _: &[f64]| if d.0 == 1 { 2.5 } else { -1.6 };
        let theta = orthogonal_score(&ate(), Label(1), &[0.3], 1.2, 0.0, &gamma, &alpha).unwrap();
        let s = orthogonal_score(&ate(), Label(1), &[0.3], 1.2, theta, &gamma, &alpha).unwrap();
        assert_eq!(s, 0.0);
    }

    #[test]
    fn non_finite_component_is_an_error() {
        let gamma = |_: Label, _: &[f64]| f64::NAN;
        let alpha = |_: Label, _: &[f64]| 1.0;
        assert!(orthogonal_score(&ate(), Label(1), &[0.0], 1.0, 0.0, &gamma, &alpha).is_err());
    }

    #[test]
    fn centering() {
        let m =
            ScoreMatrix::from_columns(vec![vec![1.0, 2.0, 6.0]], vec!["a".into()], false).unwrap();
        let c = m.to_centered();
        assert!(c.centered());
        assert!(c.column_means()[0].abs() < 1e-12);
        assert!(ScoreMatrix::from_columns(vec![vec![f64::NAN]], vec!["a".into()], false).is_err());
    }
}
