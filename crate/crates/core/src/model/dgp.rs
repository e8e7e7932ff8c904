use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;

use super::data::{Dataset, Label};
use super::{NuisanceFn, OutcomeKind, Propensity, SharedFn};
use crate::error::{DmlError, Result};
use crate::numeric::KahanSum;
use crate::rng;
use crate::scores::MomentFunctional;

/// A data-generating process with known truth.
///
/// The Monte Carlo harness only needs this surface: sampling, the true
/// nuisances, true targets and the covariance of oracle scores.
pub trait Dgp: Send + Sync {
    fn labels(&self) -> &[String];

    fn outcome_dim(&self) -> usize;

    fn covariate_dim(&self) -> usize;

    /// `n` i.i.d. records; a pure function of `(self, n, seed)`.
    fn generate(&self, n: usize, seed: u64) -> Result<Dataset>;

    /// `gamma_0(d, x) = E[outcome(Y) | D = d, X = x]`.
    fn regression(&self, outcome: OutcomeKind) -> Result<SharedFn>;

    fn propensity(&self) -> Arc<dyn Propensity>;

    /// `theta_0 = E[m(W, gamma_0)]`.
    fn theta(&self, functional: &MomentFunctional) -> Result<f64>;

    /// Covariance matrix of the oracle scores of `functionals`.
    fn oracle_covariance(&self, functionals: &[MomentFunctional]) -> Result<DMatrix<f64>>;

    /// The representer `alpha_0(d, x) = c_d(x) / P(d | x)` implied by the
    /// functional's coefficients and the true propensity.
    fn riesz(&self, functional: &MomentFunctional) -> Result<SharedFn> {
        let propensity = self.propensity();
        let f = functional.clone();
        Ok(Arc::new(move |d: Label, x: &[f64]| match f.weights(x) {
            Ok(w) => {
                let c = w.coefficient(d);
                if c == 0.0 {
                    0.0
                } else {
                    c / propensity.prob(d, x)
                }
            }
            Err(_) => f64::NAN,
        }))
    }

    fn as_discrete(&self) -> Option<&DiscreteDgp> {
        None
    }
}

/// One support point `(y, d, x)` of a discrete distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub y: Vec<f64>,
    pub d: Label,
    pub x: Vec<f64>,
}

/// Finite-support distribution over records, so every expectation is an
/// exact finite sum.
#[derive(Debug, Clone)]
pub struct DiscreteDgp {
    labels: Vec<String>,
    atoms: Vec<Atom>,
    probabilities: Vec<f64>,
    cumulative: Vec<f64>,
    cells: Vec<Vec<f64>>,
    atom_cell: Vec<usize>,
    cell_label_mass: Vec<Vec<f64>>,
}

impl DiscreteDgp {
    pub fn new(labels: Vec<String>, atoms: Vec<Atom>, probabilities: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != probabilities.len() {
            return Err(DmlError::Validation(
                "atoms and probabilities must be nonempty and of equal length".into(),
            ));
        }
        if probabilities.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(DmlError::Validation(
                "probabilities must be finite and nonnegative".into(),
            ));
        }
        let total = crate::numeric::compensated_sum(probabilities.iter().copied());
        if (total - 1.0).abs() > 1e-12 {
            return Err(DmlError::Validation(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        let (p_y, k) = (atoms[0].y.len(), atoms[0].x.len());
        for a in &atoms {
            if a.y.len() != p_y || a.x.len() != k || p_y == 0 {
                return Err(DmlError::Validation(
                    "atoms have inconsistent dimensions".into(),
                ));
            }
            if a.d.0 >= labels.len() {
                return Err(DmlError::Validation(format!(
                    "atom label {} not declared",
                    a.d.0
                )));
            }
            if a.y.iter().chain(&a.x).any(|v| !v.is_finite()) {
                return Err(DmlError::Validation("atoms must be finite".into()));
            }
        }
        let mut cells: Vec<Vec<f64>> = Vec::new();
        let mut atom_cell = Vec::with_capacity(atoms.len());
        for a in &atoms {
            let idx = match cells.iter().position(|c| same_point(c, &a.x)) {
                Some(i) => i,
                None => {
                    cells.push(a.x.clone());
                    cells.len() - 1
                }
            };
            atom_cell.push(idx);
        }
        let mut cell_label_mass = vec![vec![0.0; labels.len()]; cells.len()];
        for (i, a) in atoms.iter().enumerate() {
            cell_label_mass[atom_cell[i]][a.d.0] += probabilities[i];
        }
        for (c, masses) in cell_label_mass.iter().enumerate() {
            let cell_total: f64 = masses.iter().sum();
            if cell_total > 0.0 && masses.iter().any(|&m| m <= 0.0) {
                return Err(DmlError::Validation(format!(
                    "overlap fails at covariate cell {:?}: some label has zero probability",
                    cells[c]
                )));
            }
        }
        let mut acc = 0.0;
        let cumulative = probabilities
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(Self {
            labels,
            atoms,
            probabilities,
            cumulative,
            cells,
            atom_cell,
            cell_label_mass,
        })
    }

    /// Binary treatment, binary covariate, outcome on `{0, 1, 3}`.
    ///
    /// `P(X=1) = 0.4`, `P(D=1|X=0) = 0.3`, `P(D=1|X=1) = 0.7`, and the
    /// conditional means `E[Y|d,x]` are `0.9, 1.3, 1.0, 1.7` for
    /// `(d,x) = (0,0), (1,0), (0,1), (1,1)`, giving an ATE of `0.52`.
    pub fn confounded_binary() -> Self {
        let px = [0.6, 0.4];
        let p1 = [0.3, 0.7];
        let ys = [0.0, 1.0, 3.0];
        // outcome distributions indexed [x][d]
        let dist = [
            [[0.5, 0.3, 0.2], [0.3, 0.4, 0.3]],
            [[0.4, 0.4, 0.2], [0.1, 0.5, 0.4]],
        ];
        let mut atoms = Vec::new();
        let mut probs = Vec::new();
        for x in 0..2 {
            for d in 0..2 {
                let pd = if d == 1 { p1[x] } else { 1.0 - p1[x] };
                for (yi, &y) in ys.iter().enumerate() {
                    atoms.push(Atom {
                        y: vec![y],
                        d: Label(d),
                        x: vec![x as f64],
                    });
                    probs.push(px[x] * pd * dist[x][d][yi]);
                }
            }
        }
        Self::new(vec!["0".into(), "1".into()], atoms, probs).expect("catalog DGP is valid")
    }

    /// Binary outcome with rare successes and a rarely treated stratum, so
    /// the oracle score is strongly right-skewed (skewness about 6.5).
    ///
    /// `P(X=1) = 0.5`, `P(D=1|X) = 0.1, 0.5`, and `P(Y=1|d,x)` is
    /// `0.05, 0.10, 0.08, 0.15` for `(d,x) = (0,0), (1,0), (0,1), (1,1)`.
    pub fn rare_outcome() -> Self {
        let p1 = [0.1, 0.5];
        let success = [[0.05, 0.10], [0.08, 0.15]];
        let mut atoms = Vec::new();
        let mut probs = Vec::new();
        for x in 0..2 {
            for d in 0..2 {
                let pd = if d == 1 { p1[x] } else { 1.0 - p1[x] };
                for y in 0..2 {
                    let py = if y == 1 {
                        success[x][d]
                    } else {
                        1.0 - success[x][d]
                    };
                    atoms.push(Atom {
                        y: vec![y as f64],
                        d: Label(d),
                        x: vec![x as f64],
                    });
                    probs.push(0.5 * pd * py);
                }
            }
        }
        Self::new(vec!["0".into(), "1".into()], atoms, probs).expect("catalog DGP is valid")
    }

    /// Three treatment arms, a three-valued covariate and two outcomes.
    pub fn three_arm() -> Self {
        let px = [0.3, 0.5, 0.2];
        let prop = [[0.5, 0.3, 0.2], [0.2, 0.5, 0.3], [0.3, 0.3, 0.4]];
        let mut atoms = Vec::new();
        let mut probs = Vec::new();
        for (xi, &pxv) in px.iter().enumerate() {
            for d in 0..3 {
                for (yv, py) in [(0.0, 0.5), (2.0, 0.3), (5.0, 0.2)] {
                    // shift the outcome distribution with treatment and covariate
                    let shift = 0.5 * d as f64 + 0.25 * xi as f64;
                    let y1 = yv + shift;
                    let y2 = if yv > 0.0 { 1.0 } else { -1.0 } * (1.0 + xi as f64) + d as f64;
                    atoms.push(Atom {
                        y: vec![y1, y2],
                        d: Label(d),
                        x: vec![xi as f64, (xi as f64) * (xi as f64)],
                    });
                    probs.push(pxv * prop[xi][d] * py);
                }
            }
        }
        Self::new(vec!["0".into(), "1".into(), "2".into()], atoms, probs)
            .expect("catalog DGP is valid")
    }

    /// Same support with outcomes replaced by their conditional means, so
    /// `Y = gamma_0(D, X)` almost surely.
    pub fn degenerate_outcomes(&self) -> Self {
        let p_y = self.atoms[0].y.len();
        let means: Vec<Vec<f64>> = (0..p_y)
            .map(|j| {
                self.atoms
                    .iter()
                    .map(|a| self.conditional_mean(OutcomeKind::Column(j), a.d, &a.x))
                    .collect()
            })
            .collect();
        let atoms = self
            .atoms
            .iter()
            .enumerate()
            .map(|(i, a)| Atom {
                y: (0..p_y).map(|j| means[j][i]).collect(),
                d: a.d,
                x: a.x.clone(),
            })
            .collect();
        Self::new(self.labels.clone(), atoms, self.probabilities.clone()).expect("same support")
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// Distinct covariate points of the support.
    pub fn cells(&self) -> &[Vec<f64>] {
        &self.cells
    }

    fn cell_index(&self, x: &[f64]) -> Option<usize> {
        self.cells.iter().position(|c| same_point(c, x))
    }

    /// Mass of covariate cell `x`.
    pub fn cell_mass(&self, x: &[f64]) -> f64 {
        self.cell_index(x)
            .map_or(0.0, |c| self.cell_label_mass[c].iter().sum())
    }

    /// `P(D = d | X = x)`; NaN off the support.
    pub fn propensity_at(&self, d: Label, x: &[f64]) -> f64 {
        match self.cell_index(x) {
            Some(c) => {
                let masses = &self.cell_label_mass[c];
                let total: f64 = masses.iter().sum();
                masses.get(d.0).map_or(f64::NAN, |m| m / total)
            }
            None => f64::NAN,
        }
    }

    /// `E[outcome(Y) | D = d, X = x]`; NaN off the support.
    pub fn conditional_mean(&self, outcome: OutcomeKind, d: Label, x: &[f64]) -> f64 {
        let Some(c) = self.cell_index(x) else {
            return f64::NAN;
        };
        let mut num = KahanSum::new();
        let mut den = KahanSum::new();
        for (i, a) in self.atoms.iter().enumerate() {
            if self.atom_cell[i] == c && a.d == d {
                num.add(self.probabilities[i] * outcome.apply(&a.y));
                den.add(self.probabilities[i]);
            }
        }
        if den.total() > 0.0 {
            num.total() / den.total()
        } else {
            f64::NAN
        }
    }

    /// `Var(outcome(Y) | D = d, X = x)`.
    pub fn conditional_variance(&self, outcome: OutcomeKind, d: Label, x: &[f64]) -> f64 {
        let mean = self.conditional_mean(outcome, d, x);
        let c = self.cell_index(x);
        let mut num = KahanSum::new();
        let mut den = KahanSum::new();
        for (i, a) in self.atoms.iter().enumerate() {
            if Some(self.atom_cell[i]) == c && a.d == d {
                let r = outcome.apply(&a.y) - mean;
                num.add(self.probabilities[i] * r * r);
                den.add(self.probabilities[i]);
            }
        }
        num.total() / den.total()
    }

    /// The support as a dataset whose weights are the atom probabilities.
    ///
    /// Weighted fits on this dataset are fits under the population measure.
    pub fn support_dataset(&self) -> Dataset {
        let keep: Vec<usize> = (0..self.atoms.len())
            .filter(|&i| self.probabilities[i] > 0.0)
            .collect();
        let p_y = self.atoms[0].y.len();
        let k = self.atoms[0].x.len();
        let outcomes = keep.iter().flat_map(|&i| self.atoms[i].y.clone()).collect();
        let covariates = keep.iter().flat_map(|&i| self.atoms[i].x.clone()).collect();
        Dataset::new(
            outcomes,
            p_y,
            keep.iter().map(|&i| self.atoms[i].d).collect(),
            self.labels.clone(),
            covariates,
            k,
            Some(keep.iter().map(|&i| self.probabilities[i]).collect()),
        )
        .expect("support is a valid dataset")
    }

    /// Checks a claimed regression against the enumerated conditional mean
    /// at every support point.
    pub fn verify_regression(&self, outcome: OutcomeKind, claimed: &dyn NuisanceFn) -> Result<()> {
        for (i, a) in self.atoms.iter().enumerate() {
            if self.probabilities[i] == 0.0 {
                continue;
            }
            for l in 0..self.labels.len() {
                let truth = self.conditional_mean(outcome, Label(l), &a.x);
                let got = claimed.eval(Label(l), &a.x);
                if truth.is_finite() && (truth - got).abs() > 1e-10 {
                    return Err(DmlError::Validation(format!(
                        "claimed regression {got} differs from enumerated {truth} at d={l}, x={:?}",
                        a.x
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn verify_propensity(&self, claimed: &dyn Propensity) -> Result<()> {
        for x in &self.cells {
            for l in 0..self.labels.len() {
                let truth = self.propensity_at(Label(l), x);
                let got = claimed.prob(Label(l), x);
                if (truth - got).abs() > 1e-10 {
                    return Err(DmlError::Validation(format!(
                        "claimed propensity {got} differs from enumerated {truth} at d={l}, x={x:?}"
                    )));
                }
                if !(got > 0.0 && got < 1.0) {
                    return Err(DmlError::Validation("propensity must lie in (0, 1)".into()));
                }
            }
        }
        Ok(())
    }

    /// `E_P[f(y, d, x)]` by compensated summation over atoms.
    pub fn expectation<F>(&self, mut f: F) -> Result<f64>
    where
        F: FnMut(&[f64], Label, &[f64]) -> f64,
    {
        let mut acc = KahanSum::new();
        for (a, &p) in self.atoms.iter().zip(&self.probabilities) {
            if p == 0.0 {
                continue;
            }
            let v = f(&a.y, a.d, &a.x);
            if !v.is_finite() {
                return Err(DmlError::Evaluation(format!(
                    "integrand is {v} at atom (y={:?}, d={}, x={:?})",
                    a.y, a.d.0, a.x
                )));
            }
            acc.add(p * v);
        }
        Ok(acc.total())
    }

    /// `E_P[g]` for a function of `(d, x)` only.
    pub fn expectation_dx(&self, g: &dyn NuisanceFn) -> Result<f64> {
        self.expectation(|_, d, x| g.eval(d, x))
    }

    /// Oracle score `m(W, gamma_0) + alpha_0(W)(Y - gamma_0(W)) - theta_0`.
    pub fn oracle_score(
        &self,
        functional: &MomentFunctional,
    ) -> Result<impl Fn(&[f64], Label, &[f64]) -> f64 + '_> {
        let gamma = self.regression(functional.outcome_kind())?;
        let alpha = self.riesz(functional)?;
        let theta = self.theta(functional)?;
        let f = functional.clone();
        let outcome = functional.outcome_kind();
        Ok(move |y: &[f64], d: Label, x: &[f64]| {
            let m = f.evaluate(x, gamma.as_ref()).unwrap_or(f64::NAN);
            m + alpha.eval(d, x) * (outcome.apply(y) - gamma.eval(d, x)) - theta
        })
    }
}

fn same_point(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(u, v)| u.to_bits() == v.to_bits())
}

impl Dgp for DiscreteDgp {
    fn labels(&self) -> &[String] {
        &self.labels
    }

    fn outcome_dim(&self) -> usize {
        self.atoms[0].y.len()
    }

    fn covariate_dim(&self) -> usize {
        self.atoms[0].x.len()
    }

    fn generate(&self, n: usize, seed: u64) -> Result<Dataset> {
        if n == 0 {
            return Err(DmlError::Argument("sample size must be at least 1".into()));
        }
        let mut rng = rng::stream(seed);
        let last = self.atoms.len() - 1;
        let mut outcomes = Vec::with_capacity(n * self.outcome_dim());
        let mut covariates = Vec::with_capacity(n * self.covariate_dim());
        let mut treatment = Vec::with_capacity(n);
        for _ in 0..n {
            let u: f64 = rng.random::<f64>() * self.cumulative[last];
            let mut idx = self.cumulative.partition_point(|&c| c <= u).min(last);
            // never land on a zero-probability atom
            while self.probabilities[idx] == 0.0 && idx < last {
                idx += 1;
            }
            let a = &self.atoms[idx];
            outcomes.extend_from_slice(&a.y);
            covariates.extend_from_slice(&a.x);
            treatment.push(a.d);
        }
        Dataset::new(
            outcomes,
            self.outcome_dim(),
            treatment,
            self.labels.clone(),
            covariates,
            self.covariate_dim(),
            None,
        )
    }

    fn regression(&self, outcome: OutcomeKind) -> Result<SharedFn> {
        if outcome.column() >= self.outcome_dim() {
            return Err(DmlError::Argument(format!(
                "outcome column {} out of range",
                outcome.column()
            )));
        }
        // table indexed [cell][label]
        let table: Vec<Vec<f64>> = self
            .cells
            .iter()
            .map(|x| {
                (0..self.labels.len())
                    .map(|l| self.conditional_mean(outcome, Label(l), x))
                    .collect()
            })
            .collect();
        let cells = self.cells.clone();
        Ok(Arc::new(move |d: Label, x: &[f64]| {
            cells
                .iter()
                .position(|c| same_point(c, x))
                .and_then(|c| table[c].get(d.0).copied())
                .unwrap_or(f64::NAN)
        }))
    }

    fn propensity(&self) -> Arc<dyn Propensity> {
        let table: Vec<Vec<f64>> = self
            .cells
            .iter()
            .map(|x| {
                (0..self.labels.len())
                    .map(|l| self.propensity_at(Label(l), x))
                    .collect()
            })
            .collect();
        let cells = self.cells.clone();
        Arc::new(move |d: Label, x: &[f64]| {
            cells
                .iter()
                .position(|c| same_point(c, x))
                .and_then(|c| table[c].get(d.0).copied())
                .unwrap_or(f64::NAN)
        })
    }

    fn theta(&self, functional: &MomentFunctional) -> Result<f64> {
        functional.validate(self.labels.len(), self.outcome_dim())?;
        let gamma = self.regression(functional.outcome_kind())?;
        let mut err = None;
        let v = self.expectation(|_, _, x| match functional.evaluate(x, gamma.as_ref()) {
            Ok(v) => v,
            Err(e) => {
                err = Some(e.to_string());
                f64::NAN
            }
        });
        match err {
            Some(e) => Err(DmlError::Evaluation(e)),
            None => v,
        }
    }

    fn oracle_covariance(&self, functionals: &[MomentFunctional]) -> Result<DMatrix<f64>> {
        let p = functionals.len();
        let mut values: Vec<Vec<f64>> = Vec::with_capacity(p);
        for f in functionals {
            let score = self.oracle_score(f)?;
            values.push(self.atoms.iter().map(|a| score(&a.y, a.d, &a.x)).collect());
        }
        let mut cov = DMatrix::zeros(p, p);
        for j in 0..p {
            for k in j..p {
                let mut acc = KahanSum::new();
                for i in 0..self.atoms.len() {
                    if self.probabilities[i] > 0.0 {
                        acc.add(self.probabilities[i] * values[j][i] * values[k][i]);
                    }
                }
                cov[(j, k)] = acc.total();
                cov[(k, j)] = acc.total();
            }
        }
        Ok(cov)
    }

    fn as_discrete(&self) -> Option<&DiscreteDgp> {
        Some(self)
    }
}

/// `n` i.i.d. draws from `dgp`, deterministic in `seed`.
pub fn generate_dataset(dgp: &dyn Dgp, n: usize, seed: u64) -> Result<Dataset> {
    dgp.generate(n, seed)
}

/// Exact `E_P[f(y, d, x)]` over the atoms of `dgp`.
pub fn enumerate_expectation<F>(dgp: &DiscreteDgp, f: F) -> Result<f64>
where
    F: Fn(&[f64], Label, &[f64]) -> f64,
{
    dgp.expectation(f)
}
