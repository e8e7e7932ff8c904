use nalgebra::{DMatrix, DVector};

use super::design::Design;
use crate::error::{DmlError, Result};

/// Penalized multinomial logit solver settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Ridge on non-intercept coefficients, on the mean log-likelihood scale.
    pub penalty: f64,
    pub max_iterations: usize,
    /// Convergence when the sup-norm of the gradient falls below this.
    pub tolerance: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            penalty: 1e-6,
            max_iterations: 100,
            tolerance: 1e-9,
        }
    }
}

/// Coefficients of a multinomial logit with class 0 as reference.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitModel {
    classes: usize,
    dim: usize,
    /// Row `k - 1` holds the coefficients of class `k`.
    coefficients: Vec<f64>,
    pub iterations: usize,
    pub gradient_norm: f64,
}

impl LogitModel {
    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn coefficients(&self, class: usize) -> &[f64] {
        assert!(class >= 1 && class < self.classes);
        &self.coefficients[(class - 1) * self.dim..class * self.dim]
    }

    /// Class probabilities at basis row `b`, written into `out`.
    pub fn probabilities_into(&self, b: &[f64], out: &mut [f64]) {
        softmax_into(&self.coefficients, self.dim, b, out);
    }
}

fn softmax_into(beta: &[f64], dim: usize, b: &[f64], out: &mut [f64]) {
    out[0] = 0.0;
    let mut max = 0.0f64;
    for k in 1..out.len() {
        let eta: f64 = beta[(k - 1) * dim..k * dim]
            .iter()
            .zip(b)
            .map(|(c, v)| c * v)
            .sum();
        out[k] = eta;
        max = max.max(eta);
    }
    let mut total = 0.0;
    for v in out.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in out.iter_mut() {
        *v /= total;
    }
}

/// Penalized negative mean log-likelihood.
fn objective(
    design: &Design,
    targets: &[usize],
    classes: usize,
    beta: &[f64],
    penalty: f64,
) -> f64 {
    let dim = design.dim;
    let mut eta = vec![0.0; classes];
    let mut loss = 0.0;
    for r in 0..design.n {
        let b = design.row(r);
        let mut max = 0.0f64;
        eta[0] = 0.0;
        for k in 1..classes {
            eta[k] = beta[(k - 1) * dim..k * dim]
                .iter()
                .zip(b)
                .map(|(c, v)| c * v)
                .sum();
            max = max.max(eta[k]);
        }
        let lse = max + eta.iter().map(|e| (e - max).exp()).sum::<f64>().ln();
        loss += design.weights[r] * (lse - eta[targets[r]]);
    }
    loss / design.n as f64 + 0.5 * penalty * penalized_norm(beta, dim)
}

fn penalized_norm(beta: &[f64], dim: usize) -> f64 {
    beta.iter()
        .enumerate()
        .filter(|(i, _)| i % dim != 0)
        .map(|(_, v)| v * v)
        .sum()
}

/// Damped Newton with step halving on the penalized multinomial logit.
///
/// The first basis column is the unpenalized intercept.
pub(crate) fn fit_logit(
    design: &Design,
    targets: &[usize],
    classes: usize,
    options: NewtonOptions,
) -> Result<LogitModel> {
    if classes < 2 {
        return Err(DmlError::Argument(
            "a logit needs at least two classes".into(),
        ));
    }
    if !design.is_finite() {
        return Err(DmlError::Estimation(
            "logistic design has non-finite entries".into(),
        ));
    }
    let dim = design.dim;
    let size = (classes - 1) * dim;
    let mut beta = vec![0.0; size];
    // start the intercepts at the log frequency ratios
    let mut freq = vec![0.0; classes];
    for (r, &t) in targets.iter().enumerate() {
        freq[t] += design.weights[r];
    }
    for k in 1..classes {
        if freq[k] > 0.0 && freq[0] > 0.0 {
            beta[(k - 1) * dim] = (freq[k] / freq[0]).ln();
        }
    }
    let mut probs = vec![0.0; classes];
    let mut current = objective(design, targets, classes, &beta, options.penalty);
    let inv_n = 1.0 / design.n as f64;
    let mut grad_norm = f64::INFINITY;
    for iteration in 0..=options.max_iterations {
        let mut grad = vec![0.0; size];
        let mut hess = DMatrix::<f64>::zeros(size, size);
        for r in 0..design.n {
            let b = design.row(r);
            let w = design.weights[r] * inv_n;
            softmax_into(&beta, dim, b, &mut probs);
            for k in 1..classes {
                let resid = probs[k] - f64::from(u8::from(targets[r] == k));
                for j in 0..dim {
                    grad[(k - 1) * dim + j] += w * resid * b[j];
                }
                for l in k..classes {
                    let c = w * probs[k] * (f64::from(u8::from(k == l)) - probs[l]);
                    if c == 0.0 {
                        continue;
                    }
                    for j in 0..dim {
                        let cb = c * b[j];
                        let row = (k - 1) * dim + j;
                        let start = if k == l { j } else { 0 };
                        for m in start..dim {
                            hess[(row, (l - 1) * dim + m)] += cb * b[m];
                        }
                    }
                }
            }
        }
        for i in 0..size {
            for j in 0..i {
                hess[(i, j)] = hess[(j, i)];
            }
        }
        for i in 0..size {
            if i % dim != 0 {
                grad[i] += options.penalty * beta[i];
                hess[(i, i)] += options.penalty;
            }
        }
        grad_norm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if grad_norm <= options.tolerance {
            return Ok(LogitModel {
                classes,
                dim,
                coefficients: beta,
                iterations: iteration,
                gradient_norm: grad_norm,
            });
        }
        if iteration == options.max_iterations {
            break;
        }
        let g = DVector::from_vec(grad);
        let step = newton_direction(hess, &g);
        let slope = -g.dot(&step);
        if -slope <= 1e-12 * (1.0 + current.abs()) {
            // Inside the quadratic region the objective cannot resolve the
            // predicted decrease, so take the full Newton step unchecked.
            let trial: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b - s).collect();
            if trial.iter().all(|v| v.is_finite()) {
                beta = trial;
                current = objective(design, targets, classes, &beta, options.penalty);
                continue;
            }
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = beta
                .iter()
                .zip(step.iter())
                .map(|(b, s)| b - t * s)
                .collect();
            let value = objective(design, targets, classes, &trial, options.penalty);
            if value.is_finite() && value <= current + 1e-4 * t * slope {
                beta = trial;
                current = value;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // no descent available in floating point: report where we stopped
            break;
        }
    }
    Err(DmlError::Convergence {
        iterations: options.max_iterations,
        gradient_norm: grad_norm,
    })
}

/// Solves `H s = g`, adding diagonal jitter when `H` is numerically singular.
fn newton_direction(hess: DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    let scale = (0..hess.nrows())
        .map(|i| hess[(i, i)])
        .fold(0.0f64, f64::max)
        .max(1e-300);
    let mut jitter = 0.0;
    loop {
        let mut h = hess.clone();
        for i in 0..h.nrows() {
            h[(i, i)] += jitter;
        }
        if let Some(chol) = h.cholesky() {
            return chol.solve(g);
        }
        jitter = if jitter == 0.0 {
            scale * 1e-12
        } else {
            jitter * 10.0
        };
    }
}
