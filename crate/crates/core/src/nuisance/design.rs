use crate::model::Dataset;

use super::dictionary::Dictionary;

/// Row-major basis matrix over a subset of rows, with normalized weights.
#[derive(Debug, Clone)]
pub(crate) struct Design {
    pub n: usize,
    pub dim: usize,
    pub values: Vec<f64>,
    /// Observation weights rescaled to sum to `n`.
    pub weights: Vec<f64>,
}

impl Design {
    pub fn new(data: &Dataset, rows: &[usize], dictionary: &Dictionary) -> Self {
        let dim = dictionary.len();
        let mut values = vec![0.0; rows.len() * dim];
        for (r, &i) in rows.iter().enumerate() {
            dictionary.eval_into(data.d(i), data.x(i), &mut values[r * dim..(r + 1) * dim]);
        }
        Self::from_values(values, dim, rows.iter().map(|&i| data.weight(i)).collect())
    }

    pub fn from_values(values: Vec<f64>, dim: usize, raw_weights: Vec<f64>) -> Self {
        let n = raw_weights.len();
        let total: f64 = raw_weights.iter().sum();
        let scale = n as f64 / total;
        Self {
            n,
            dim,
            values,
            weights: raw_weights.iter().map(|w| w * scale).collect(),
        }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.dim..(r + 1) * self.dim]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `sum_i w_i b_i b_i'` as a dense symmetric matrix.
    pub fn gram(&self) -> nalgebra::DMatrix<f64> {
        let dim = self.dim;
        let mut g = nalgebra::DMatrix::zeros(dim, dim);
        for r in 0..self.n {
            let b = self.row(r);
            let w = self.weights[r];
            for j in 0..dim {
                let wb = w * b[j];
                if wb == 0.0 {
                    continue;
                }
                for k in j..dim {
                    g[(j, k)] += wb * b[k];
                }
            }
        }
        for j in 0..dim {
            for k in 0..j {
                g[(j, k)] = g[(k, j)];
            }
        }
        g
    }
}
