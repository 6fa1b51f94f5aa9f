use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Conditional probability table `p(y | c_1, ..., c_k)` over finite
/// alphabets, stored row-major with the output index fastest. The same type
/// covers classical post-processing of outcomes, program selection and
/// message generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticMatrix {
    pub out_dim: usize,
    pub cond_dims: Vec<usize>,
    p: Vec<f64>,
}

impl StochasticMatrix {
    pub fn new(out_dim: usize, cond_dims: Vec<usize>, p: Vec<f64>, tol: f64) -> Result<Self> {
        let rows: usize = cond_dims.iter().product::<usize>().max(1);
        if out_dim == 0 {
            return Err(Error::invalid("stochastic matrix", "empty output alphabet"));
        }
        if p.len() != rows * out_dim {
            return Err(Error::shape(format!(
                "table has {} entries, expected {}",
                p.len(),
                rows * out_dim
            )));
        }
        let m = StochasticMatrix {
            out_dim,
            cond_dims,
            p,
        };
        m.validate(tol)?;
        Ok(m)
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        for row in 0..self.rows() {
            let mut sum = 0.0;
            for y in 0..self.out_dim {
                let v = self.p[row * self.out_dim + y];
                if !(v >= -tol) {
                    return Err(Error::invalid(
                        "stochastic matrix",
                        format!("negative probability {v:.3e} in row {row}"),
                    ));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > tol.max(1e-12) * 10.0 {
                return Err(Error::invalid(
                    "stochastic matrix",
                    format!("row {row} sums to {sum}, not 1"),
                ));
            }
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.cond_dims.iter().product::<usize>().max(1)
    }

    pub fn uniform(out_dim: usize, cond_dims: Vec<usize>) -> Self {
        let rows: usize = cond_dims.iter().product::<usize>().max(1);
        StochasticMatrix {
            out_dim,
            cond_dims,
            p: vec![1.0 / out_dim as f64; rows * out_dim],
        }
    }

    /// Deterministic table `y = f(conditions)`.
    pub fn deterministic(
        out_dim: usize,
        cond_dims: Vec<usize>,
        f: impl Fn(&[usize]) -> usize,
    ) -> Result<Self> {
        let rows: usize = cond_dims.iter().product::<usize>().max(1);
        let mut p = vec![0.0; rows * out_dim];
        let mut idx = vec![0usize; cond_dims.len()];
        for row in 0..rows {
            decode_row(row, &cond_dims, &mut idx);
            let y = f(&idx);
            if y >= out_dim {
                return Err(Error::shape(format!(
                    "deterministic target {y} out of range {out_dim}"
                )));
            }
            p[row * out_dim + y] = 1.0;
        }
        Ok(StochasticMatrix {
            out_dim,
            cond_dims,
            p,
        })
    }

    pub fn row_index(&self, cond: &[usize]) -> usize {
        debug_assert_eq!(cond.len(), self.cond_dims.len());
        let mut row = 0usize;
        for (k, &c) in cond.iter().enumerate() {
            debug_assert!(c < self.cond_dims[k]);
            row = row * self.cond_dims[k] + c;
        }
        row
    }

    pub fn get(&self, y: usize, cond: &[usize]) -> f64 {
        self.p[self.row_index(cond) * self.out_dim + y]
    }

    pub fn set(&mut self, y: usize, cond: &[usize], v: f64) {
        let row = self.row_index(cond);
        self.p[row * self.out_dim + y] = v;
    }

    pub fn row(&self, cond: &[usize]) -> &[f64] {
        let row = self.row_index(cond);
        &self.p[row * self.out_dim..(row + 1) * self.out_dim]
    }

    pub fn row_mut(&mut self, cond: &[usize]) -> &mut [f64] {
        let row = self.row_index(cond);
        &mut self.p[row * self.out_dim..(row + 1) * self.out_dim]
    }

    /// Renormalizes every row, mapping all-zero rows to uniform. Used when a
    /// conditional is rebuilt from a joint distribution.
    pub fn renormalize(&mut self) {
        for row in 0..self.rows() {
            let slice = &mut self.p[row * self.out_dim..(row + 1) * self.out_dim];
            let sum: f64 = slice.iter().sum();
            if sum > 1e-300 {
                for v in slice.iter_mut() {
                    *v /= sum;
                }
            } else {
                for v in slice.iter_mut() {
                    *v = 1.0 / self.out_dim as f64;
                }
            }
        }
    }
}

pub(crate) fn decode_row(mut row: usize, dims: &[usize], out: &mut [usize]) {
    for k in (0..dims.len()).rev() {
        out[k] = row % dims[k];
        row /= dims[k];
    }
}
