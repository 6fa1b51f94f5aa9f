use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tensor::HermitianBlock;

/// One PSD-constrained Hermitian block.
#[derive(Debug, Clone)]
pub struct BlockSpec {
    pub name: String,
    pub dim: usize,
}

/// Real-linear equality `sum_b <G_{r,b}, X_b> = rhs` with Hermitian
/// coefficient matrices, sparse over blocks.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub label: String,
    pub terms: Vec<(usize, DMatrix<Complex64>)>,
    pub rhs: f64,
}

/// Affine section of a product of PSD cones.
#[derive(Debug, Clone)]
pub struct AffinePsdProblem {
    pub blocks: Vec<BlockSpec>,
    pub constraints: Vec<Constraint>,
    /// Index of a redundant aggregate-trace row (identity coefficient on
    /// every block), when the builder provided one. Used to repair witnesses
    /// whose aggregated matrix pokes marginally above zero.
    pub trace_row: Option<usize>,
}

impl AffinePsdProblem {
    pub fn new(blocks: Vec<BlockSpec>) -> Self {
        AffinePsdProblem {
            blocks,
            constraints: Vec::new(),
            trace_row: None,
        }
    }

    pub fn block_index(&self, name: &str) -> Result<usize> {
        self.blocks
            .iter()
            .position(|b| b.name == name)
            .ok_or_else(|| Error::UnknownLabel(name.to_string()))
    }

    pub fn add_constraint(
        &mut self,
        label: impl Into<String>,
        terms: Vec<(usize, DMatrix<Complex64>)>,
        rhs: f64,
    ) -> Result<usize> {
        let label = label.into();
        for (b, g) in &terms {
            let dim = self
                .blocks
                .get(*b)
                .ok_or_else(|| Error::shape(format!("constraint {label}: no block {b}")))?
                .dim;
            if g.nrows() != dim || g.ncols() != dim {
                return Err(Error::shape(format!(
                    "constraint {label}: coefficient is {}x{}, block {} has dim {}",
                    g.nrows(),
                    g.ncols(),
                    b,
                    dim
                )));
            }
            let defect = (g - g.adjoint()).norm();
            if defect > 1e-9 {
                return Err(Error::invalid(
                    "constraint",
                    format!("{label}: coefficient not Hermitian (defect {defect:.3e})"),
                ));
            }
        }
        self.constraints.push(Constraint {
            label,
            terms,
            rhs,
        });
        Ok(self.constraints.len() - 1)
    }

    /// Adds the redundant row `sum_b Tr X_b = total` used for witness
    /// repair. Callers must pass a value implied by the other constraints.
    pub fn add_trace_row(&mut self, total: f64) -> Result<()> {
        let terms = self
            .blocks
            .iter()
            .enumerate()
            .map(|(b, spec)| (b, DMatrix::identity(spec.dim, spec.dim)))
            .collect();
        let idx = self.add_constraint("aggregate-trace", terms, total)?;
        self.trace_row = Some(idx);
        Ok(())
    }

    /// Adds one scalar row per Hermitian basis element of the target,
    /// encoding the matrix equality `sum_b L_b(X_b) = target` where each
    /// `L_b` is given through its adjoint action on basis elements:
    /// `coeff(b, beta)` must return `L_b^†(beta)`.
    pub fn add_matrix_eq(
        &mut self,
        label: &str,
        block_ids: &[usize],
        coeff: impl Fn(usize, &DMatrix<Complex64>) -> DMatrix<Complex64>,
        target: &DMatrix<Complex64>,
    ) -> Result<()> {
        let d = target.nrows();
        for (k, beta) in hermitian_basis(d).iter().enumerate() {
            let rhs = re_inner(beta, target);
            let terms: Vec<(usize, DMatrix<Complex64>)> = block_ids
                .iter()
                .map(|&b| (b, coeff(b, beta)))
                .collect();
            self.add_constraint(format!("{label}[{k}]"), terms, rhs)?;
        }
        Ok(())
    }

    pub fn total_real_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.dim * b.dim).sum()
    }

    pub fn block_offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.blocks.len());
        let mut acc = 0;
        for b in &self.blocks {
            off.push(acc);
            acc += b.dim * b.dim;
        }
        off
    }

    /// Dense real constraint matrix and right-hand side over the isometric
    /// real coordinates of all blocks.
    pub fn assemble(&self) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.total_real_dim();
        let m = self.constraints.len();
        let offsets = self.block_offsets();
        let mut a = DMatrix::zeros(m, n);
        let mut rhs = DVector::zeros(m);
        let mut scratch = vec![0.0f64; n];
        for (r, con) in self.constraints.iter().enumerate() {
            rhs[r] = con.rhs;
            for (b, g) in &con.terms {
                let d = self.blocks[*b].dim;
                vectorize_into(g, &mut scratch[..d * d]);
                for (k, v) in scratch[..d * d].iter().enumerate() {
                    a[(r, offsets[*b] + k)] += v;
                }
            }
        }
        (a, rhs)
    }

    /// Evaluates every constraint on an assignment; returns the residual
    /// vector `lhs - rhs`.
    pub fn residuals(&self, assignment: &[HermitianBlock]) -> Result<Vec<f64>> {
        if assignment.len() != self.blocks.len() {
            return Err(Error::shape(format!(
                "assignment has {} blocks, problem {}",
                assignment.len(),
                self.blocks.len()
            )));
        }
        for (x, spec) in assignment.iter().zip(self.blocks.iter()) {
            if x.dim() != spec.dim {
                return Err(Error::shape(format!(
                    "block {} has dim {}, expected {}",
                    spec.name,
                    x.dim(),
                    spec.dim
                )));
            }
        }
        Ok(self
            .constraints
            .iter()
            .map(|con| {
                let lhs: f64 = con
                    .terms
                    .iter()
                    .map(|(b, g)| re_inner(g, &assignment[*b].mat))
                    .sum();
                lhs - con.rhs
            })
            .collect())
    }
}

/// Real part of the Frobenius pairing `Tr[A^† B]`.
pub fn re_inner(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        acc += x.re * y.re + x.im * y.im;
    }
    acc
}

/// Isometric real coordinates of a Hermitian `d x d` matrix: the diagonal,
/// then `sqrt(2) Re`, `sqrt(2) Im` of the upper triangle. Preserves inner
/// products, so affine projections can be done in real arithmetic.
pub fn vectorize_into(m: &DMatrix<Complex64>, out: &mut [f64]) {
    let d = m.nrows();
    debug_assert_eq!(out.len(), d * d);
    let s = std::f64::consts::SQRT_2;
    let mut k = 0;
    for i in 0..d {
        out[k] = m[(i, i)].re;
        k += 1;
    }
    for i in 0..d {
        for j in (i + 1)..d {
            out[k] = s * m[(i, j)].re;
            k += 1;
            out[k] = s * m[(i, j)].im;
            k += 1;
        }
    }
}

/// Inverse of [`vectorize_into`].
pub fn unvectorize(coords: &[f64], d: usize) -> DMatrix<Complex64> {
    debug_assert_eq!(coords.len(), d * d);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut m = DMatrix::zeros(d, d);
    for i in 0..d {
        m[(i, i)] = Complex64::new(coords[i], 0.0);
    }
    let mut k = d;
    for i in 0..d {
        for j in (i + 1)..d {
            let re = coords[k] * s;
            k += 1;
            let im = coords[k] * s;
            k += 1;
            m[(i, j)] = Complex64::new(re, im);
            m[(j, i)] = Complex64::new(re, -im);
        }
    }
    m
}

/// Orthonormal Hermitian basis of `d x d`: diagonal units, then
/// `(E_ij + E_ji)/sqrt2` and `(i E_ij - i E_ji)/sqrt2` for `i < j`.
pub fn hermitian_basis(d: usize) -> Vec<DMatrix<Complex64>> {
    let mut out = Vec::with_capacity(d * d);
    for i in 0..d {
        let mut m = DMatrix::zeros(d, d);
        m[(i, i)] = Complex64::new(1.0, 0.0);
        out.push(m);
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..d {
        for j in (i + 1)..d {
            let mut m = DMatrix::zeros(d, d);
            m[(i, j)] = Complex64::new(s, 0.0);
            m[(j, i)] = Complex64::new(s, 0.0);
            out.push(m);
            let mut m = DMatrix::zeros(d, d);
            m[(i, j)] = Complex64::new(0.0, s);
            m[(j, i)] = Complex64::new(0.0, -s);
            out.push(m);
        }
    }
    out
}
