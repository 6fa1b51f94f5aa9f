use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::block::HermitianBlock;

/// Eigendecomposition of a Hermitian block: real eigenvalues in ascending
/// order, eigenvectors as the matching columns of a unitary.
#[derive(Debug, Clone)]
pub struct HermitianEig {
    pub values: DVector<f64>,
    pub vectors: DMatrix<Complex64>,
}

impl HermitianBlock {
    /// Hermitian eigendecomposition with eigenvalues sorted ascending.
    /// The matrix is symmetrized first, so tiny Hermiticity defects from
    /// accumulated rounding do not leak into the spectrum. Within a
    /// degenerate cluster only the spanned projector is meaningful.
    pub fn eig_hermitian(&self) -> HermitianEig {
        let h = (&self.mat + self.mat.adjoint()) * Complex64::new(0.5, 0.0);
        let se = h.symmetric_eigen();
        let n = se.eigenvalues.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            se.eigenvalues[a]
                .partial_cmp(&se.eigenvalues[b])
                .expect("hermitian eigenvalues are finite")
        });
        let values = DVector::from_fn(n, |i, _| se.eigenvalues[order[i]]);
        let mut vectors = DMatrix::zeros(n, n);
        for (new, &old) in order.iter().enumerate() {
            vectors.set_column(new, &se.eigenvectors.column(old));
        }
        HermitianEig { values, vectors }
    }

    pub fn lambda_min(&self) -> f64 {
        let e = self.eig_hermitian();
        if e.values.is_empty() {
            0.0
        } else {
            e.values[0]
        }
    }

    pub fn lambda_max(&self) -> f64 {
        let e = self.eig_hermitian();
        if e.values.is_empty() {
            0.0
        } else {
            e.values[e.values.len() - 1]
        }
    }

    /// Nearest positive semidefinite matrix in Frobenius norm: negative
    /// eigenvalues are clipped to zero.
    pub fn project_psd(&self) -> HermitianBlock {
        let e = self.eig_hermitian();
        let n = e.values.len();
        let mut mat = DMatrix::zeros(n, n);
        for k in 0..n {
            let lam = e.values[k];
            if lam <= 0.0 {
                continue;
            }
            let v = e.vectors.column(k);
            for i in 0..n {
                for j in 0..n {
                    mat[(i, j)] += v[i] * v[j].conj() * Complex64::new(lam, 0.0);
                }
            }
        }
        let mat = (&mat + mat.adjoint()) * Complex64::new(0.5, 0.0);
        HermitianBlock {
            systems: self.systems.clone(),
            mat,
        }
    }

    /// `f(self)` through the spectral decomposition, for Hermitian blocks.
    pub fn spectral_map(&self, f: impl Fn(f64) -> f64) -> HermitianBlock {
        let e = self.eig_hermitian();
        let n = e.values.len();
        let mut mat = DMatrix::zeros(n, n);
        for k in 0..n {
            let lam = f(e.values[k]);
            if lam == 0.0 {
                continue;
            }
            let v = e.vectors.column(k);
            for i in 0..n {
                for j in 0..n {
                    mat[(i, j)] += v[i] * v[j].conj() * Complex64::new(lam, 0.0);
                }
            }
        }
        let mat = (&mat + mat.adjoint()) * Complex64::new(0.5, 0.0);
        HermitianBlock {
            systems: self.systems.clone(),
            mat,
        }
    }
}
