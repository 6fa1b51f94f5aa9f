use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A named finite-dimensional system.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SystemLabel {
    pub name: String,
    pub dim: usize,
}

impl SystemLabel {
    pub fn new(name: impl Into<String>, dim: usize) -> Self {
        SystemLabel {
            name: name.into(),
            dim,
        }
    }
}

/// Dense complex operator on an ordered tensor product of labeled systems.
///
/// The name reflects the dominant use (Hermitian blocks of states, effects
/// and Choi operators); intermediate products may be non-Hermitian, so
/// Hermiticity is checked only where an invariant requires it.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianBlock {
    pub systems: Vec<SystemLabel>,
    pub mat: DMatrix<Complex64>,
}

impl HermitianBlock {
    /// Wraps a matrix, validating that its size matches the product of the
    /// system dimensions and that labels are unique.
    pub fn new(systems: Vec<SystemLabel>, mat: DMatrix<Complex64>) -> Result<Self> {
        let dim: usize = systems.iter().map(|s| s.dim).product();
        if systems.iter().any(|s| s.dim == 0) {
            return Err(Error::shape("zero-dimensional system"));
        }
        for (i, s) in systems.iter().enumerate() {
            if systems[..i].iter().any(|t| t.name == s.name) {
                return Err(Error::DuplicateLabel(s.name.clone()));
            }
        }
        if mat.nrows() != dim || mat.ncols() != dim {
            return Err(Error::shape(format!(
                "matrix is {}x{} but labels give total dimension {}",
                mat.nrows(),
                mat.ncols(),
                dim
            )));
        }
        Ok(HermitianBlock { systems, mat })
    }

    pub fn zeros(systems: Vec<SystemLabel>) -> Self {
        let dim: usize = systems.iter().map(|s| s.dim).product();
        HermitianBlock {
            systems,
            mat: DMatrix::zeros(dim, dim),
        }
    }

    pub fn identity(systems: Vec<SystemLabel>) -> Self {
        let dim: usize = systems.iter().map(|s| s.dim).product();
        HermitianBlock {
            systems,
            mat: DMatrix::identity(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.systems.iter().map(|s| s.dim).collect()
    }

    pub fn position_of(&self, name: &str) -> Result<usize> {
        self.systems
            .iter()
            .position(|s| s.name == name)
            .ok_or_else(|| Error::UnknownLabel(name.to_string()))
    }

    pub fn has_system(&self, name: &str) -> bool {
        self.systems.iter().any(|s| s.name == name)
    }

    /// Largest absolute deviation from Hermiticity.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.mat.nrows();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                let d = (self.mat[(i, j)] - self.mat[(j, i)].conj()).norm();
                if d > worst {
                    worst = d;
                }
            }
        }
        worst
    }

    pub fn check_hermitian(&self, tol: f64) -> Result<()> {
        let d = self.hermiticity_defect();
        if d > tol {
            Err(Error::NotHermitian {
                deviation: d,
                tol,
            })
        } else {
            Ok(())
        }
    }

    /// Replaces the matrix by its Hermitian part. Cheap insurance after long
    /// chains of floating-point products.
    pub fn hermitize(&mut self) {
        let h = (&self.mat + self.mat.adjoint()) * Complex64::new(0.5, 0.0);
        self.mat = h;
    }

    pub fn trace(&self) -> Complex64 {
        self.mat.trace()
    }

    /// Real part of the Hilbert-Schmidt inner product `Tr[self† other]`.
    pub fn inner(&self, other: &HermitianBlock) -> f64 {
        let n = self.mat.nrows();
        debug_assert_eq!(n, other.mat.nrows());
        let mut acc = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                let a = self.mat[(i, j)];
                let b = other.mat[(i, j)];
                acc += a.re * b.re + a.im * b.im;
            }
        }
        acc
    }

    pub fn norm_fro(&self) -> f64 {
        self.mat.norm()
    }

    pub fn scale(&self, s: f64) -> Self {
        HermitianBlock {
            systems: self.systems.clone(),
            mat: &self.mat * Complex64::new(s, 0.0),
        }
    }

    pub fn add(&self, other: &HermitianBlock) -> Result<Self> {
        if self.systems != other.systems {
            return Err(Error::shape("adding blocks with different system lists"));
        }
        Ok(HermitianBlock {
            systems: self.systems.clone(),
            mat: &self.mat + &other.mat,
        })
    }

    pub fn sub(&self, other: &HermitianBlock) -> Result<Self> {
        if self.systems != other.systems {
            return Err(Error::shape(
                "subtracting blocks with different system lists",
            ));
        }
        Ok(HermitianBlock {
            systems: self.systems.clone(),
            mat: &self.mat - &other.mat,
        })
    }

    /// Matrix product on identical system lists.
    pub fn matmul(&self, other: &HermitianBlock) -> Result<Self> {
        if self.systems != other.systems {
            return Err(Error::shape(
                "multiplying blocks with different system lists",
            ));
        }
        Ok(HermitianBlock {
            systems: self.systems.clone(),
            mat: &self.mat * &other.mat,
        })
    }

    pub fn transpose(&self) -> Self {
        HermitianBlock {
            systems: self.systems.clone(),
            mat: self.mat.transpose(),
        }
    }

    pub fn max_abs_diff(&self, other: &HermitianBlock) -> f64 {
        let mut worst = 0.0f64;
        for (a, b) in self.mat.iter().zip(other.mat.iter()) {
            let d = (a - b).norm();
            if d > worst {
                worst = d;
            }
        }
        worst
    }
}

/// Dense vector on a labeled tensor product, same indexing convention as
/// [`HermitianBlock`].
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub systems: Vec<SystemLabel>,
    pub amp: DVector<Complex64>,
}

impl StateVector {
    pub fn new(systems: Vec<SystemLabel>, amp: DVector<Complex64>) -> Result<Self> {
        let dim: usize = systems.iter().map(|s| s.dim).product();
        if amp.len() != dim {
            return Err(Error::shape(format!(
                "vector has length {} but labels give dimension {}",
                amp.len(),
                dim
            )));
        }
        Ok(StateVector { systems, amp })
    }

    /// Computational basis vector `|k>` on a single system.
    pub fn basis(system: SystemLabel, k: usize) -> Result<Self> {
        if k >= system.dim {
            return Err(Error::shape(format!(
                "basis index {} out of range for dimension {}",
                k, system.dim
            )));
        }
        let mut amp = DVector::zeros(system.dim);
        amp[k] = Complex64::new(1.0, 0.0);
        Ok(StateVector {
            systems: vec![system],
            amp,
        })
    }

    pub fn normalize(&mut self) {
        let n = self.amp.norm();
        if n > 0.0 {
            self.amp /= Complex64::new(n, 0.0);
        }
    }

    /// Rank-one projector `|v><v|`.
    pub fn outer(&self) -> HermitianBlock {
        let n = self.amp.len();
        let mat = DMatrix::from_fn(n, n, |i, j| self.amp[i] * self.amp[j].conj());
        HermitianBlock {
            systems: self.systems.clone(),
            mat,
        }
    }

    pub fn kron(&self, other: &StateVector) -> Result<StateVector> {
        for s in &other.systems {
            if self.systems.iter().any(|t| t.name == s.name) {
                return Err(Error::DuplicateLabel(s.name.clone()));
            }
        }
        let mut systems = self.systems.clone();
        systems.extend(other.systems.iter().cloned());
        let amp = self.amp.kronecker(&other.amp);
        Ok(StateVector { systems, amp })
    }
}
