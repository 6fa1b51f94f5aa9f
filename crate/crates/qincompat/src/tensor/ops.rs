use nalgebra::DMatrix;
use num_complex::Complex64;

use super::block::{HermitianBlock, StateVector, SystemLabel};
use super::{decode, strides};
use crate::error::{Error, Result};

/// Splits the systems of a block into a kept part and a selected part and
/// precomputes the strides needed to rebuild full composite indices.
struct IndexSplit {
    kept_dims: Vec<usize>,
    sel_dims: Vec<usize>,
    kept_strides: Vec<usize>,
    sel_strides: Vec<usize>,
    kept_total: usize,
    sel_total: usize,
}

impl IndexSplit {
    fn new(block: &HermitianBlock, selected: &[&str]) -> Result<Self> {
        let mut sel_pos = Vec::with_capacity(selected.len());
        for name in selected {
            let p = block.position_of(name)?;
            if sel_pos.contains(&p) {
                return Err(Error::DuplicateLabel((*name).to_string()));
            }
            sel_pos.push(p);
        }
        let dims = block.dims();
        let full_strides = strides(&dims);
        let mut kept_dims = Vec::new();
        let mut kept_strides = Vec::new();
        let mut sel_dims = vec![0; sel_pos.len()];
        let mut sel_strides = vec![0; sel_pos.len()];
        for (p, (&d, &s)) in dims.iter().zip(full_strides.iter()).enumerate() {
            if let Some(k) = sel_pos.iter().position(|&q| q == p) {
                sel_dims[k] = d;
                sel_strides[k] = s;
            } else {
                kept_dims.push(d);
                kept_strides.push(s);
            }
        }
        let kept_total = kept_dims.iter().product::<usize>().max(1);
        let sel_total = sel_dims.iter().product::<usize>().max(1);
        Ok(IndexSplit {
            kept_dims,
            sel_dims,
            kept_strides,
            sel_strides,
            kept_total,
            sel_total,
        })
    }

    /// Composite index from linear indices over the kept and selected parts.
    fn full(&self, kept_lin: usize, sel_lin: usize) -> usize {
        let mut idx = 0usize;
        let mut buf = [0usize; 16];
        let kd = self.kept_dims.len();
        decode(kept_lin, &self.kept_dims, &mut buf[..kd]);
        for k in 0..kd {
            idx += buf[k] * self.kept_strides[k];
        }
        let sd = self.sel_dims.len();
        decode(sel_lin, &self.sel_dims, &mut buf[..sd]);
        for k in 0..sd {
            idx += buf[k] * self.sel_strides[k];
        }
        idx
    }
}

impl HermitianBlock {
    /// Kronecker product; system lists concatenate, names must stay unique.
    pub fn kron(&self, other: &HermitianBlock) -> Result<HermitianBlock> {
        for s in &other.systems {
            if self.has_system(&s.name) {
                return Err(Error::DuplicateLabel(s.name.clone()));
            }
        }
        let mut systems = self.systems.clone();
        systems.extend(other.systems.iter().cloned());
        Ok(HermitianBlock {
            systems,
            mat: self.mat.kronecker(&other.mat),
        })
    }

    /// Traces out the named systems; remaining systems keep their order.
    pub fn partial_trace(&self, discard: &[&str]) -> Result<HermitianBlock> {
        let split = IndexSplit::new(self, discard)?;
        let keep: Vec<SystemLabel> = self
            .systems
            .iter()
            .filter(|s| !discard.contains(&s.name.as_str()))
            .cloned()
            .collect();
        let n = split.kept_total;
        let mut out = DMatrix::zeros(n, n);
        for r in 0..n {
            for c in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for d in 0..split.sel_total {
                    acc += self.mat[(split.full(r, d), split.full(c, d))];
                }
                out[(r, c)] = acc;
            }
        }
        HermitianBlock::new(keep, out)
    }

    /// Transposes the named subsystems in place of the full transpose.
    pub fn partial_transpose(&self, on: &[&str]) -> Result<HermitianBlock> {
        let split = IndexSplit::new(self, on)?;
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        for rk in 0..split.kept_total {
            for ck in 0..split.kept_total {
                for rs in 0..split.sel_total {
                    for cs in 0..split.sel_total {
                        out[(split.full(rk, cs), split.full(ck, rs))] =
                            self.mat[(split.full(rk, rs), split.full(ck, cs))];
                    }
                }
            }
        }
        HermitianBlock::new(self.systems.clone(), out)
    }

    /// Removes coherences between different computational-basis sectors of
    /// the named system: entries with unequal row and column index on that
    /// system are zeroed.
    pub fn pinch(&self, on: &str) -> Result<HermitianBlock> {
        let split = IndexSplit::new(self, &[on])?;
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        for rk in 0..split.kept_total {
            for ck in 0..split.kept_total {
                for s in 0..split.sel_total {
                    let (i, j) = (split.full(rk, s), split.full(ck, s));
                    out[(i, j)] = self.mat[(i, j)];
                }
            }
        }
        HermitianBlock::new(self.systems.clone(), out)
    }

    /// Reorders the system list; the matrix is permuted accordingly.
    pub fn permute_systems(&self, order: &[&str]) -> Result<HermitianBlock> {
        if order.len() != self.systems.len() {
            return Err(Error::shape(format!(
                "permutation lists {} systems, block has {}",
                order.len(),
                self.systems.len()
            )));
        }
        let mut perm = Vec::with_capacity(order.len());
        for name in order {
            let p = self.position_of(name)?;
            if perm.contains(&p) {
                return Err(Error::DuplicateLabel((*name).to_string()));
            }
            perm.push(p);
        }
        let old_dims = self.dims();
        let old_strides = strides(&old_dims);
        let new_systems: Vec<SystemLabel> =
            perm.iter().map(|&p| self.systems[p].clone()).collect();
        let new_dims: Vec<usize> = new_systems.iter().map(|s| s.dim).collect();
        let n = self.dim();
        // Map each new composite index to the old one.
        let mut map = vec![0usize; n];
        let mut buf = vec![0usize; new_dims.len()];
        for (lin, m) in map.iter_mut().enumerate() {
            decode(lin, &new_dims, &mut buf);
            let mut old = 0usize;
            for (k, &p) in perm.iter().enumerate() {
                old += buf[k] * old_strides[p];
            }
            *m = old;
        }
        let mat = DMatrix::from_fn(n, n, |i, j| self.mat[(map[i], map[j])]);
        HermitianBlock::new(new_systems, mat)
    }

    /// Renames a system in place; dimension is unchanged.
    pub fn rename_system(&mut self, from: &str, to: &str) -> Result<()> {
        if from != to && self.has_system(to) {
            return Err(Error::DuplicateLabel(to.to_string()));
        }
        let p = self.position_of(from)?;
        self.systems[p].name = to.to_string();
        Ok(())
    }

    /// Unnormalized maximally entangled operator
    /// `Omega = sum_{m,n} |m><n| (x) |m><n|` on `out (x) inp`; both labels
    /// must share one dimension. This is the Choi operator of the identity
    /// channel.
    pub fn max_entangled(out: SystemLabel, inp: SystemLabel) -> Result<HermitianBlock> {
        if out.dim != inp.dim {
            return Err(Error::shape(format!(
                "max_entangled needs equal dimensions, got {} and {}",
                out.dim, inp.dim
            )));
        }
        let d = out.dim;
        let n = d * d;
        let mut mat = DMatrix::zeros(n, n);
        for m in 0..d {
            for k in 0..d {
                mat[(m * d + m, k * d + k)] = Complex64::new(1.0, 0.0);
            }
        }
        HermitianBlock::new(vec![out, inp], mat)
    }
}

/// Normalized maximally entangled state `|Phi+> = (1/sqrt d) sum_m |m>|m>`.
pub fn bell_phi_plus(a: SystemLabel, b: SystemLabel) -> Result<StateVector> {
    if a.dim != b.dim {
        return Err(Error::shape(format!(
            "bell state needs equal dimensions, got {} and {}",
            a.dim, b.dim
        )));
    }
    let d = a.dim;
    let mut v = nalgebra::DVector::zeros(d * d);
    let amp = Complex64::new(1.0 / (d as f64).sqrt(), 0.0);
    for m in 0..d {
        v[m * d + m] = amp;
    }
    StateVector::new(vec![a, b], v)
}
