use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tensor::{HermitianBlock, SystemLabel};

/// Label under which the input copy of system `s` appears inside a Choi
/// block.
pub fn in_label(s: &SystemLabel) -> SystemLabel {
    SystemLabel::new(format!("{}@in", s.name), s.dim)
}

/// A linear map between labeled systems, stored through its Choi operator on
/// `outputs (x) inputs`. Complete positivity and trace preservation are
/// properties checked on demand, not enforced by the type.
#[derive(Debug, Clone, PartialEq)]
pub struct CpMap {
    pub inputs: Vec<SystemLabel>,
    pub outputs: Vec<SystemLabel>,
    pub choi: HermitianBlock,
}

impl CpMap {
    /// Wraps a Choi block; its systems must be exactly `outputs` followed by
    /// the decorated `inputs`.
    pub fn new(
        inputs: Vec<SystemLabel>,
        outputs: Vec<SystemLabel>,
        choi: HermitianBlock,
    ) -> Result<Self> {
        let mut want: Vec<SystemLabel> = outputs.clone();
        want.extend(inputs.iter().map(in_label));
        if choi.systems != want {
            return Err(Error::shape(format!(
                "choi systems {:?} do not match declared outputs+inputs {:?}",
                choi.systems.iter().map(|s| &s.name).collect::<Vec<_>>(),
                want.iter().map(|s| &s.name).collect::<Vec<_>>()
            )));
        }
        Ok(CpMap {
            inputs,
            outputs,
            choi,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.inputs.iter().map(|s| s.dim).product()
    }

    pub fn out_dim(&self) -> usize {
        self.outputs.iter().map(|s| s.dim).product()
    }

    fn in_names(&self) -> Vec<String> {
        self.inputs.iter().map(|s| in_label(s).name).collect()
    }

    /// Builds the Choi operator from a Kraus family: `C[(b,m),(b',n)] =
    /// sum_k K_k[b,m] conj(K_k[b',n])`.
    pub fn from_kraus(
        inputs: Vec<SystemLabel>,
        outputs: Vec<SystemLabel>,
        kraus: &[DMatrix<Complex64>],
    ) -> Result<Self> {
        let din: usize = inputs.iter().map(|s| s.dim).product();
        let dout: usize = outputs.iter().map(|s| s.dim).product();
        for k in kraus {
            if k.nrows() != dout || k.ncols() != din {
                return Err(Error::shape(format!(
                    "kraus operator is {}x{}, expected {}x{}",
                    k.nrows(),
                    k.ncols(),
                    dout,
                    din
                )));
            }
        }
        let n = dout * din;
        let mut mat = DMatrix::zeros(n, n);
        for k in kraus {
            for b in 0..dout {
                for m in 0..din {
                    let x = k[(b, m)];
                    if x == Complex64::new(0.0, 0.0) {
                        continue;
                    }
                    for bp in 0..dout {
                        for np in 0..din {
                            mat[(b * din + m, bp * din + np)] += x * k[(bp, np)].conj();
                        }
                    }
                }
            }
        }
        let mut systems: Vec<SystemLabel> = outputs.clone();
        systems.extend(inputs.iter().map(in_label));
        Ok(CpMap {
            inputs,
            outputs,
            choi: HermitianBlock::new(systems, mat)?,
        })
    }

    /// Identity channel on the given systems.
    pub fn identity(systems: Vec<SystemLabel>) -> Result<Self> {
        let d: usize = systems.iter().map(|s| s.dim).product();
        Self::from_kraus(systems.clone(), systems, &[DMatrix::identity(d, d)])
    }

    /// Channel that discards the input and prepares `state` on its systems.
    pub fn prepare(inputs: Vec<SystemLabel>, state: &HermitianBlock) -> Result<Self> {
        let id_in = HermitianBlock::identity(inputs.iter().map(in_label).collect());
        let choi = state.kron(&id_in)?;
        CpMap::new(inputs, state.systems.clone(), choi)
    }

    /// Map that discards the input entirely (output is the trivial system).
    pub fn discard(inputs: Vec<SystemLabel>) -> Result<Self> {
        let id_in = HermitianBlock::identity(inputs.iter().map(in_label).collect());
        CpMap::new(inputs, vec![], id_in)
    }

    /// Applies the map to a state given on the input systems (any order).
    pub fn apply(&self, rho: &HermitianBlock) -> Result<HermitianBlock> {
        let want: Vec<&str> = self.inputs.iter().map(|s| s.name.as_str()).collect();
        let mut aligned = rho.permute_systems(&want)?;
        if aligned.systems != self.inputs {
            return Err(Error::shape("state systems do not match map inputs"));
        }
        for s in aligned.systems.iter_mut() {
            s.name = format!("{}@in", s.name);
        }
        let rho_t = aligned.transpose();
        let embedded = HermitianBlock::identity(self.outputs.clone()).kron(&rho_t)?;
        let prod = self.choi.matmul(&embedded)?;
        let names = self.in_names();
        let name_refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
        prod.partial_trace(&name_refs)
    }

    /// Induced effect on the input: `E = (Tr_out C)^T`, so that
    /// `Tr[F(rho)] = Tr[E rho]`.
    pub fn effect(&self) -> Result<HermitianBlock> {
        let out_names: Vec<&str> = self.outputs.iter().map(|s| s.name.as_str()).collect();
        let mut e = self.choi.partial_trace(&out_names)?.transpose();
        for s in e.systems.iter_mut() {
            s.name = s
                .name
                .strip_suffix("@in")
                .map(|b| b.to_string())
                .unwrap_or_else(|| s.name.clone());
        }
        e.hermitize();
        Ok(e)
    }

    /// Sequential composition `second . first`. The mid systems are matched
    /// by label between `first.outputs` and `second.inputs`.
    pub fn compose(second: &CpMap, first: &CpMap) -> Result<CpMap> {
        if second.inputs != first.outputs {
            return Err(Error::shape(format!(
                "composition mismatch: inner outputs {:?}, outer inputs {:?}",
                first.outputs.iter().map(|s| &s.name).collect::<Vec<_>>(),
                second.inputs.iter().map(|s| &s.name).collect::<Vec<_>>()
            )));
        }
        // Rename the shared mid systems to reserved temporaries on both
        // Choi blocks so arbitrary user labels cannot collide.
        let mids: Vec<SystemLabel> = first
            .outputs
            .iter()
            .enumerate()
            .map(|(k, s)| SystemLabel::new(format!("@mid{k}"), s.dim))
            .collect();
        let mut g = second.choi.clone();
        for (k, s) in second.inputs.iter().enumerate() {
            g.rename_system(&in_label(s).name, &mids[k].name)?;
        }
        let mut f = first.choi.clone();
        for (k, s) in first.outputs.iter().enumerate() {
            f.rename_system(&s.name, &mids[k].name)?;
        }
        let mid_names: Vec<&str> = mids.iter().map(|s| s.name.as_str()).collect();
        let f_pt = f.partial_transpose(&mid_names)?;

        // Embed both on B (x) mid (x) A@in in one fixed order, multiply,
        // trace out the mids.
        let a_in: Vec<SystemLabel> = first.inputs.iter().map(in_label).collect();
        let b_out = second.outputs.clone();
        let mut order: Vec<String> = b_out.iter().map(|s| s.name.clone()).collect();
        order.extend(mids.iter().map(|s| s.name.clone()));
        order.extend(a_in.iter().map(|s| s.name.clone()));
        let order_refs: Vec<&str> = order.iter().map(|s| s.as_str()).collect();

        let left = g
            .kron(&HermitianBlock::identity(a_in.clone()))?
            .permute_systems(&order_refs)?;
        let right = HermitianBlock::identity(b_out.clone())
            .kron(&f_pt)?
            .permute_systems(&order_refs)?;
        let prod = left.matmul(&right)?;
        let mut choi = prod.partial_trace(&mid_names)?;
        choi.hermitize();
        CpMap::new(first.inputs.clone(), b_out, choi)
    }

    /// Extends the map with an untouched ancilla: `F (x) id_M`. The ancilla
    /// is appended to both system lists.
    pub fn extended_channel(&self, ancilla: &SystemLabel) -> Result<CpMap> {
        if self.inputs.iter().chain(self.outputs.iter()).any(|s| s.name == ancilla.name) {
            return Err(Error::DuplicateLabel(ancilla.name.clone()));
        }
        let omega = HermitianBlock::max_entangled(ancilla.clone(), in_label(ancilla))?;
        let big = self.choi.kron(&omega)?;
        let mut outputs = self.outputs.clone();
        outputs.push(ancilla.clone());
        let mut inputs = self.inputs.clone();
        inputs.push(ancilla.clone());
        let mut order: Vec<String> = outputs.iter().map(|s| s.name.clone()).collect();
        order.extend(inputs.iter().map(|s| in_label(s).name));
        let order_refs: Vec<&str> = order.iter().map(|s| s.as_str()).collect();
        let choi = big.permute_systems(&order_refs)?;
        CpMap::new(inputs, outputs, choi)
    }

    /// Parallel product `self (x) other` on disjoint label sets.
    pub fn tensor(&self, other: &CpMap) -> Result<CpMap> {
        let big = self.choi.kron(&other.choi)?;
        let mut outputs = self.outputs.clone();
        outputs.extend(other.outputs.iter().cloned());
        let mut inputs = self.inputs.clone();
        inputs.extend(other.inputs.iter().cloned());
        let mut order: Vec<String> = outputs.iter().map(|s| s.name.clone()).collect();
        order.extend(inputs.iter().map(|s| in_label(s).name));
        let order_refs: Vec<&str> = order.iter().map(|s| s.as_str()).collect();
        let choi = big.permute_systems(&order_refs)?;
        CpMap::new(inputs, outputs, choi)
    }

    /// Convex combination with matching wiring.
    pub fn add_scaled(&self, other: &CpMap, w: f64) -> Result<CpMap> {
        if self.inputs != other.inputs || self.outputs != other.outputs {
            return Err(Error::shape("adding maps with different wiring"));
        }
        CpMap::new(
            self.inputs.clone(),
            self.outputs.clone(),
            self.choi.add(&other.choi.scale(w))?,
        )
    }

    pub fn scale(&self, w: f64) -> CpMap {
        CpMap {
            inputs: self.inputs.clone(),
            outputs: self.outputs.clone(),
            choi: self.choi.scale(w),
        }
    }

    /// Largest Hermiticity/positivity violation of the Choi operator.
    pub fn cp_defect(&self) -> f64 {
        let herm = self.choi.hermiticity_defect();
        let lam = self.choi.lambda_min();
        herm.max((-lam).max(0.0))
    }

    /// Infinity-norm deviation of `Tr_out C` from the input identity.
    pub fn tp_defect(&self) -> f64 {
        let out_names: Vec<&str> = self.outputs.iter().map(|s| s.name.as_str()).collect();
        match self.choi.partial_trace(&out_names) {
            Ok(red) => {
                let id = HermitianBlock::identity(red.systems.clone());
                red.max_abs_diff(&id)
            }
            Err(_) => f64::INFINITY,
        }
    }

    pub fn validate_cp(&self, tol: f64) -> Result<()> {
        let d = self.cp_defect();
        if d > tol {
            return Err(Error::invalid(
                "cp map",
                format!("choi positivity defect {d:.3e} exceeds tol {tol:.3e}"),
            ));
        }
        Ok(())
    }

    pub fn validate_channel(&self, tol: f64) -> Result<()> {
        self.validate_cp(tol)?;
        let d = self.tp_defect();
        if d > tol {
            return Err(Error::invalid(
                "channel",
                format!("trace preservation defect {d:.3e} exceeds tol {tol:.3e}"),
            ));
        }
        Ok(())
    }
}
