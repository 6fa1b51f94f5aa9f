//! Builders for the marginal feasibility problems behind the convex
//! compatibility notions. Each builder returns the affine-PSD problem plus
//! enough bookkeeping to turn solver multipliers back into separating
//! functionals on the target family.

use std::ops::Range;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::feasibility::{hermitian_basis, AffinePsdProblem, BlockSpec, Witness};
use crate::qobjects::{Povm, ProgrammableInstrument};
use crate::tensor::{HermitianBlock, SystemLabel};

use super::verdict::SdpWitness;

/// A marginal problem: mother blocks indexed by outcome tuples, one matrix
/// equality per `(program, outcome)` marginal, one redundant trace row.
pub struct MarginalProblem {
    pub problem: AffinePsdProblem,
    /// Constraint-row ranges per `(program, outcome)`.
    pub rows: Vec<Vec<Range<usize>>>,
    /// System lists of each program's target space, in target layout.
    pub target_systems: Vec<Vec<SystemLabel>>,
    /// Outcome counts per program; mother blocks run over the product.
    pub shape: Vec<usize>,
    /// Right-hand side of the redundant trace row.
    pub trace_rhs: f64,
    /// Short description used in witness payloads.
    pub label: String,
}

/// All outcome tuples of `shape` in row-major order (last index fastest).
pub fn tuples(shape: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = shape.iter().product::<usize>().max(1);
    let mut out = Vec::with_capacity(total);
    for mut lin in 0..total {
        let mut t = vec![0usize; shape.len()];
        for k in (0..shape.len()).rev() {
            t[k] = lin % shape[k];
            lin /= shape[k];
        }
        out.push(t);
    }
    out
}

pub(super) fn tuple_name(t: &[usize]) -> String {
    let digits: Vec<String> = t.iter().map(|d| d.to_string()).collect();
    format!("H({})", digits.join(","))
}

impl MarginalProblem {
    /// Turns verified solver multipliers into the aggregated separating
    /// functional `(Z_{i,x}, lambda)` on the target family.
    pub fn witness_payload(&self, witness: &Witness) -> Result<SdpWitness> {
        let y = &witness.multipliers;
        if y.len() != self.problem.constraints.len() {
            return Err(Error::shape("multiplier count does not match problem"));
        }
        let mut z = Vec::with_capacity(self.rows.len());
        for (i, prog_rows) in self.rows.iter().enumerate() {
            let d: usize = self.target_systems[i].iter().map(|s| s.dim).product();
            let basis = hermitian_basis(d);
            let mut blocks = Vec::with_capacity(prog_rows.len());
            for range in prog_rows {
                let mut m = DMatrix::<Complex64>::zeros(d, d);
                for (k, r) in range.clone().enumerate() {
                    let w = y[r];
                    if w != 0.0 {
                        m += &basis[k] * Complex64::new(w, 0.0);
                    }
                }
                blocks.push(HermitianBlock::new(self.target_systems[i].clone(), m)?);
            }
            z.push(blocks);
        }
        let trace_row = self
            .problem
            .trace_row
            .ok_or_else(|| Error::shape("marginal problem lost its trace row"))?;
        Ok(SdpWitness {
            witness: witness.clone(),
            z,
            trace_multiplier: y[trace_row],
            trace_rhs: self.trace_rhs,
            problem: self.label.clone(),
        })
    }
}

/// Joint-measurability problem for a family of POVMs on one system: find
/// effects `O_t >= 0` over outcome tuples `t` with `sum_{t: t_i = x} O_t =
/// P^{(i)}_x` for every program `i` and outcome `x`.
pub fn povm_joint_problem(povms: &[Povm]) -> Result<MarginalProblem> {
    if povms.is_empty() {
        return Err(Error::invalid("joint measurability", "empty POVM family"));
    }
    let systems = povms[0].systems().to_vec();
    for p in povms {
        if p.systems() != systems.as_slice() {
            return Err(Error::shape("POVMs act on different systems"));
        }
    }
    let d: usize = systems.iter().map(|s| s.dim).product();
    let shape: Vec<usize> = povms.iter().map(|p| p.n_outcomes()).collect();
    let tuple_list = tuples(&shape);

    let blocks: Vec<BlockSpec> = tuple_list
        .iter()
        .map(|t| BlockSpec {
            name: tuple_name(t),
            dim: d,
        })
        .collect();
    let mut problem = AffinePsdProblem::new(blocks);

    let mut rows = Vec::with_capacity(povms.len());
    for (i, p) in povms.iter().enumerate() {
        let mut prog_rows = Vec::with_capacity(p.n_outcomes());
        for x in 0..p.n_outcomes() {
            let ids: Vec<usize> = tuple_list
                .iter()
                .enumerate()
                .filter(|(_, t)| t[i] == x)
                .map(|(b, _)| b)
                .collect();
            let start = problem.constraints.len();
            problem.add_matrix_eq(
                &format!("marg(i={i},x={x})"),
                &ids,
                |_, beta| beta.clone(),
                &p.effects[x].mat,
            )?;
            prog_rows.push(start..problem.constraints.len());
        }
        rows.push(prog_rows);
    }
    problem.add_trace_row(d as f64)?;

    Ok(MarginalProblem {
        problem,
        rows,
        target_systems: povms.iter().map(|p| p.systems().to_vec()).collect(),
        shape,
        trace_rhs: d as f64,
        label: "povm-joint-measurability".into(),
    })
}

/// Classical-compatibility problem for a family of instruments with a
/// common output: find CP blocks `H_t >= 0` over outcome tuples with
/// `sum_{t: t_i = x} H_t = Choi(I^{(i)}_x)`.
pub fn classical_mother_problem(pi: &ProgrammableInstrument) -> Result<MarginalProblem> {
    if pi.uniform_outputs().is_none() {
        return Err(Error::shape(
            "classical compatibility needs a common output system",
        ));
    }
    let target_systems: Vec<Vec<SystemLabel>> = pi
        .instruments
        .iter()
        .map(|inst| inst.maps[0].choi.systems.clone())
        .collect();
    let d: usize = target_systems[0].iter().map(|s| s.dim).product();
    let d_in: usize = pi.inputs().iter().map(|s| s.dim).product();
    let shape: Vec<usize> = pi.instruments.iter().map(|i| i.n_outcomes()).collect();
    let tuple_list = tuples(&shape);

    let blocks: Vec<BlockSpec> = tuple_list
        .iter()
        .map(|t| BlockSpec {
            name: tuple_name(t),
            dim: d,
        })
        .collect();
    let mut problem = AffinePsdProblem::new(blocks);

    let mut rows = Vec::with_capacity(pi.n_programs());
    for (i, inst) in pi.instruments.iter().enumerate() {
        let mut prog_rows = Vec::with_capacity(inst.n_outcomes());
        for x in 0..inst.n_outcomes() {
            let ids: Vec<usize> = tuple_list
                .iter()
                .enumerate()
                .filter(|(_, t)| t[i] == x)
                .map(|(b, _)| b)
                .collect();
            let start = problem.constraints.len();
            problem.add_matrix_eq(
                &format!("marg(i={i},x={x})"),
                &ids,
                |_, beta| beta.clone(),
                &inst.maps[x].choi.mat,
            )?;
            prog_rows.push(start..problem.constraints.len());
        }
        rows.push(prog_rows);
    }
    // Total trace of a TP mother Choi equals the input dimension.
    problem.add_trace_row(d_in as f64)?;

    Ok(MarginalProblem {
        problem,
        rows,
        target_systems,
        shape,
        trace_rhs: d_in as f64,
        label: "instrument-classical-compatibility".into(),
    })
}

/// Output system labels of the broadcasting mother: program `i`'s output
/// renamed `<name>#<i>` so equal labels across programs stay distinct.
pub fn parallel_output_labels(pi: &ProgrammableInstrument) -> Vec<Vec<SystemLabel>> {
    pi.instruments
        .iter()
        .enumerate()
        .map(|(i, inst)| {
            inst.outputs()
                .iter()
                .map(|s| SystemLabel::new(format!("{}#{i}", s.name), s.dim))
                .collect()
        })
        .collect()
}

/// Parallel-compatibility problem: find CP blocks `H_t` on the joint output
/// of all programs with `sum_{t: t_i = x} Tr_{others}(H_t) = Choi(I^{(i)}_x)`
/// after renaming program `i`'s slot back to its native label.
pub fn parallel_mother_problem(pi: &ProgrammableInstrument) -> Result<MarginalProblem> {
    let renamed = parallel_output_labels(pi);
    let mut mother_systems: Vec<SystemLabel> = renamed.iter().flatten().cloned().collect();
    let in_systems: Vec<SystemLabel> = pi
        .inputs()
        .iter()
        .map(crate::qobjects::in_label)
        .collect();
    mother_systems.extend(in_systems.iter().cloned());
    let d: usize = mother_systems.iter().map(|s| s.dim).product();
    let d_in: usize = pi.inputs().iter().map(|s| s.dim).product();
    let shape: Vec<usize> = pi.instruments.iter().map(|i| i.n_outcomes()).collect();
    let tuple_list = tuples(&shape);

    let blocks: Vec<BlockSpec> = tuple_list
        .iter()
        .map(|t| BlockSpec {
            name: tuple_name(t),
            dim: d,
        })
        .collect();
    let mut problem = AffinePsdProblem::new(blocks);

    let mother_order: Vec<String> = mother_systems.iter().map(|s| s.name.clone()).collect();
    let target_systems: Vec<Vec<SystemLabel>> = pi
        .instruments
        .iter()
        .map(|inst| inst.maps[0].choi.systems.clone())
        .collect();

    let mut rows = Vec::with_capacity(pi.n_programs());
    for (i, inst) in pi.instruments.iter().enumerate() {
        // Adjoint of `keep slot i, discard the rest`: tensor the basis
        // element with identities on the discarded slots, then permute into
        // the mother layout.
        let other_identity: Vec<SystemLabel> = renamed
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .flat_map(|(_, labels)| labels.iter().cloned())
            .collect();
        let beta_systems: Vec<SystemLabel> = renamed[i]
            .iter()
            .cloned()
            .chain(in_systems.iter().cloned())
            .collect();
        let embed = |beta: &DMatrix<Complex64>| -> Result<DMatrix<Complex64>> {
            let beta_block = HermitianBlock::new(beta_systems.clone(), beta.clone())?;
            let full = if other_identity.is_empty() {
                beta_block
            } else {
                beta_block.kron(&HermitianBlock::identity(other_identity.clone()))?
            };
            let order: Vec<&str> = mother_order.iter().map(|s| s.as_str()).collect();
            Ok(full.permute_systems(&order)?.mat)
        };

        let mut prog_rows = Vec::with_capacity(inst.n_outcomes());
        for x in 0..inst.n_outcomes() {
            let ids: Vec<usize> = tuple_list
                .iter()
                .enumerate()
                .filter(|(_, t)| t[i] == x)
                .map(|(b, _)| b)
                .collect();
            let start = problem.constraints.len();
            problem.add_matrix_eq(
                &format!("marg(i={i},x={x})"),
                &ids,
                |_, beta| embed(beta).expect("parallel embedding cannot fail on basis"),
                &inst.maps[x].choi.mat,
            )?;
            prog_rows.push(start..problem.constraints.len());
        }
        rows.push(prog_rows);
    }
    problem.add_trace_row(d_in as f64)?;

    Ok(MarginalProblem {
        problem,
        rows,
        target_systems,
        shape,
        trace_rhs: d_in as f64,
        label: "instrument-parallel-compatibility".into(),
    })
}

/// Mother systems of the parallel problem, in block layout order.
pub fn parallel_mother_systems(pi: &ProgrammableInstrument) -> Vec<SystemLabel> {
    let mut systems: Vec<SystemLabel> = parallel_output_labels(pi)
        .into_iter()
        .flatten()
        .collect();
    systems.extend(pi.inputs().iter().map(crate::qobjects::in_label));
    systems
}
