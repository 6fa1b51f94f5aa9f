//! Feasibility-based checks for the notions whose certificate is a single
//! mother object plus deterministic coarse-graining over outcome tuples:
//! joint measurability of POVMs, classical compatibility, and parallel
//! compatibility of instruments.

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::feasibility::{solve, FeasibilityResult};
use crate::qobjects::{fixtures, CpMap, Instrument, Povm, ProgrammableInstrument, StochasticMatrix};
use crate::tensor::HermitianBlock;

use super::problems::{self, MarginalProblem};
use super::verdict::{
    CertificateKind, ClassicalCertificate, CompatWitness, Diagnostics, Notion,
    ParallelCertificate, PovmClassicalCertificate, Status, Verdict,
};

/// Deterministic marginalization `mu(x | w, i) = [x == t_w[i]]` reading off
/// slot `i` of the mother's outcome tuple.
pub(super) fn tuple_mu(shape: &[usize], out_dim: usize) -> Result<StochasticMatrix> {
    let tuple_list = problems::tuples(shape);
    let w_count = tuple_list.len();
    StochasticMatrix::deterministic(out_dim, vec![w_count, shape.len()], |cond| {
        tuple_list[cond[0]][cond[1]]
    })
}

/// Shared verdict plumbing: solve the marginal problem, then either turn the
/// feasible point into a certificate (re-checked by reconstruction) or the
/// verified multipliers into a witness payload.
fn decide(
    notion: Notion,
    mp: &MarginalProblem,
    cfg: &RunConfig,
    build: impl FnOnce(&[HermitianBlock]) -> Result<(CertificateKind, f64)>,
) -> Result<Verdict> {
    match solve(&mp.problem, &cfg.solver) {
        FeasibilityResult::Feasible {
            assignment,
            residual,
            iters,
        } => {
            let (kind, deviation) = build(&assignment)?;
            let mut diagnostics = Diagnostics {
                residual: Some(deviation),
                iterations: iters,
                ..Diagnostics::default()
            };
            if deviation <= cfg.tol.certificate {
                Ok(Verdict {
                    notion,
                    status: Status::Compatible(Box::new(kind)),
                    diagnostics,
                })
            } else {
                diagnostics.notes.push(format!(
                    "feasible point (solver residual {residual:.2e}) reconstructs with deviation {deviation:.2e}, above certificate tolerance"
                ));
                Ok(Verdict {
                    notion,
                    status: Status::Undecided,
                    diagnostics,
                })
            }
        }
        FeasibilityResult::Infeasible { witness, iters } => {
            let payload = mp.witness_payload(&witness)?;
            let diagnostics = Diagnostics {
                margin: Some(payload.witness.margin),
                iterations: iters,
                ..Diagnostics::default()
            };
            Ok(Verdict {
                notion,
                status: Status::Incompatible(Box::new(CompatWitness::Sdp(payload))),
                diagnostics,
            })
        }
        FeasibilityResult::Undecided {
            gap,
            residual,
            iters,
            note,
        } => Ok(Verdict {
            notion,
            status: Status::Undecided,
            diagnostics: Diagnostics {
                residual: Some(residual),
                iterations: iters,
                notes: vec![note, format!("alternating-projection gap {gap:.2e}")],
                ..Diagnostics::default()
            },
        }),
    }
}

/// Joint measurability: is there one mother POVM whose coarse-grainings
/// reproduce every given POVM?
pub fn check_povm_classical(povms: &[Povm], cfg: &RunConfig) -> Result<Verdict> {
    for p in povms {
        p.validate(cfg.tol.validation)?;
    }
    let mp = problems::povm_joint_problem(povms)?;
    decide(Notion::Classical, &mp, cfg, |assignment| {
        let systems = povms[0].systems().to_vec();
        let tuple_list = problems::tuples(&mp.shape);
        let effects = assignment
            .iter()
            .map(|b| Ok(HermitianBlock::new(systems.clone(), b.mat.clone())?.project_psd()))
            .collect::<Result<Vec<_>>>()?;
        let outcomes = tuple_list.iter().map(|t| problems::tuple_name(t)).collect();
        let mother = Povm::new(outcomes, effects)?;
        let mu = tuple_mu(&mp.shape, mp.shape.iter().copied().max().unwrap_or(1))?;
        let cert = PovmClassicalCertificate { mother, mu };
        let deviation = cert.deviation(povms)?;
        Ok((CertificateKind::PovmClassical(cert), deviation))
    })
}

/// Classical compatibility of instruments: one mother instrument into the
/// common output, outcomes coarse-grained per program. Programs with
/// different output systems are structurally incompatible in this notion.
pub fn check_instrument_classical(pi: &ProgrammableInstrument, cfg: &RunConfig) -> Result<Verdict> {
    pi.validate(cfg.tol.validation)?;
    let Some(outputs) = pi.uniform_outputs() else {
        return Ok(Verdict {
            notion: Notion::Classical,
            status: Status::Incompatible(Box::new(CompatWitness::Structural(
                "programs have different output systems; classical post-processing cannot move between them".into(),
            ))),
            diagnostics: Diagnostics::default(),
        });
    };
    let outputs = outputs.to_vec();
    let mp = problems::classical_mother_problem(pi)?;
    decide(Notion::Classical, &mp, cfg, |assignment| {
        let systems = mp.target_systems[0].clone();
        let tuple_list = problems::tuples(&mp.shape);
        let maps = assignment
            .iter()
            .map(|b| {
                let choi = HermitianBlock::new(systems.clone(), b.mat.clone())?.project_psd();
                CpMap::new(pi.inputs().to_vec(), outputs.clone(), choi)
            })
            .collect::<Result<Vec<_>>>()?;
        let outcomes = tuple_list.iter().map(|t| problems::tuple_name(t)).collect();
        let mother = Instrument::new(outcomes, maps)?;
        let mu = tuple_mu(&mp.shape, pi.max_outcomes())?;
        let cert = ClassicalCertificate { mother, mu };
        let deviation = cert.deviation(pi)?;
        Ok((CertificateKind::Classical(cert), deviation))
    })
}

/// Parallel compatibility: one broadcasting mother whose slot marginals
/// reproduce every program. Output systems may differ across programs.
pub fn check_parallel(pi: &ProgrammableInstrument, cfg: &RunConfig) -> Result<Verdict> {
    pi.validate(cfg.tol.validation)?;
    let mp = problems::parallel_mother_problem(pi)?;
    let mother_systems = problems::parallel_mother_systems(pi);
    let mother_outputs: Vec<_> = problems::parallel_output_labels(pi)
        .into_iter()
        .flatten()
        .collect();
    decide(Notion::Parallel, &mp, cfg, |assignment| {
        let tuple_list = problems::tuples(&mp.shape);
        let maps = assignment
            .iter()
            .map(|b| {
                let choi = HermitianBlock::new(mother_systems.clone(), b.mat.clone())?.project_psd();
                CpMap::new(pi.inputs().to_vec(), mother_outputs.clone(), choi)
            })
            .collect::<Result<Vec<_>>>()?;
        let outcomes = tuple_list.iter().map(|t| problems::tuple_name(t)).collect();
        let mother = Instrument::new(outcomes, maps)?;
        let mu = tuple_mu(&mp.shape, pi.max_outcomes())?;
        let cert = ParallelCertificate { mother, mu };
        let deviation = cert.deviation(pi)?;
        Ok((CertificateKind::Parallel(cert), deviation))
    })
}

/// Enclosure of a critical parameter along a one-parameter POVM family.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdReport {
    /// Largest parameter certified compatible.
    pub lo: f64,
    /// Smallest parameter certified incompatible.
    pub hi: f64,
    /// Every evaluated parameter with its verdict word, in evaluation order.
    pub evaluations: Vec<(f64, String)>,
    pub notes: Vec<String>,
}

impl ThresholdReport {
    pub fn estimate(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

fn xz_verdict_word(eta: f64, cfg: &RunConfig) -> Result<&'static str> {
    let povms = fixtures::povm_xz("A", eta)?;
    let mp = problems::povm_joint_problem(&povms)?;
    Ok(match solve(&mp.problem, &cfg.solver) {
        FeasibilityResult::Feasible { .. } => "compatible",
        FeasibilityResult::Infeasible { .. } => "incompatible",
        FeasibilityResult::Undecided { .. } => "undecided",
    })
}

/// Critical visibility of the smeared X/Z qubit POVM pair: bisection down to
/// a bracket of width `5e-4`, then an independent grid sweep at step `1e-4`
/// around the bracket. Both sides of the bracket are certified (feasible
/// point respectively verified witness), never assumed.
pub fn povm_xz_threshold(cfg: &RunConfig) -> Result<ThresholdReport> {
    let mut report = ThresholdReport {
        lo: 0.0,
        hi: 1.0,
        evaluations: Vec::new(),
        notes: Vec::new(),
    };
    let probe = |eta: f64, report: &mut ThresholdReport| -> Result<&'static str> {
        let word = xz_verdict_word(eta, cfg)?;
        report.evaluations.push((eta, word.to_string()));
        match word {
            "compatible" => report.lo = report.lo.max(eta),
            "incompatible" => report.hi = report.hi.min(eta),
            _ => {}
        }
        if report.lo > report.hi {
            return Err(Error::invalid(
                "threshold report",
                format!("bracket crossed at parameter {eta}"),
            ));
        }
        Ok(word)
    };

    // Endpoints are cheap to certify and anchor the bracket honestly.
    probe(0.0, &mut report)?;
    probe(1.0, &mut report)?;

    while report.width() > 5e-4 {
        let mid = report.estimate();
        if probe(mid, &mut report)? == "undecided" {
            report
                .notes
                .push(format!("bisection stopped undecided at {mid:.6}"));
            break;
        }
    }

    let step = 1e-4;
    let center = report.estimate();
    let start = (center - 10.0 * step).max(0.0);
    for k in 0..=20 {
        let eta = start + k as f64 * step;
        if eta <= report.lo || eta >= report.hi {
            continue;
        }
        probe(eta, &mut report)?;
    }
    report.notes.push(format!(
        "grid cross-check at step {step:.0e} around {center:.6}"
    ));
    Ok(report)
}
