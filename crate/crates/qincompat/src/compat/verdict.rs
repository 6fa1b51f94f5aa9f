//! Verdicts returned by the compatibility checkers, together with the
//! certificate and witness payloads that make them checkable after the fact.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feasibility::Witness;
use crate::qobjects::{CpMap, Instrument, Povm, ProgrammableInstrument, StochasticMatrix};
use crate::tensor::HermitianBlock;

/// The compatibility notion a verdict speaks about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Notion {
    Classical,
    Parallel,
    Q,
    /// Verdicts about exclusion structure. `Compatible` here means a
    /// no-exclusion certificate was found (the family is non-exclusive in
    /// the queried sense), `Incompatible` means exclusion was certified.
    Exclusivity,
}

impl std::fmt::Display for Notion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Notion::Classical => "classical",
            Notion::Parallel => "parallel",
            Notion::Q => "q",
            Notion::Exclusivity => "exclusivity",
        };
        write!(f, "{s}")
    }
}

/// Joint POVM realizing every program by coarse-graining.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PovmClassicalCertificate {
    /// Mother POVM with one outcome per tuple of program outcomes.
    pub mother: Povm,
    /// `mu(x | w, i)`, conditions ordered `(w, i)`.
    pub mu: StochasticMatrix,
}

/// Single mother instrument plus classical post-processing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassicalCertificate {
    /// Mother instrument from the common input to the common output, one
    /// outcome per tuple of program outcomes.
    pub mother: Instrument,
    /// `mu(x | w, i)`, conditions ordered `(w, i)`.
    pub mu: StochasticMatrix,
}

/// Broadcasting mother whose marginals reproduce every program.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParallelCertificate {
    /// Mother instrument producing all program outputs side by side; output
    /// system `k` carries the name of program `k`'s output suffixed `#k`.
    pub mother: Instrument,
    /// `mu(x | w, i)`, conditions ordered `(w, i)`.
    pub mu: StochasticMatrix,
}

/// Mother instrument, classical post-processing and outcome-dependent
/// repair channels realizing every program.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QCompatCertificate {
    /// Mother instrument from the common input to the mediating system.
    pub mother: Instrument,
    /// `mu(x | w, i)`, conditions ordered `(w, i)`.
    pub mu: StochasticMatrix,
    /// Channel from the mediating system to program `i`'s output, indexed
    /// `post_channels[i][w][x]`.
    pub post_channels: Vec<Vec<Vec<CpMap>>>,
}

/// Certificate that one designated program does not exclude the others:
/// it factors through a mother that also lets every remaining program be
/// implemented downstream by an instrument on the mediating system.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoExclusionCertificate {
    /// Index of the designated (first-implemented) program.
    pub designated: usize,
    /// Mother instrument from the common input to the mediating system.
    pub mother: Instrument,
    /// `mu(x | w)` for the designated program, conditions ordered `(w,)`.
    pub mu: StochasticMatrix,
    /// Channels to the designated program's output, indexed
    /// `post_channels[w][x]`.
    pub post_channels: Vec<Vec<CpMap>>,
    /// Recovery instruments for the remaining programs in ascending program
    /// order (skipping the designated one), indexed `recovery[other][w]`.
    pub recovery: Vec<Vec<Instrument>>,
    /// Program indices the entries of `recovery` refer to.
    pub recovered_programs: Vec<usize>,
}

/// Compatibility certificate payloads.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum CertificateKind {
    PovmClassical(PovmClassicalCertificate),
    Classical(ClassicalCertificate),
    Parallel(ParallelCertificate),
    Q(QCompatCertificate),
    NoExclusion(NoExclusionCertificate),
}

/// A verified separating functional extracted from an infeasible marginal
/// problem. For every compatible family with Choi operators `C_{i,x}` the
/// value `sum_{i,x} <Z_{i,x}, C_{i,x}> + lambda * trace_rhs` is nonpositive,
/// while on the family it was extracted from it equals `margin > 0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SdpWitness {
    /// Raw constraint multipliers, re-checkable with `verify_witness`.
    pub witness: Witness,
    /// Aggregated functional blocks per `(program, outcome)`, living on the
    /// target's Choi (or effect) space.
    pub z: Vec<Vec<HermitianBlock>>,
    /// Multiplier on the redundant aggregate-trace row.
    pub trace_multiplier: f64,
    /// Right-hand side of that row (the mother's total trace).
    pub trace_rhs: f64,
    /// Human-readable description of the SDP the multipliers refer to.
    pub problem: String,
}

impl SdpWitness {
    /// Evaluates the separating functional on a family of Choi (or effect)
    /// blocks shaped like the original target.
    pub fn value_on(&self, chois: &[Vec<HermitianBlock>]) -> Result<f64> {
        if chois.len() != self.z.len() {
            return Err(Error::shape(format!(
                "witness speaks about {} programs, family has {}",
                self.z.len(),
                chois.len()
            )));
        }
        let mut acc = self.trace_multiplier * self.trace_rhs;
        for (zi, ci) in self.z.iter().zip(chois.iter()) {
            if zi.len() != ci.len() {
                return Err(Error::shape("witness and family disagree on outcomes"));
            }
            for (z, c) in zi.iter().zip(ci.iter()) {
                acc += z.inner(c);
            }
        }
        Ok(acc)
    }
}

/// A guessing game on which the target provably beats every free resource.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GameWitness {
    /// The referee's programmable instrument.
    pub referee: ProgrammableInstrument,
    /// Utility certified achievable with the target resource.
    pub achieved: f64,
    /// Certified upper bound on the utility of every free resource.
    pub free_bound: f64,
    /// Where the upper bound comes from.
    pub bound_note: String,
}

/// Reasons a family can be declared incompatible.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum CompatWitness {
    /// Verified multipliers of the notion's own marginal problem.
    Sdp(SdpWitness),
    /// Verified multipliers of the induced-POVM joint-measurability
    /// problem; its infeasibility already rules out the stronger notion.
    InducedPovm(SdpWitness),
    /// A guessing game separating the target from the free set.
    Game(GameWitness),
    /// The family violates a structural precondition of the notion (for
    /// example, classical compatibility requires a common output system).
    Structural(String),
}

/// Three-valued outcome. `Undecided` is honest and never silently upgraded.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Status {
    Compatible(Box<CertificateKind>),
    Incompatible(Box<CompatWitness>),
    Undecided,
}

/// Numeric context attached to every verdict.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Reconstruction residual of the certificate, when one exists.
    pub residual: Option<f64>,
    /// Verified separation margin, when a witness exists.
    pub margin: Option<f64>,
    /// Iterations spent by the deciding backend.
    pub iterations: usize,
    pub notes: Vec<String>,
}

/// Outcome of a compatibility check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Verdict {
    pub notion: Notion,
    pub status: Status,
    pub diagnostics: Diagnostics,
}

impl Verdict {
    pub fn is_compatible(&self) -> bool {
        matches!(self.status, Status::Compatible(_))
    }

    pub fn is_incompatible(&self) -> bool {
        matches!(self.status, Status::Incompatible(_))
    }

    pub fn is_undecided(&self) -> bool {
        matches!(self.status, Status::Undecided)
    }

    pub fn certificate(&self) -> Option<&CertificateKind> {
        match &self.status {
            Status::Compatible(c) => Some(c),
            _ => None,
        }
    }

    pub fn witness(&self) -> Option<&CompatWitness> {
        match &self.status {
            Status::Incompatible(w) => Some(w),
            _ => None,
        }
    }

    /// One-word status for tables and logs.
    pub fn status_word(&self) -> &'static str {
        match self.status {
            Status::Compatible(_) => "compatible",
            Status::Incompatible(_) => "incompatible",
            Status::Undecided => "undecided",
        }
    }
}
