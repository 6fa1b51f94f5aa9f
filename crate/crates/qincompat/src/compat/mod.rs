//! Compatibility deciders for POVMs and programmable instruments.
//!
//! Four notions are supported. *Classical*: one mother instrument plus a
//! classical mixing table reproduces every program. *Parallel*: one mother
//! channel into a tensor product of output slots reproduces each program as
//! a marginal. *Q*: a mother instrument plus outcome-dependent repair
//! channels reproduces every program. *Exclusivity*: implementing a
//! designated program while other instruments remain recoverable downstream.
//!
//! Convex notions (classical, parallel, joint measurability) reduce to
//! feasibility programs with exact witnesses on infeasibility. The q and
//! exclusion notions are bilinear, so they are decided by a layered routine:
//! structural shortcuts, certificate embeddings along the hierarchy, an
//! induced-POVM witness precheck, and finally an alternating see-saw whose
//! output is only accepted once it reconstructs the family within tolerance.

mod convex;
mod exclusion;
mod hierarchy;
mod problems;
mod qcheck;
mod reconstruct;
pub(crate) mod seesaw;
mod verdict;

#[cfg(test)]
mod tests;

pub use convex::{
    check_instrument_classical, check_parallel, check_povm_classical, povm_xz_threshold,
    ThresholdReport,
};
pub use exclusion::{check_exclusive, excludes};
pub use hierarchy::{hierarchy, povm_hierarchy, HierarchyReport};
pub use qcheck::check_q;
pub use reconstruct::slot_marginal;
pub use verdict::{
    CertificateKind, ClassicalCertificate, CompatWitness, Diagnostics, GameWitness,
    NoExclusionCertificate, Notion, ParallelCertificate, PovmClassicalCertificate,
    QCompatCertificate, SdpWitness, Status, Verdict,
};
