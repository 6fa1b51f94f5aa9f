//! Quantum objects built on labeled tensor blocks: completely positive maps
//! in Choi form, channels, instruments, POVMs and program-indexed instrument
//! families, plus the classical stochastic processing that glues them
//! together.
//!
//! Choi convention: for a map `F` from `A` to `B` the stored operator is
//! `C = (F (x) id)(Omega)` with `Omega = sum_{m,n} |m><n| (x) |m><n|`
//! unnormalized, living on `B (x) A` with the output factor leftmost. Inside
//! a Choi block the input copy of a system named `A` is labeled `A@in`, so
//! maps with equal input and output names stay well formed.

mod cpmap;
pub mod fixtures;
mod instrument;
mod json;
mod povm;
mod programmable;
mod stochastic;
#[cfg(test)]
mod tests;

pub use cpmap::{in_label, CpMap};
pub use fixtures::*;
pub use instrument::Instrument;
pub use json::{matrix_from_json_str, InstrumentJson, PovmJson, ProgrammableJson};
pub use povm::Povm;
pub use programmable::ProgrammableInstrument;
pub use stochastic::StochasticMatrix;
