//! Guessing games on programmable instruments: referees, free protocols,
//! utility optimization, free-utility thresholds and witness conversion.

mod game;
mod protocol;
mod search;
mod simulate;
mod threshold;
mod witness;

#[cfg(test)]
mod tests;

pub use game::{Framework, GuessingGame};
pub use protocol::{
    apply_protocol, compose_protocols, identity_protocol, mix_protocols, FreeProtocol,
    GuessSource,
};
pub use search::{utility, utility_with, SearchDims, UtilityReport};
pub use simulate::{
    free_utility_replay, monotonicity_check, random_protocol, replay_error, simulate_free,
    MonotonicityReport,
};
pub use threshold::{free_threshold, free_threshold_ex};
pub use witness::{witness_to_game, Rescaling};
