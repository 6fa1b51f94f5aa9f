//! Guessing games scored through Choi pairings.
//!
//! A referee holds a programmable instrument, draws a program uniformly,
//! sends half of a maximally entangled pair through the players' device and
//! runs her own copy of the drawn program on the other half. The players
//! announce a guess at the referee's outcome and return a quantum system;
//! the round scores the overlap of the returned system with the referee's
//! post-measurement side, conditioned on the guess being right.

use serde::de::Error as DeError;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::qobjects::{CpMap, ProgrammableInstrument};
use crate::tensor::SystemLabel;

/// Which free superoperations the players may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Framework {
    /// Pre-processing with quantum memory plus a forward classical message;
    /// the partner post-processes classically and announces every guess.
    C,
    /// Adds one backward classical message and local repair channels.
    Q,
    /// Lets the repair step be an instrument whose outcome may itself be
    /// announced as the guess.
    Ex,
}

impl std::fmt::Display for Framework {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Framework::C => write!(f, "c"),
            Framework::Q => write!(f, "q"),
            Framework::Ex => write!(f, "ex"),
        }
    }
}

impl std::str::FromStr for Framework {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "c" | "classical" => Ok(Framework::C),
            "q" | "quantum" => Ok(Framework::Q),
            "ex" | "exclusivity" => Ok(Framework::Ex),
            other => Err(Error::invalid(
                "framework",
                format!("expected c, q or ex, got {other}"),
            )),
        }
    }
}

/// A guessing game: the referee's programmable instrument with a uniform
/// program prior. All referee programs must share one output system.
#[derive(Debug, Clone)]
pub struct GuessingGame {
    pub referee: ProgrammableInstrument,
}

impl GuessingGame {
    pub fn new(referee: ProgrammableInstrument) -> Result<Self> {
        if referee.uniform_outputs().is_none() {
            return Err(Error::shape(
                "guessing game needs referee programs with a common output system",
            ));
        }
        Ok(GuessingGame { referee })
    }

    pub fn n_programs(&self) -> usize {
        self.referee.n_programs()
    }

    /// Largest outcome count over the referee's programs; the players'
    /// guess alphabet.
    pub fn n_outcomes(&self) -> usize {
        self.referee.max_outcomes()
    }

    pub fn inputs(&self) -> &[SystemLabel] {
        self.referee.inputs()
    }

    pub fn outputs(&self) -> &[SystemLabel] {
        self.referee.instruments[0].outputs()
    }

    pub fn in_dim(&self) -> usize {
        self.inputs().iter().map(|s| s.dim).product()
    }

    pub fn out_dim(&self) -> usize {
        self.outputs().iter().map(|s| s.dim).product()
    }

    /// Overall scale of one round: `1 / (|J| d_in d_out)`.
    pub fn round_scale(&self) -> f64 {
        1.0 / (self.n_programs() as f64 * self.in_dim() as f64 * self.out_dim() as f64)
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        self.referee.validate(tol)
    }

    /// Expected utility of a family of instruments played against this
    /// game: `(1 / (|J| d_in d_out)) sum_{j,y} Tr[K^{(j)T}_y C^{(j)}_y]`,
    /// the Choi form of the entangled scoring rule with the uniform program
    /// prior folded in.
    ///
    /// The family must have one program per referee program and matching
    /// input/output systems. Guesses past a referee program's outcome count
    /// score zero; absent branches on the player side score zero as well.
    pub fn value_of(&self, family: &ProgrammableInstrument) -> Result<f64> {
        if family.n_programs() != self.n_programs() {
            return Err(Error::shape(format!(
                "family has {} programs, game has {}",
                family.n_programs(),
                self.n_programs()
            )));
        }
        let scale = self.round_scale();
        let mut acc = 0.0;
        for (j, ref_inst) in self.referee.instruments.iter().enumerate() {
            let fam_inst = &family.instruments[j];
            for (y, ref_map) in ref_inst.maps.iter().enumerate() {
                if y >= fam_inst.n_outcomes() {
                    break;
                }
                acc += scale * pair_score(ref_map, &fam_inst.maps[y])?;
            }
        }
        Ok(acc)
    }
}

/// One scoring term `Tr[C_ref^T C_play]`, aligning the player's Choi block
/// to the referee's system order first.
pub(crate) fn pair_score(reference: &CpMap, played: &CpMap) -> Result<f64> {
    let want: Vec<&str> = reference
        .choi
        .systems
        .iter()
        .map(|s| s.name.as_str())
        .collect();
    let aligned = played.choi.permute_systems(&want)?;
    // For Hermitian blocks Tr[A^T B] equals the conjugate-free entrywise sum.
    let mut acc = 0.0;
    for (a, b) in reference.choi.mat.iter().zip(aligned.mat.iter()) {
        acc += a.re * b.re - a.im * b.im;
    }
    Ok(acc)
}

#[derive(Serialize, Deserialize)]
struct GameWire {
    referee: ProgrammableInstrument,
}

impl Serialize for GuessingGame {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        GameWire {
            referee: self.referee.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for GuessingGame {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let wire = GameWire::deserialize(deserializer)?;
        GuessingGame::new(wire.referee).map_err(D::Error::custom)
    }
}
