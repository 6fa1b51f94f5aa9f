use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::qobjects::cpmap::{in_label, CpMap};
use crate::qobjects::instrument::Instrument;
use crate::qobjects::povm::Povm;
use crate::qobjects::programmable::ProgrammableInstrument;
use crate::tensor::{HermitianBlock, MatrixJson, SystemLabel};

/// On-disk form of an instrument: wiring, outcome labels and one Choi matrix
/// per outcome. Matrix systems are the outputs followed by the `@in`-tagged
/// inputs, as stored internally.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstrumentJson {
    pub input: Vec<SystemLabel>,
    pub output: Vec<SystemLabel>,
    pub outcomes: Vec<String>,
    pub chois: Vec<MatrixJson>,
}

impl InstrumentJson {
    pub fn from_instrument(inst: &Instrument) -> Self {
        InstrumentJson {
            input: inst.inputs().to_vec(),
            output: inst.outputs().to_vec(),
            outcomes: inst.outcomes.clone(),
            chois: inst
                .maps
                .iter()
                .map(|m| MatrixJson::from_block(&m.choi))
                .collect(),
        }
    }

    pub fn to_instrument(&self) -> Result<Instrument> {
        let maps = self
            .chois
            .iter()
            .map(|mj| {
                let mut block = mj.to_block()?;
                // Accept files whose matrix systems use undecorated input
                // names; normalize to the internal layout.
                let mut want: Vec<SystemLabel> = self.output.clone();
                want.extend(self.input.iter().map(in_label));
                if block.systems != want {
                    let mut undecorated: Vec<SystemLabel> = self.output.clone();
                    undecorated.extend(self.input.iter().cloned());
                    if block.systems == undecorated {
                        let n_out = self.output.len();
                        for s in block.systems.iter_mut().skip(n_out) {
                            s.name = format!("{}@in", s.name);
                        }
                    }
                }
                CpMap::new(self.input.clone(), self.output.clone(), block)
            })
            .collect::<Result<Vec<_>>>()?;
        Instrument::new(self.outcomes.clone(), maps)
    }
}

/// On-disk form of a programmable instrument.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProgrammableJson {
    pub programs: Vec<String>,
    pub instruments: Vec<InstrumentJson>,
}

impl ProgrammableJson {
    pub fn from_programmable(p: &ProgrammableInstrument) -> Self {
        ProgrammableJson {
            programs: p.programs.clone(),
            instruments: p
                .instruments
                .iter()
                .map(InstrumentJson::from_instrument)
                .collect(),
        }
    }

    pub fn to_programmable(&self) -> Result<ProgrammableInstrument> {
        let instruments = self
            .instruments
            .iter()
            .map(|ij| ij.to_instrument())
            .collect::<Result<Vec<_>>>()?;
        ProgrammableInstrument::new(self.programs.clone(), instruments)
    }
}

impl Instrument {
    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(
            &InstrumentJson::from_instrument(self),
        )?)
    }

    pub fn from_json_str(s: &str) -> Result<Instrument> {
        let ij: InstrumentJson = serde_json::from_str(s)?;
        ij.to_instrument()
    }
}

impl ProgrammableInstrument {
    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(
            &ProgrammableJson::from_programmable(self),
        )?)
    }

    pub fn from_json_str(s: &str) -> Result<ProgrammableInstrument> {
        let pj: ProgrammableJson = serde_json::from_str(s)?;
        pj.to_programmable()
    }
}

/// Matrix-level helpers used by the CLI `validate` command.
pub fn matrix_from_json_str(s: &str) -> Result<HermitianBlock> {
    HermitianBlock::from_json_str(s)
}

// Serde for the in-memory types delegates to the wire forms above, so
// reports embedding maps or instruments round-trip through the same files
// the CLI reads, shape checks included.

#[derive(Serialize, Deserialize)]
struct CpMapWire {
    input: Vec<SystemLabel>,
    output: Vec<SystemLabel>,
    choi: MatrixJson,
}

impl Serialize for CpMap {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        CpMapWire {
            input: self.inputs.clone(),
            output: self.outputs.clone(),
            choi: MatrixJson::from_block(&self.choi),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CpMap {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let w = CpMapWire::deserialize(d)?;
        let block = w.choi.to_block().map_err(serde::de::Error::custom)?;
        CpMap::new(w.input, w.output, block).map_err(serde::de::Error::custom)
    }
}

impl Serialize for Instrument {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        InstrumentJson::from_instrument(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Instrument {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let ij = InstrumentJson::deserialize(d)?;
        ij.to_instrument().map_err(serde::de::Error::custom)
    }
}

impl Serialize for ProgrammableInstrument {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ProgrammableJson::from_programmable(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for ProgrammableInstrument {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let pj = ProgrammableJson::deserialize(d)?;
        pj.to_programmable().map_err(serde::de::Error::custom)
    }
}

/// On-disk form of a POVM: outcome labels plus one effect matrix each.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PovmJson {
    pub outcomes: Vec<String>,
    pub effects: Vec<MatrixJson>,
}

impl PovmJson {
    pub fn from_povm(p: &Povm) -> Self {
        PovmJson {
            outcomes: p.outcomes.clone(),
            effects: p.effects.iter().map(MatrixJson::from_block).collect(),
        }
    }

    pub fn to_povm(&self) -> Result<Povm> {
        let effects = self
            .effects
            .iter()
            .map(|mj| mj.to_block())
            .collect::<Result<Vec<_>>>()?;
        Povm::new(self.outcomes.clone(), effects)
    }
}

impl Serialize for Povm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PovmJson::from_povm(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Povm {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let pj = PovmJson::deserialize(d)?;
        pj.to_povm().map_err(serde::de::Error::custom)
    }
}

impl Povm {
    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&PovmJson::from_povm(self))?)
    }

    pub fn from_json_str(s: &str) -> Result<Povm> {
        let pj: PovmJson = serde_json::from_str(s)?;
        pj.to_povm()
    }
}
