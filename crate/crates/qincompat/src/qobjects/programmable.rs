use crate::error::{Error, Result};
use crate::qobjects::instrument::Instrument;
use crate::tensor::SystemLabel;

/// A finite family of instruments with a common input, indexed by a
/// classical program. This is the basic object whose compatibility the crate
/// decides; outputs may differ between programs.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgrammableInstrument {
    pub programs: Vec<String>,
    pub instruments: Vec<Instrument>,
}

impl ProgrammableInstrument {
    pub fn new(programs: Vec<String>, instruments: Vec<Instrument>) -> Result<Self> {
        if programs.is_empty() || programs.len() != instruments.len() {
            return Err(Error::invalid(
                "programmable instrument",
                format!(
                    "{} program labels for {} instruments",
                    programs.len(),
                    instruments.len()
                ),
            ));
        }
        for inst in &instruments[1..] {
            if inst.inputs() != instruments[0].inputs() {
                return Err(Error::shape(
                    "programs disagree on the common input system",
                ));
            }
        }
        Ok(ProgrammableInstrument {
            programs,
            instruments,
        })
    }

    pub fn n_programs(&self) -> usize {
        self.instruments.len()
    }

    pub fn inputs(&self) -> &[SystemLabel] {
        self.instruments[0].inputs()
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        for (k, inst) in self.instruments.iter().enumerate() {
            inst.validate(tol).map_err(|e| {
                Error::invalid(
                    "programmable instrument",
                    format!("program {}: {e}", self.programs[k]),
                )
            })?;
        }
        Ok(())
    }

    /// The common output system list, if all programs share one.
    pub fn uniform_outputs(&self) -> Option<&[SystemLabel]> {
        let first = self.instruments[0].outputs();
        if self
            .instruments
            .iter()
            .all(|inst| inst.outputs() == first)
        {
            Some(first)
        } else {
            None
        }
    }

    /// Largest outcome count over programs.
    pub fn max_outcomes(&self) -> usize {
        self.instruments
            .iter()
            .map(|i| i.n_outcomes())
            .max()
            .unwrap_or(0)
    }
}
