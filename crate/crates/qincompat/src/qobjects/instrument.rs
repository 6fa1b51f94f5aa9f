use crate::error::{Error, Result};
use crate::qobjects::cpmap::CpMap;
use crate::qobjects::povm::Povm;
use crate::qobjects::stochastic::{decode_row, StochasticMatrix};

/// A quantum instrument: finitely many CP maps with common wiring whose sum
/// is trace preserving.
#[derive(Debug, Clone, PartialEq)]
pub struct Instrument {
    pub outcomes: Vec<String>,
    pub maps: Vec<CpMap>,
}

impl Instrument {
    pub fn new(outcomes: Vec<String>, maps: Vec<CpMap>) -> Result<Self> {
        if outcomes.is_empty() || outcomes.len() != maps.len() {
            return Err(Error::invalid(
                "instrument",
                format!(
                    "{} outcome labels for {} maps",
                    outcomes.len(),
                    maps.len()
                ),
            ));
        }
        for m in &maps[1..] {
            if m.inputs != maps[0].inputs || m.outputs != maps[0].outputs {
                return Err(Error::shape(
                    "instrument members disagree on input/output systems",
                ));
            }
        }
        Ok(Instrument { outcomes, maps })
    }

    /// Wraps a single channel as the one-outcome instrument.
    pub fn from_channel(map: CpMap) -> Self {
        Instrument {
            outcomes: vec!["0".into()],
            maps: vec![map],
        }
    }

    pub fn n_outcomes(&self) -> usize {
        self.maps.len()
    }

    pub fn inputs(&self) -> &[crate::tensor::SystemLabel] {
        &self.maps[0].inputs
    }

    pub fn outputs(&self) -> &[crate::tensor::SystemLabel] {
        &self.maps[0].outputs
    }

    /// The total channel obtained by forgetting the outcome.
    pub fn total(&self) -> Result<CpMap> {
        let mut acc = self.maps[0].clone();
        for m in &self.maps[1..] {
            acc = acc.add_scaled(m, 1.0)?;
        }
        Ok(acc)
    }

    /// Each member CP, total trace preserving.
    pub fn validate(&self, tol: f64) -> Result<()> {
        for (k, m) in self.maps.iter().enumerate() {
            m.validate_cp(tol).map_err(|e| {
                Error::invalid("instrument", format!("outcome {}: {e}", self.outcomes[k]))
            })?;
        }
        let d = self.total()?.tp_defect();
        if d > tol {
            return Err(Error::invalid(
                "instrument",
                format!("outcome sum breaks trace preservation by {d:.3e}"),
            ));
        }
        Ok(())
    }

    /// Measurement statistics alone: the induced POVM `E_x = (Tr_out C_x)^T`.
    pub fn induced_povm(&self) -> Result<Povm> {
        let effects = self
            .maps
            .iter()
            .map(|m| m.effect())
            .collect::<Result<Vec<_>>>()?;
        Povm::new(self.outcomes.clone(), effects)
    }

    /// Classical post-processing of the outcome: `J_y = sum_x mu(y|x) M_x`.
    /// The table must condition on exactly this instrument's outcome set.
    pub fn post_process_classical(&self, mu: &StochasticMatrix) -> Result<Instrument> {
        if mu.cond_dims != [self.n_outcomes()] {
            return Err(Error::shape(format!(
                "post-processing conditions on {:?}, instrument has {} outcomes",
                mu.cond_dims,
                self.n_outcomes()
            )));
        }
        let mut maps = Vec::with_capacity(mu.out_dim);
        for y in 0..mu.out_dim {
            let mut acc = self.maps[0].scale(mu.get(y, &[0]));
            for x in 1..self.n_outcomes() {
                acc = acc.add_scaled(&self.maps[x], mu.get(y, &[x]))?;
            }
            maps.push(acc);
        }
        let outcomes = (0..mu.out_dim).map(|y| y.to_string()).collect();
        Instrument::new(outcomes, maps)
    }

    /// Coarse-grains a product outcome set down to one coordinate. `shape`
    /// declares the product structure row-major over the stored outcome
    /// order; `keep` selects the coordinate that survives.
    pub fn marginal_instrument(&self, shape: &[usize], keep: usize) -> Result<Instrument> {
        let total: usize = shape.iter().product();
        if shape.is_empty() || total != self.n_outcomes() {
            return Err(Error::invalid(
                "instrument",
                format!(
                    "outcome set of size {} is not the declared product {:?}",
                    self.n_outcomes(),
                    shape
                ),
            ));
        }
        if keep >= shape.len() {
            return Err(Error::shape(format!(
                "keep index {keep} out of range for {} coordinates",
                shape.len()
            )));
        }
        let mut maps: Vec<Option<CpMap>> = vec![None; shape[keep]];
        let mut idx = vec![0usize; shape.len()];
        for lin in 0..total {
            decode_row(lin, shape, &mut idx);
            let slot = &mut maps[idx[keep]];
            *slot = Some(match slot.take() {
                None => self.maps[lin].clone(),
                Some(acc) => acc.add_scaled(&self.maps[lin], 1.0)?,
            });
        }
        let outcomes = (0..shape[keep]).map(|x| x.to_string()).collect();
        Instrument::new(
            outcomes,
            maps.into_iter().map(|m| m.expect("every slot hit")).collect(),
        )
    }
}
