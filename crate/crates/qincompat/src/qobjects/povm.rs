use crate::error::{Error, Result};
use crate::qobjects::cpmap::CpMap;
use crate::qobjects::instrument::Instrument;
use crate::tensor::HermitianBlock;

/// A positive operator-valued measure on a labeled system.
#[derive(Debug, Clone, PartialEq)]
pub struct Povm {
    pub outcomes: Vec<String>,
    pub effects: Vec<HermitianBlock>,
}

impl Povm {
    pub fn new(outcomes: Vec<String>, effects: Vec<HermitianBlock>) -> Result<Self> {
        if outcomes.is_empty() || outcomes.len() != effects.len() {
            return Err(Error::invalid(
                "povm",
                format!(
                    "{} outcome labels for {} effects",
                    outcomes.len(),
                    effects.len()
                ),
            ));
        }
        for e in &effects[1..] {
            if e.systems != effects[0].systems {
                return Err(Error::shape("povm effects live on different systems"));
            }
        }
        Ok(Povm { outcomes, effects })
    }

    pub fn systems(&self) -> &[crate::tensor::SystemLabel] {
        &self.effects[0].systems
    }

    pub fn n_outcomes(&self) -> usize {
        self.effects.len()
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        let mut sum = HermitianBlock::zeros(self.effects[0].systems.clone());
        for (k, e) in self.effects.iter().enumerate() {
            e.check_hermitian(tol).map_err(|err| {
                Error::invalid("povm", format!("effect {}: {err}", self.outcomes[k]))
            })?;
            let lam = e.lambda_min();
            if lam < -tol {
                return Err(Error::invalid(
                    "povm",
                    format!("effect {} has eigenvalue {lam:.3e}", self.outcomes[k]),
                ));
            }
            sum = sum.add(e)?;
        }
        let id = HermitianBlock::identity(sum.systems.clone());
        let d = sum.max_abs_diff(&id);
        if d > tol {
            return Err(Error::invalid(
                "povm",
                format!("effects sum deviates from identity by {d:.3e}"),
            ));
        }
        Ok(())
    }

    /// Probability vector on a state.
    pub fn probabilities(&self, rho: &HermitianBlock) -> Result<Vec<f64>> {
        self.effects.iter().map(|e| Ok(e.inner(rho))).collect()
    }

    /// Measure-and-discard instrument: outcome probabilities are preserved,
    /// the quantum output is trivial.
    pub fn as_instrument(&self) -> Result<Instrument> {
        let inputs = self.effects[0].systems.clone();
        let maps = self
            .effects
            .iter()
            .map(|e| {
                let mut choi = e.transpose();
                for s in choi.systems.iter_mut() {
                    s.name = format!("{}@in", s.name);
                }
                CpMap::new(inputs.clone(), vec![], choi)
            })
            .collect::<Result<Vec<_>>>()?;
        Instrument::new(self.outcomes.clone(), maps)
    }

    /// Generalized Lueders instrument of this POVM: member maps
    /// `rho -> sqrt(E_x) rho sqrt(E_x)`.
    pub fn lueders_instrument(&self) -> Result<Instrument> {
        let inputs = self.effects[0].systems.clone();
        let maps = self
            .effects
            .iter()
            .map(|e| {
                let root = e.spectral_map(|x| if x > 0.0 { x.sqrt() } else { 0.0 });
                CpMap::from_kraus(inputs.clone(), inputs.clone(), &[root.mat.clone()])
            })
            .collect::<Result<Vec<_>>>()?;
        Instrument::new(self.outcomes.clone(), maps)
    }
}
