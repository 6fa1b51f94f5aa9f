//! Certificate validation by direct reconstruction. Everything here uses
//! only the Choi algebra of `qobjects`; none of the feasibility machinery
//! is involved, so a passing certificate is evidence independent of the
//! solver that produced it.

use crate::error::{Error, Result};
use crate::qobjects::{CpMap, Instrument, Povm, ProgrammableInstrument};
use crate::tensor::HermitianBlock;

use super::verdict::{
    ClassicalCertificate, NoExclusionCertificate, ParallelCertificate, PovmClassicalCertificate,
    QCompatCertificate,
};

fn mix_maps(maps: &[(f64, CpMap)]) -> Result<CpMap> {
    let mut acc: Option<CpMap> = None;
    for (w, m) in maps {
        acc = Some(match acc {
            None => m.scale(*w),
            Some(a) => a.add_scaled(m, *w)?,
        });
    }
    acc.ok_or_else(|| Error::invalid("certificate", "empty mixture"))
}

impl PovmClassicalCertificate {
    pub fn validate(&self, tol: f64) -> Result<()> {
        self.mother.validate(tol)?;
        self.mu.validate(tol)
    }

    /// Largest entrywise deviation between the reconstructed effects and
    /// the target POVM family.
    pub fn deviation(&self, povms: &[Povm]) -> Result<f64> {
        let mut worst = 0.0f64;
        for (i, p) in povms.iter().enumerate() {
            for x in 0..p.n_outcomes() {
                let mut acc = HermitianBlock::zeros(p.systems().to_vec());
                for w in 0..self.mother.n_outcomes() {
                    let weight = self.mu.get(x, &[w, i]);
                    if weight != 0.0 {
                        acc = acc.add(&self.mother.effects[w].scale(weight))?;
                    }
                }
                worst = worst.max(acc.max_abs_diff(&p.effects[x]));
            }
        }
        Ok(worst)
    }
}

impl ClassicalCertificate {
    pub fn validate(&self, tol: f64) -> Result<()> {
        self.mother.validate(tol)?;
        self.mu.validate(tol)
    }

    pub fn reconstruct(&self, i: usize, x: usize) -> Result<CpMap> {
        let parts: Vec<(f64, CpMap)> = (0..self.mother.n_outcomes())
            .map(|w| (self.mu.get(x, &[w, i]), self.mother.maps[w].clone()))
            .collect();
        mix_maps(&parts)
    }

    pub fn deviation(&self, pi: &ProgrammableInstrument) -> Result<f64> {
        let mut worst = 0.0f64;
        for (i, inst) in pi.instruments.iter().enumerate() {
            for x in 0..inst.n_outcomes() {
                let got = self.reconstruct(i, x)?;
                worst = worst.max(got.choi.max_abs_diff(&inst.maps[x].choi));
            }
        }
        Ok(worst)
    }
}

/// Restriction of a broadcasting map to one output slot: discard all other
/// slots, then restore the slot's native label.
pub fn slot_marginal(map: &CpMap, keep: &[String], native: &[String]) -> Result<CpMap> {
    let discard: Vec<&str> = map
        .outputs
        .iter()
        .filter(|s| !keep.contains(&s.name))
        .map(|s| s.name.as_str())
        .collect();
    let mut choi = map.choi.partial_trace(&discard)?;
    let mut outputs = Vec::with_capacity(keep.len());
    for (k, nat) in keep.iter().zip(native.iter()) {
        choi.rename_system(k, nat)?;
        let dim = map
            .outputs
            .iter()
            .find(|s| &s.name == k)
            .ok_or_else(|| Error::UnknownLabel(k.clone()))?
            .dim;
        outputs.push(crate::tensor::SystemLabel::new(nat.clone(), dim));
    }
    CpMap::new(map.inputs.clone(), outputs, choi)
}

impl ParallelCertificate {
    pub fn validate(&self, tol: f64) -> Result<()> {
        self.mother.validate(tol)?;
        self.mu.validate(tol)
    }

    pub fn deviation(&self, pi: &ProgrammableInstrument) -> Result<f64> {
        let renamed = super::problems::parallel_output_labels(pi);
        let mut worst = 0.0f64;
        for (i, inst) in pi.instruments.iter().enumerate() {
            let keep: Vec<String> = renamed[i].iter().map(|s| s.name.clone()).collect();
            let native: Vec<String> = inst.outputs().iter().map(|s| s.name.clone()).collect();
            for x in 0..inst.n_outcomes() {
                let parts: Vec<(f64, CpMap)> = (0..self.mother.n_outcomes())
                    .map(|w| -> Result<(f64, CpMap)> {
                        Ok((
                            self.mu.get(x, &[w, i]),
                            slot_marginal(&self.mother.maps[w], &keep, &native)?,
                        ))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let got = mix_maps(&parts)?;
                worst = worst.max(got.choi.max_abs_diff(&inst.maps[x].choi));
            }
        }
        Ok(worst)
    }
}

impl QCompatCertificate {
    pub fn validate(&self, tol: f64) -> Result<()> {
        self.mother.validate(tol)?;
        self.mu.validate(tol)?;
        for per_i in &self.post_channels {
            for per_w in per_i {
                for ch in per_w {
                    ch.validate_channel(tol)?;
                }
            }
        }
        Ok(())
    }

    pub fn reconstruct(&self, i: usize, x: usize) -> Result<CpMap> {
        let parts: Vec<(f64, CpMap)> = (0..self.mother.n_outcomes())
            .map(|w| -> Result<(f64, CpMap)> {
                Ok((
                    self.mu.get(x, &[w, i]),
                    CpMap::compose(&self.post_channels[i][w][x], &self.mother.maps[w])?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        mix_maps(&parts)
    }

    pub fn deviation(&self, pi: &ProgrammableInstrument) -> Result<f64> {
        let mut worst = 0.0f64;
        for (i, inst) in pi.instruments.iter().enumerate() {
            for x in 0..inst.n_outcomes() {
                let got = self.reconstruct(i, x)?;
                worst = worst.max(got.choi.max_abs_diff(&inst.maps[x].choi));
            }
        }
        Ok(worst)
    }
}

impl NoExclusionCertificate {
    pub fn validate(&self, tol: f64) -> Result<()> {
        self.mother.validate(tol)?;
        self.mu.validate(tol)?;
        for per_w in &self.post_channels {
            for ch in per_w {
                ch.validate_channel(tol)?;
            }
        }
        for per_other in &self.recovery {
            for inst in per_other {
                inst.validate(tol)?;
            }
        }
        Ok(())
    }

    /// Deviation of the designated program's reconstruction.
    pub fn designated_deviation(&self, target: &Instrument) -> Result<f64> {
        let mut worst = 0.0f64;
        for x in 0..target.n_outcomes() {
            let parts: Vec<(f64, CpMap)> = (0..self.mother.n_outcomes())
                .map(|w| -> Result<(f64, CpMap)> {
                    Ok((
                        self.mu.get(x, &[w]),
                        CpMap::compose(&self.post_channels[w][x], &self.mother.maps[w])?,
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            let got = mix_maps(&parts)?;
            worst = worst.max(got.choi.max_abs_diff(&target.maps[x].choi));
        }
        Ok(worst)
    }

    /// Deviation of one recovered program: `sum_w K^{(w)}_y circ H_w`.
    pub fn recovery_deviation(&self, slot: usize, target: &Instrument) -> Result<f64> {
        let recovery = &self.recovery[slot];
        let mut worst = 0.0f64;
        for y in 0..target.n_outcomes() {
            let parts: Vec<(f64, CpMap)> = (0..self.mother.n_outcomes())
                .map(|w| -> Result<(f64, CpMap)> {
                    Ok((
                        1.0,
                        CpMap::compose(&recovery[w].maps[y], &self.mother.maps[w])?,
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            let got = mix_maps(&parts)?;
            worst = worst.max(got.choi.max_abs_diff(&target.maps[y].choi));
        }
        Ok(worst)
    }

    /// Worst deviation across the designated program and every recovery.
    pub fn deviation(&self, pi: &ProgrammableInstrument) -> Result<f64> {
        let mut worst = self.designated_deviation(&pi.instruments[self.designated])?;
        for (slot, &j) in self.recovered_programs.iter().enumerate() {
            worst = worst.max(self.recovery_deviation(slot, &pi.instruments[j])?);
        }
        Ok(worst)
    }
}
