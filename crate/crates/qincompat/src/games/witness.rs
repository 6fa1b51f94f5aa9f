//! Conversion of separating functionals into guessing games.
//!
//! A verified witness bounds `sum <Z_{j,y}, C_{j,y}>` on every compatible
//! family. Shifting each program's blocks by an input-space operator and a
//! multiple of the identity makes them branch Chois of a valid referee
//! instrument without changing which families are separated: on families
//! whose programs are trace preserving the shifts contribute a constant,
//! so the induced game value is an affine function of the witness value.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::compat::SdpWitness;
use crate::error::{Error, Result};
use crate::games::game::GuessingGame;
use crate::qobjects::{CpMap, Instrument, ProgrammableInstrument};
use crate::tensor::{HermitianBlock, SystemLabel};

/// Affine bookkeeping for a converted witness: on played families with
/// trace-preserving programs,
/// `game value = witness value * round_scale / k + c`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Rescaling {
    /// Positive scale between the centered witness blocks and the referee.
    pub k: f64,
    /// Per-program input-space shifts folded into the referee blocks.
    pub x: Vec<HermitianBlock>,
    /// Constant offset of the affine relation.
    pub c: f64,
    pub note: String,
}

impl Rescaling {
    /// Guaranteed game-value gap between the refuted target and every
    /// family the witness bounds, given the verified witness margin.
    pub fn excess(&self, margin: f64, game: &GuessingGame) -> f64 {
        margin * game.round_scale() / self.k
    }
}

const IN_SUFFIX: &str = "@in";

/// Builds a guessing game whose referee reproduces the witness functional
/// up to the returned rescaling. Requires every block of the witness to
/// live on one shared system layout; blocks on a Choi space keep their
/// split into outputs and decorated inputs, while blocks on a plain effect
/// space are treated as inputs only.
pub fn witness_to_game(w: &SdpWitness) -> Result<(GuessingGame, Rescaling)> {
    if w.z.is_empty() || w.z.iter().any(|zi| zi.is_empty()) {
        return Err(Error::invalid("witness", "empty block family"));
    }
    let systems = w.z[0][0].systems.clone();
    for zi in &w.z {
        for b in zi {
            if b.systems != systems {
                return Err(Error::invalid(
                    "witness",
                    "blocks live on different system layouts; the conversion \
                     needs one shared layout across programs",
                ));
            }
        }
    }
    let n_split = systems
        .iter()
        .position(|s| s.name.ends_with(IN_SUFFIX))
        .unwrap_or(systems.len());
    if systems[n_split..]
        .iter()
        .any(|s| !s.name.ends_with(IN_SUFFIX))
    {
        return Err(Error::invalid(
            "witness",
            "decorated input systems must form a suffix of the layout",
        ));
    }
    let effect_layout = n_split == systems.len() && !systems.is_empty();
    let (out_labels, in_dec): (Vec<SystemLabel>, Vec<SystemLabel>) = if effect_layout {
        (
            vec![],
            systems
                .iter()
                .map(|s| SystemLabel::new(format!("{}{IN_SUFFIX}", s.name), s.dim))
                .collect(),
        )
    } else {
        (
            systems[..n_split].to_vec(),
            systems[n_split..].to_vec(),
        )
    };
    let in_labels: Vec<SystemLabel> = in_dec
        .iter()
        .map(|s| {
            SystemLabel::new(
                s.name.trim_end_matches(IN_SUFFIX).to_string(),
                s.dim,
            )
        })
        .collect();
    let layout: Vec<SystemLabel> = out_labels.iter().chain(&in_dec).cloned().collect();
    let layout_names: Vec<&str> = layout.iter().map(|s| s.name.as_str()).collect();
    let out_names: Vec<&str> = out_labels.iter().map(|s| s.name.as_str()).collect();
    let d_d: usize = out_labels.iter().map(|s| s.dim).product();
    let n_j = w.z.len();
    let n_max = w.z.iter().map(|zi| zi.len()).max().unwrap_or(1);

    // referee-side blocks: transposed on a Choi layout (the game scores
    // with a transpose, which also cancels the effect-Choi transpose on an
    // effect layout, where the blocks pass through unchanged)
    let carrier: Vec<Vec<HermitianBlock>> = w
        .z
        .iter()
        .map(|zi| {
            zi.iter()
                .map(|b| {
                    let mat = if effect_layout {
                        b.mat.clone()
                    } else {
                        b.mat.transpose()
                    };
                    HermitianBlock::new(layout.clone(), mat)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    // center each program: subtract the input-space operator that makes the
    // branch marginals sum to zero
    let mut centered: Vec<Vec<HermitianBlock>> = Vec::with_capacity(n_j);
    let mut marg_shift: Vec<HermitianBlock> = Vec::with_capacity(n_j);
    for blocks in &carrier {
        let n_y = blocks.len();
        let mut s = HermitianBlock::zeros(in_dec.clone());
        for b in blocks {
            let m = b.partial_trace(&out_names)?;
            s.mat += m.permute_systems(
                &in_dec.iter().map(|l| l.name.as_str()).collect::<Vec<_>>(),
            )?
            .mat;
        }
        s.mat /= Complex64::new((n_y * d_d) as f64, 0.0);
        let shift = id_tensor(&out_labels, &s)?;
        let row = blocks
            .iter()
            .map(|b| {
                let mut c = b.permute_systems(&layout_names)?;
                c.mat -= &shift.mat;
                Ok(c)
            })
            .collect::<Result<Vec<_>>>()?;
        centered.push(row);
        marg_shift.push(s);
    }

    let mut m_neg = 0.0f64;
    for row in &centered {
        for b in row {
            let lam_min = b
                .mat
                .clone()
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .fold(f64::INFINITY, |a, &v| a.min(v));
            m_neg = m_neg.max(-lam_min);
        }
    }
    let degenerate = m_neg <= 1e-12;
    let k = m_neg.max(1e-12) * d_d as f64 * n_max as f64;
    let note = if degenerate {
        "witness has no operator content after centering; the game is the \
         uniform referee and cannot separate"
            .to_string()
    } else {
        format!("centering shift bounded by {m_neg:.3e}, scale {k:.3e}")
    };

    let mut instruments = Vec::with_capacity(n_j);
    let mut x = Vec::with_capacity(n_j);
    for (j, row) in centered.iter().enumerate() {
        let n_y = row.len();
        let uniform = 1.0 / (n_y * d_d) as f64;
        let mut maps = Vec::with_capacity(n_y);
        for b in row {
            let mut mat = &b.mat / Complex64::new(k, 0.0);
            for i in 0..mat.nrows() {
                mat[(i, i)] += Complex64::new(uniform, 0.0);
            }
            let block = HermitianBlock::new(layout.clone(), mat)?;
            maps.push(CpMap::new(in_labels.clone(), out_labels.clone(), block)?);
        }
        instruments.push(Instrument::new(
            (0..n_y).map(|y| y.to_string()).collect(),
            maps,
        )?);
        // X_j - S_j scaled: the net input-space shift applied to program j
        let mut xi = marg_shift[j].clone();
        xi.mat = -&xi.mat;
        let x_diag = k / (n_y * d_d) as f64;
        for i in 0..xi.mat.nrows() {
            xi.mat[(i, i)] += Complex64::new(x_diag, 0.0);
        }
        x.push(xi);
    }
    let referee = ProgrammableInstrument::new(
        (0..n_j).map(|j| format!("w{j}")).collect(),
        instruments,
    )?;
    let game = GuessingGame::new(referee)?;
    let scale = game.round_scale();
    let shift_traces: f64 = x.iter().map(|b| b.mat.trace().re).sum();
    let c = scale * shift_traces / k - scale / k * w.trace_multiplier * w.trace_rhs;
    Ok((
        game,
        Rescaling {
            k,
            x,
            c,
            note,
        },
    ))
}

/// `1_D tensor s` on the shared layout.
fn id_tensor(outs: &[SystemLabel], s: &HermitianBlock) -> Result<HermitianBlock> {
    if outs.is_empty() {
        return Ok(s.clone());
    }
    let eye = HermitianBlock::identity(outs.to_vec());
    eye.kron(s)
}
