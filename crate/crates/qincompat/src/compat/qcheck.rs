//! Decision route for q-compatibility: a family is q-compatible when one
//! mother instrument followed by outcome-dependent repair channels and
//! classical mixing reproduces every program.
//!
//! The route is ordered from certain to heuristic: structural shortcuts,
//! then a sound incompatibility precheck on the induced POVMs, then the two
//! stronger notions (whose certificates embed), then the see-saw. Only the
//! see-saw can end in `Undecided`.

use crate::config::RunConfig;
use crate::error::Result;
use crate::qobjects::{CpMap, Instrument, Povm, ProgrammableInstrument, StochasticMatrix};
use crate::tensor::{HermitianBlock, SystemLabel};

use super::convex;
use super::problems;
use super::seesaw;
use super::verdict::{
    CertificateKind, CompatWitness, Diagnostics, GameWitness, Notion, QCompatCertificate, Status,
    Verdict,
};

/// Excess over the certified free bound required before a game separation
/// counts as a verdict; absorbs the bisection and solver tolerances.
pub(crate) const GAME_MARGIN: f64 = 1e-4;

/// Plays the family as its own referee and compares the achieved value to
/// the certified free threshold of the framework. An excess beyond
/// [`GAME_MARGIN`] is a sound incompatibility witness: free resources
/// cannot beat the threshold under any free protocol.
pub(crate) fn game_separation(
    pi: &ProgrammableInstrument,
    framework: crate::games::Framework,
    designated: Option<usize>,
    cfg: &RunConfig,
    notes: &mut Vec<String>,
) -> Result<Option<GameWitness>> {
    let game = crate::games::GuessingGame::new(pi.clone())?;
    let achieved = game.value_of(pi)?;
    let report = match designated {
        Some(j0) => crate::games::free_threshold_ex(&game, j0, cfg)?,
        None => crate::games::free_threshold(&game, framework, cfg)?,
    };
    let Some(bound) = report.upper else {
        notes.push("threshold program produced no certified upper bound".into());
        return Ok(None);
    };
    if achieved > bound + GAME_MARGIN {
        let mut bound_note = format!(
            "self-game value {achieved:.6} exceeds the certified free bound {bound:.6}"
        );
        for n in &report.notes {
            bound_note.push_str("; ");
            bound_note.push_str(n);
        }
        Ok(Some(GameWitness {
            referee: game.referee,
            achieved,
            free_bound: bound,
            bound_note,
        }))
    } else {
        notes.push(format!(
            "self-game value {achieved:.6} does not exceed the free bound {bound:.6}"
        ));
        Ok(None)
    }
}

/// Channel that keeps broadcast slot `i`, discards every other slot and
/// restores the native output labels.
fn slot_channel(pi: &ProgrammableInstrument, i: usize) -> Result<CpMap> {
    let renamed = problems::parallel_output_labels(pi);
    let native = pi.instruments[i].outputs();
    let mut choi: Option<HermitianBlock> = None;
    for (nat, ren) in native.iter().zip(renamed[i].iter()) {
        let pair =
            HermitianBlock::max_entangled(nat.clone(), crate::qobjects::in_label(ren))?;
        choi = Some(match choi {
            None => pair,
            Some(acc) => acc.kron(&pair)?,
        });
    }
    let mut full = choi.ok_or_else(|| crate::error::Error::shape("program has no output"))?;
    let others: Vec<SystemLabel> = renamed
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .flat_map(|(_, labels)| labels.iter().map(crate::qobjects::in_label))
        .collect();
    if !others.is_empty() {
        full = full.kron(&HermitianBlock::identity(others))?;
    }
    let inputs: Vec<SystemLabel> = renamed.into_iter().flatten().collect();
    let mut order: Vec<String> = native.iter().map(|s| s.name.clone()).collect();
    order.extend(inputs.iter().map(|s| crate::qobjects::in_label(s).name));
    let order_refs: Vec<&str> = order.iter().map(|s| s.as_str()).collect();
    let full = full.permute_systems(&order_refs)?;
    CpMap::new(inputs, native.to_vec(), full)
}

/// Lifts a classical certificate: the repair channels are identities on the
/// common output.
fn q_from_classical(
    pi: &ProgrammableInstrument,
    mother: Instrument,
    mu: StochasticMatrix,
) -> Result<QCompatCertificate> {
    let id = CpMap::identity(mother.outputs().to_vec())?;
    let w_count = mother.n_outcomes();
    let post_channels = pi
        .instruments
        .iter()
        .map(|inst| vec![vec![id.clone(); inst.n_outcomes()]; w_count])
        .collect();
    Ok(QCompatCertificate {
        mother,
        mu,
        post_channels,
    })
}

/// Lifts a parallel certificate: the repair channels discard the foreign
/// slots of the broadcast output.
fn q_from_parallel(
    pi: &ProgrammableInstrument,
    mother: Instrument,
    mu: StochasticMatrix,
) -> Result<QCompatCertificate> {
    let w_count = mother.n_outcomes();
    let mut post_channels = Vec::with_capacity(pi.n_programs());
    for (i, inst) in pi.instruments.iter().enumerate() {
        let slot = slot_channel(pi, i)?;
        post_channels.push(vec![vec![slot; inst.n_outcomes()]; w_count]);
    }
    Ok(QCompatCertificate {
        mother,
        mu,
        post_channels,
    })
}

fn compatible(cert: QCompatCertificate, mut diagnostics: Diagnostics, note: &str) -> Verdict {
    diagnostics.notes.push(note.to_string());
    Verdict {
        notion: Notion::Q,
        status: Status::Compatible(Box::new(CertificateKind::Q(cert))),
        diagnostics,
    }
}

/// Full q-compatibility check.
pub fn check_q(pi: &ProgrammableInstrument, cfg: &RunConfig) -> Result<Verdict> {
    pi.validate(cfg.tol.validation)?;
    let mut notes: Vec<String> = Vec::new();

    // Families of channels are always q-compatible: the mother forwards the
    // input untouched and each program is its own repair channel.
    if pi.instruments.iter().all(|inst| inst.n_outcomes() == 1) {
        let mother = Instrument::from_channel(CpMap::identity(pi.inputs().to_vec())?);
        let mu = StochasticMatrix::uniform(1, vec![1, pi.n_programs()]);
        let post_channels = pi
            .instruments
            .iter()
            .map(|inst| vec![vec![inst.maps[0].clone()]])
            .collect();
        let cert = QCompatCertificate {
            mother,
            mu,
            post_channels,
        };
        let deviation = cert.deviation(pi)?;
        return Ok(compatible(
            cert,
            Diagnostics {
                residual: Some(deviation),
                ..Diagnostics::default()
            },
            "every program is a channel; the identity mother realizes all of them",
        ));
    }

    // Sound incompatibility precheck: repair channels do not disturb
    // outcome statistics, so q-compatibility would make the induced POVMs
    // jointly measurable. A verified witness against that is a verified
    // witness against q-compatibility.
    let povms: Vec<Povm> = pi
        .instruments
        .iter()
        .map(|inst| inst.induced_povm())
        .collect::<Result<_>>()?;
    let precheck = convex::check_povm_classical(&povms, cfg)?;
    match precheck.status {
        Status::Incompatible(w) => {
            if let CompatWitness::Sdp(payload) = *w {
                let mut diagnostics = precheck.diagnostics;
                diagnostics
                    .notes
                    .push("induced POVMs are not jointly measurable".into());
                return Ok(Verdict {
                    notion: Notion::Q,
                    status: Status::Incompatible(Box::new(CompatWitness::InducedPovm(payload))),
                    diagnostics,
                });
            }
            notes.push("induced-POVM precheck returned a non-transferable witness".into());
        }
        Status::Compatible(_) => {
            notes.push("induced POVMs are jointly measurable; no obstruction there".into())
        }
        Status::Undecided => notes.push("induced-POVM precheck undecided".into()),
    }

    // Classical and parallel certificates embed into q certificates.
    if pi.uniform_outputs().is_some() {
        let classical = convex::check_instrument_classical(pi, cfg)?;
        match classical.status {
            Status::Compatible(kind) => {
                if let CertificateKind::Classical(cert) = *kind {
                    let mut diagnostics = classical.diagnostics;
                    diagnostics.notes.append(&mut notes);
                    let q = q_from_classical(pi, cert.mother, cert.mu)?;
                    return Ok(compatible(
                        q,
                        diagnostics,
                        "embedded a classical certificate (identity repairs)",
                    ));
                }
            }
            Status::Incompatible(_) => notes.push(
                "not classically compatible (no conclusion for q; the hierarchy is strict)".into(),
            ),
            Status::Undecided => notes.push("classical embedding attempt undecided".into()),
        }
    } else {
        notes.push("no common output system; classical embedding skipped".into());
    }

    let parallel = convex::check_parallel(pi, cfg)?;
    match parallel.status {
        Status::Compatible(kind) => {
            if let CertificateKind::Parallel(cert) = *kind {
                let mut diagnostics = parallel.diagnostics;
                diagnostics.notes.append(&mut notes);
                let q = q_from_parallel(pi, cert.mother, cert.mu)?;
                return Ok(compatible(
                    q,
                    diagnostics,
                    "embedded a parallel certificate (slot-discarding repairs)",
                ));
            }
        }
        Status::Incompatible(_) => {
            notes.push("not parallel compatible (no conclusion for q)".into())
        }
        Status::Undecided => notes.push("parallel embedding attempt undecided".into()),
    }

    // Lueders-anchored see-saw over (mother POVM, repairs, mixing).
    let (cert, report) = seesaw::fit_q(pi, cfg)?;
    if let Some(cert) = cert {
        let deviation = cert.deviation(pi)?;
        let mut diagnostics = Diagnostics {
            residual: Some(deviation),
            iterations: report.iterations,
            ..Diagnostics::default()
        };
        diagnostics.notes.append(&mut notes);
        return Ok(compatible(
            cert,
            diagnostics,
            "see-saw converged to a reconstructible certificate",
        ));
    }
    notes.push(format!(
        "see-saw best squared residual {:.3e} did not reach certificate quality",
        report.objective
    ));
    Ok(Verdict {
        notion: Notion::Q,
        status: Status::Undecided,
        diagnostics: Diagnostics {
            iterations: report.iterations,
            notes,
            ..Diagnostics::default()
        },
    })
}
