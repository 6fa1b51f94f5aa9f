//! Exclusion structure: does implementing one designated program
//! irreversibly destroy the ability to implement the others?
//!
//! `Compatible` verdicts certify *no exclusion*: a mother instrument
//! realizes the designated program through mixing and repair channels while
//! every remaining program stays implementable downstream from the same
//! mother, by an outcome-dependent instrument on the mediating system.
//! `Incompatible` certifies that no such mother exists.

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::qobjects::{CpMap, Instrument, ProgrammableInstrument, StochasticMatrix};

use super::convex;
use super::seesaw;
use super::verdict::{
    CertificateKind, Diagnostics, NoExclusionCertificate, Notion, Status, Verdict,
};

fn delta_mu(n: usize) -> Result<StochasticMatrix> {
    StochasticMatrix::deterministic(n, vec![n], |cond| cond[0])
}

fn instruments_equal(a: &Instrument, b: &Instrument, tol: f64) -> bool {
    a.n_outcomes() == b.n_outcomes()
        && a.inputs() == b.inputs()
        && a.outputs() == b.outputs()
        && a.maps
            .iter()
            .zip(&b.maps)
            .all(|(x, y)| x.choi.max_abs_diff(&y.choi) <= tol)
}

/// The total channel equals the identity up to a slotwise renaming of
/// output systems (dimensions must line up).
fn total_is_identity(inst: &Instrument, tol: f64) -> Result<bool> {
    let ins = inst.inputs();
    let outs = inst.outputs();
    if ins.len() != outs.len() || ins.iter().zip(outs).any(|(a, b)| a.dim != b.dim) {
        return Ok(false);
    }
    let mut id_choi = CpMap::identity(ins.to_vec())?.choi;
    for (a, b) in ins.iter().zip(outs) {
        if a.name != b.name && id_choi.rename_system(&a.name, &b.name).is_err() {
            return Ok(false);
        }
    }
    if id_choi.systems != inst.total()?.choi.systems {
        return Ok(false);
    }
    Ok(inst.total()?.choi.max_abs_diff(&id_choi) <= tol)
}

/// Copy of an instrument acting on renamed input systems (same dims).
fn rename_inputs(inst: &Instrument, new_in: &[crate::tensor::SystemLabel]) -> Result<Instrument> {
    let maps = inst
        .maps
        .iter()
        .map(|m| {
            let mut choi = m.choi.clone();
            for (old, new) in m.inputs.iter().zip(new_in) {
                let from = crate::qobjects::in_label(old).name;
                let to = crate::qobjects::in_label(new).name;
                if from != to {
                    choi.rename_system(&from, &to)?;
                }
            }
            CpMap::new(new_in.to_vec(), m.outputs.clone(), choi)
        })
        .collect::<Result<Vec<_>>>()?;
    Instrument::new(inst.outcomes.clone(), maps)
}

/// Constant-identity repair channels per `(branch, outcome)`.
fn identity_posts(output: &Instrument) -> Result<Vec<Vec<CpMap>>> {
    let id = CpMap::identity(output.outputs().to_vec())?;
    Ok(vec![
        vec![id; output.n_outcomes()];
        output.n_outcomes()
    ])
}

/// The designated program itself as the mother: valid whenever its total
/// channel is (close to) the identity, because then every other program can
/// simply run afterwards, branch-independently.
fn identity_total_cert(
    pi: &ProgrammableInstrument,
    designated: usize,
    others: &[usize],
) -> Result<NoExclusionCertificate> {
    let des = &pi.instruments[designated];
    let recovery = others
        .iter()
        .map(|&j| {
            let renamed = rename_inputs(&pi.instruments[j], des.outputs())?;
            Ok(vec![renamed; des.n_outcomes()])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NoExclusionCertificate {
        designated,
        mother: des.clone(),
        mu: delta_mu(des.n_outcomes())?,
        post_channels: identity_posts(des)?,
        recovery,
        recovered_programs: others.to_vec(),
    })
}

/// Channels never exclude each other: the identity mother leaves the input
/// untouched for whichever channel runs downstream.
fn channels_cert(
    pi: &ProgrammableInstrument,
    designated: usize,
    others: &[usize],
) -> Result<NoExclusionCertificate> {
    Ok(NoExclusionCertificate {
        designated,
        mother: Instrument::from_channel(CpMap::identity(pi.inputs().to_vec())?),
        mu: StochasticMatrix::uniform(1, vec![1]),
        post_channels: vec![vec![pi.instruments[designated].maps[0].clone()]],
        recovery: others
            .iter()
            .map(|&j| vec![pi.instruments[j].clone()])
            .collect(),
        recovered_programs: others.to_vec(),
    })
}

/// Equal programs never exclude: re-announcing the mother's outcome through
/// the branch-matched identity instrument replays the designated program.
fn equal_family_cert(
    pi: &ProgrammableInstrument,
    designated: usize,
    others: &[usize],
) -> Result<NoExclusionCertificate> {
    let des = &pi.instruments[designated];
    let n = des.n_outcomes();
    let id = CpMap::identity(des.outputs().to_vec())?;
    let mut recovery = Vec::with_capacity(others.len());
    for _ in others {
        let mut per_w = Vec::with_capacity(n);
        for w in 0..n {
            let maps = (0..n)
                .map(|y| {
                    if y == w {
                        id.clone()
                    } else {
                        id.scale(0.0)
                    }
                })
                .collect();
            per_w.push(Instrument::new(des.outcomes.clone(), maps)?);
        }
        recovery.push(per_w);
    }
    Ok(NoExclusionCertificate {
        designated,
        mother: des.clone(),
        mu: delta_mu(n)?,
        post_channels: identity_posts(des)?,
        recovery,
        recovered_programs: others.to_vec(),
    })
}

/// A classical certificate implies no exclusion for every designated
/// program: mixing tables can always be applied after the fact.
fn classical_based_cert(
    pi: &ProgrammableInstrument,
    designated: usize,
    others: &[usize],
    mother: Instrument,
    mu_cl: &StochasticMatrix,
) -> Result<NoExclusionCertificate> {
    let w_count = mother.n_outcomes();
    let id = CpMap::identity(mother.outputs().to_vec())?;
    let des_outcomes = pi.instruments[designated].n_outcomes();
    let mut mu_p = vec![0.0; w_count * des_outcomes];
    for w in 0..w_count {
        for x in 0..des_outcomes {
            mu_p[w * des_outcomes + x] = mu_cl.get(x, &[w, designated]);
        }
    }
    let mu = StochasticMatrix::new(des_outcomes, vec![w_count], mu_p, 1e-9)?;
    let mut recovery = Vec::with_capacity(others.len());
    for &j in others {
        let inst = &pi.instruments[j];
        let mut per_w = Vec::with_capacity(w_count);
        for w in 0..w_count {
            let maps = (0..inst.n_outcomes())
                .map(|y| id.scale(mu_cl.get(y, &[w, j])))
                .collect();
            per_w.push(Instrument::new(inst.outcomes.clone(), maps)?);
        }
        recovery.push(per_w);
    }
    Ok(NoExclusionCertificate {
        designated,
        mother,
        mu,
        post_channels: vec![vec![id; des_outcomes]; w_count],
        recovery,
        recovered_programs: others.to_vec(),
    })
}

fn accept(
    cert: NoExclusionCertificate,
    pi: &ProgrammableInstrument,
    cfg: &RunConfig,
    notes: &mut Vec<String>,
    note: &str,
) -> Result<Option<Verdict>> {
    let deviation = cert.deviation(pi)?;
    if deviation <= cfg.tol.certificate && cert.validate(cfg.tol.certificate).is_ok() {
        let mut diagnostics = Diagnostics {
            residual: Some(deviation),
            ..Diagnostics::default()
        };
        diagnostics.notes.append(notes);
        diagnostics.notes.push(note.to_string());
        Ok(Some(Verdict {
            notion: Notion::Exclusivity,
            status: Status::Compatible(Box::new(CertificateKind::NoExclusion(cert))),
            diagnostics,
        }))
    } else {
        notes.push(format!(
            "constructive certificate rejected (deviation {deviation:.2e}): {note}"
        ));
        Ok(None)
    }
}

/// Does the designated program exclude the remaining ones? `Compatible`
/// means no (with a reconstructible certificate), `Incompatible` means yes.
pub fn check_exclusive(
    pi: &ProgrammableInstrument,
    designated: usize,
    cfg: &RunConfig,
) -> Result<Verdict> {
    pi.validate(cfg.tol.validation)?;
    if designated >= pi.n_programs() {
        return Err(Error::invalid(
            "exclusion check",
            format!("designated program {designated} out of range"),
        ));
    }
    let others: Vec<usize> = (0..pi.n_programs()).filter(|&j| j != designated).collect();
    if others.is_empty() {
        return Err(Error::invalid(
            "exclusion check",
            "need at least two programs",
        ));
    }
    let mut notes: Vec<String> = Vec::new();
    let des = &pi.instruments[designated];

    if total_is_identity(des, cfg.tol.certificate)? {
        // Label collisions while rewiring are not fatal: fall through.
        if let Ok(cert) = identity_total_cert(pi, designated, &others) {
            if let Some(v) = accept(
                cert,
                pi,
                cfg,
                &mut notes,
                "designated total channel is the identity; everything stays implementable",
            )? {
                return Ok(v);
            }
        }
    }

    if pi.instruments.iter().all(|inst| inst.n_outcomes() == 1) {
        if let Some(v) = accept(
            channels_cert(pi, designated, &others)?,
            pi,
            cfg,
            &mut notes,
            "all programs are channels; channels never exclude",
        )? {
            return Ok(v);
        }
    }

    if others
        .iter()
        .all(|&j| instruments_equal(des, &pi.instruments[j], cfg.tol.certificate))
    {
        if let Some(v) = accept(
            equal_family_cert(pi, designated, &others)?,
            pi,
            cfg,
            &mut notes,
            "all programs are equal; the outcome can be re-announced",
        )? {
            return Ok(v);
        }
    }

    if pi.uniform_outputs().is_some() {
        let classical = convex::check_instrument_classical(pi, cfg)?;
        if let Status::Compatible(kind) = classical.status {
            if let CertificateKind::Classical(cert) = *kind {
                if let Some(v) = accept(
                    classical_based_cert(pi, designated, &others, cert.mother, &cert.mu)?,
                    pi,
                    cfg,
                    &mut notes,
                    "lifted a classical certificate",
                )? {
                    return Ok(v);
                }
            }
        } else {
            notes.push("no classical certificate to lift".into());
        }
    }

    let (cert, report) = seesaw::fit_no_exclusion(pi, designated, cfg)?;
    if let Some(cert) = cert {
        let deviation = cert.deviation(pi)?;
        let mut diagnostics = Diagnostics {
            residual: Some(deviation),
            iterations: report.iterations,
            ..Diagnostics::default()
        };
        diagnostics.notes.append(&mut notes);
        diagnostics
            .notes
            .push("see-saw converged to a reconstructible certificate".into());
        return Ok(Verdict {
            notion: Notion::Exclusivity,
            status: Status::Compatible(Box::new(CertificateKind::NoExclusion(cert))),
            diagnostics,
        });
    }
    notes.push(format!(
        "see-saw best squared residual {:.3e} did not reach certificate quality",
        report.objective
    ));
    Ok(Verdict {
        notion: Notion::Exclusivity,
        status: Status::Undecided,
        diagnostics: Diagnostics {
            iterations: report.iterations,
            notes,
            ..Diagnostics::default()
        },
    })
}

/// Pairwise form: does `first` exclude `second`?
pub fn excludes(first: &Instrument, second: &Instrument, cfg: &RunConfig) -> Result<Verdict> {
    let pi = ProgrammableInstrument::new(
        vec!["first".into(), "second".into()],
        vec![first.clone(), second.clone()],
    )?;
    check_exclusive(&pi, 0, cfg)
}
