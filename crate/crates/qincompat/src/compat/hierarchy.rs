//! All four compatibility notions for one family, checked together with the
//! logical implications between them enforced.
//!
//! For programmable instruments the notions form a strict hierarchy:
//! classical and parallel compatibility each imply q-compatibility, and
//! q-compatibility implies that no program excludes the rest. A report whose
//! verdicts contradict those implications indicates an internal bug, so the
//! run fails hard instead of returning it.
//!
//! For plain POVMs every notion collapses onto joint measurability: a joint
//! parent POVM can always be refined until one classical post-processing
//! serves simultaneously as the designated reconstruction and as every
//! recovery instrument, so a single verdict is replicated across notions.

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::qobjects::{Povm, ProgrammableInstrument};

use super::convex;
use super::exclusion;
use super::qcheck;
use super::verdict::{Notion, Verdict};

/// Verdicts for every notion plus the implications that held between them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HierarchyReport {
    pub classical: Verdict,
    pub parallel: Verdict,
    pub q: Verdict,
    /// Exclusion checked with program 0 designated.
    pub exclusivity: Verdict,
    /// Human-readable notes on which implications were visible.
    pub implied: Vec<String>,
}

fn violation(detail: &str) -> Error {
    Error::ImplicationViolation(detail.to_string())
}

/// Run every notion on an instrument family and cross-check the hierarchy.
pub fn hierarchy(pi: &ProgrammableInstrument, cfg: &RunConfig) -> Result<HierarchyReport> {
    pi.validate(cfg.tol.validation)?;
    let classical = convex::check_instrument_classical(pi, cfg)?;
    let parallel = convex::check_parallel(pi, cfg)?;
    let q = qcheck::check_q(pi, cfg)?;
    let exclusivity = exclusion::check_exclusive(pi, 0, cfg)?;

    if classical.is_compatible() && q.is_incompatible() {
        return Err(violation(
            "classical certificate coexists with a q-incompatibility witness",
        ));
    }
    if parallel.is_compatible() && q.is_incompatible() {
        return Err(violation(
            "parallel certificate coexists with a q-incompatibility witness",
        ));
    }
    if q.is_compatible() && exclusivity.is_incompatible() {
        return Err(violation(
            "q certificate coexists with an exclusion witness",
        ));
    }

    let mut implied = Vec::new();
    if classical.is_compatible() {
        implied.push(
            "classical implies q: the classical certificate embeds with identity repairs"
                .to_string(),
        );
    }
    if parallel.is_compatible() {
        implied.push(
            "parallel implies q: the parallel certificate embeds with slot-discarding repairs"
                .to_string(),
        );
    }
    if q.is_compatible() {
        implied.push(
            "q implies no exclusion: repairs of the designated program double as recoveries"
                .to_string(),
        );
    }
    if q.is_compatible() && classical.is_incompatible() && parallel.is_incompatible() {
        implied.push(
            "strictness visible: q-compatible yet neither classically nor parallel compatible"
                .to_string(),
        );
    }
    if exclusivity.is_compatible() && q.is_incompatible() {
        implied.push(
            "strictness visible: non-exclusive yet q-incompatible".to_string(),
        );
    }

    Ok(HierarchyReport {
        classical,
        parallel,
        q,
        exclusivity,
        implied,
    })
}

/// For POVMs all notions coincide with joint measurability, so one joint
/// measurability verdict is replicated with per-notion collapse notes.
pub fn povm_hierarchy(povms: &[Povm], cfg: &RunConfig) -> Result<HierarchyReport> {
    let base = convex::check_povm_classical(povms, cfg)?;
    let replicate = |notion: Notion, note: &str| -> Verdict {
        let mut v = base.clone();
        v.notion = notion;
        v.diagnostics.notes.push(note.to_string());
        v
    };
    let classical = base.clone();
    let parallel = replicate(
        Notion::Parallel,
        "collapses to joint measurability: marginals of a joint POVM",
    );
    let q = replicate(
        Notion::Q,
        "collapses to joint measurability: destructive measurements leave nothing to repair",
    );
    let exclusivity = replicate(
        Notion::Exclusivity,
        "collapses to joint measurability: a refined joint parent recovers every measurement",
    );
    Ok(HierarchyReport {
        classical,
        parallel,
        q,
        exclusivity,
        implied: vec![
            "for POVMs every notion coincides with joint measurability".to_string(),
        ],
    })
}
