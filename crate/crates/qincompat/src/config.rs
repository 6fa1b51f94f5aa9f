//! Central numeric configuration. Every tolerance used anywhere in the crate
//! lives here so that tests and the CLI pin one consistent set of constants.

use serde::{Deserialize, Serialize};

/// Tolerances for object validation and certificate acceptance.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Tolerances {
    /// Hermiticity, positivity and normalization checks on constructed
    /// objects (states, effects, Choi operators).
    pub validation: f64,
    /// Residual below which a reconstructed certificate counts as exact.
    pub certificate: f64,
    /// Entrywise tolerance for comparing matrices in tests and reports.
    pub compare: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            validation: 1e-9,
            certificate: 1e-7,
            compare: 1e-10,
        }
    }
}

/// Configuration of the alternating-projection feasibility solver.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct SolverConfig {
    /// Constraint residual (infinity norm) below which the PSD iterate is
    /// accepted as a feasible point.
    pub tol: f64,
    /// Witnesses are only accepted when their certified separation value
    /// exceeds this margin; anything weaker stays `Undecided`.
    pub separation_margin: f64,
    /// Hard cap on alternating-projection iterations.
    pub max_iter: usize,
    /// Number of trailing iterations over which progress is measured when
    /// deciding that the iteration has stalled on an infeasible instance.
    pub stall_window: usize,
    /// Relative gap improvement below which the iteration counts as stalled.
    pub stall_rel: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-7,
            separation_margin: 1e-6,
            max_iter: 50_000,
            stall_window: 120,
            stall_rel: 1e-4,
        }
    }
}

/// Configuration of the see-saw searches used for certificate hunting and
/// game-utility lower bounds. All runs are deterministic given `seed`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct SeesawConfig {
    /// Random restarts. The first restarts use structured initial points
    /// (identity wiring, planted certificates where available); the rest are
    /// sampled from the seeded generator.
    pub restarts: usize,
    /// Outer sweeps per restart.
    pub sweeps: usize,
    /// Projected-gradient iterations per quantum-block update.
    pub pg_iters: usize,
    /// Objective change below which a restart is considered converged.
    pub obj_tol: f64,
    /// Seed for the restart generator.
    pub seed: u64,
}

impl Default for SeesawConfig {
    fn default() -> Self {
        SeesawConfig {
            restarts: 20,
            sweeps: 40,
            pg_iters: 60,
            obj_tol: 1e-9,
            seed: 7,
        }
    }
}

/// Bundle passed to the high-level entry points and the CLI.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Default)]
pub struct RunConfig {
    pub tol: Tolerances,
    pub solver: SolverConfig,
    pub seesaw: SeesawConfig,
}

impl RunConfig {
    /// A cheaper profile for interactive experimentation and for the larger
    /// randomized test suites: fewer restarts and shorter inner loops. The
    /// tolerances themselves are unchanged.
    pub fn quick() -> Self {
        RunConfig {
            tol: Tolerances::default(),
            solver: SolverConfig::default(),
            seesaw: SeesawConfig {
                restarts: 4,
                sweeps: 25,
                pg_iters: 40,
                ..SeesawConfig::default()
            },
        }
    }
}
