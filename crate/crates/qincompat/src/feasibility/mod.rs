//! Certified feasibility for affine sections of products of PSD cones.
//!
//! A problem consists of named Hermitian blocks `X_1, ..., X_m` constrained
//! by `X_b >= 0` and finitely many real-linear equations
//! `sum_b <G_{r,b}, X_b> = c_r` with Hermitian coefficients and the
//! Frobenius pairing `<G, X> = Tr[G X]`.
//!
//! The solver alternates exact projection onto the affine subspace with
//! blockwise spectral projection onto the PSD cones (Dykstra correction on
//! both sides). Three outcomes are possible, and only the first two are ever
//! reported as verdicts:
//!
//! * a feasible point whose residuals pass validation,
//! * a separating witness: multipliers `y` whose aggregated coefficient
//!   matrices `S_b = sum_r y_r G_{r,b}` are all negative semidefinite while
//!   `sum_r y_r c_r > 0`, which is contradictory for any PSD solution and is
//!   re-verified from scratch by [`verify_witness`],
//! * an explicit `Undecided` carrying diagnostics.
//!
//! On top of the feasibility kernel, [`maximize_linear`] brackets the
//! extremum of a linear functional over the same region by bisection on an
//! added level constraint, returning a certified enclosure, and
//! [`project_onto`] computes nearest points used by the see-saw searches.

mod linmax;
mod problem;
mod solve;
#[cfg(test)]
mod tests;

pub use linmax::{maximize_linear, LinMaxResult};
pub use problem::{hermitian_basis, AffinePsdProblem, BlockSpec, Constraint};
pub use solve::{
    project_onto, solve, solve_from, verify_witness, FeasibilityResult, ProjectionResult, Witness,
};
