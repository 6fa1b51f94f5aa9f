use nalgebra::DMatrix;
use num_complex::Complex64;

use super::problem::{re_inner, AffinePsdProblem, BlockSpec};
use super::solve::{solve_from, FeasibilityResult, Witness};
use crate::config::SolverConfig;
use crate::error::{Error, Result};
use crate::tensor::{HermitianBlock, SystemLabel};

/// Certified enclosure of a linear maximum over an affine PSD section.
#[derive(Debug, Clone)]
pub struct LinMaxResult {
    /// Achievable value: `achiever` reaches at least `lo` within the solver
    /// tolerance.
    pub lo: f64,
    /// Upper end of the enclosure: either the a-priori bracket bound or a
    /// level refuted by `refuter`.
    pub hi: f64,
    pub achiever: Vec<HermitianBlock>,
    /// Witness refuting the level problem at `hi`, when bisection got that
    /// far. The refuted problem is the input problem plus a scalar slack
    /// block and the row `objective - slack = hi` (so it refutes
    /// `objective >= hi`).
    pub refuter: Option<Witness>,
    pub bisection_steps: usize,
    /// False when a bisection step stayed undecided and the enclosure is
    /// wider than `bis_tol`.
    pub tight: bool,
}

/// Maximizes `sum_b <C_b, X_b>` over the problem's feasible region by
/// bisection on the one-sided level condition `objective >= t`, encoded with
/// a nonnegative scalar slack as `objective - s = t`. Feasible levels raise
/// `lo` with an explicit point, refuted levels lower `hi` with a verified
/// witness; both sides of the final enclosure are certified.
///
/// `bracket` is an a-priori enclosure of the objective over the region; it
/// does not need to be tight.
pub fn maximize_linear(
    problem: &AffinePsdProblem,
    objective: &[(usize, DMatrix<Complex64>)],
    bracket: (f64, f64),
    bis_tol: f64,
    cfg: &SolverConfig,
) -> Result<LinMaxResult> {
    // normalize the objective row for Gram conditioning
    let norm: f64 = objective
        .iter()
        .map(|(_, g)| g.norm().powi(2))
        .sum::<f64>()
        .sqrt();
    if norm < 1e-300 {
        return Err(Error::invalid("objective", "zero objective"));
    }

    // level problem: original blocks plus a scalar slack, one extra row
    let mut level = problem.clone();
    level.blocks.push(BlockSpec {
        name: "@slack".into(),
        dim: 1,
    });
    let slack = level.blocks.len() - 1;
    let mut terms: Vec<(usize, DMatrix<Complex64>)> = objective
        .iter()
        .map(|(b, g)| (*b, g / Complex64::new(norm, 0.0)))
        .collect();
    terms.push((slack, -DMatrix::identity(1, 1)));
    let obj_row = level.add_constraint("objective-level", terms, 0.0)?;

    let evaluate = |x: &[HermitianBlock]| -> f64 {
        objective
            .iter()
            .map(|(b, g)| re_inner(g, &x[*b].mat))
            .sum()
    };

    // base solve gives the initial achievable value
    let base = super::solve::solve(problem, cfg);
    let (mut lo, mut achiever) = match base {
        FeasibilityResult::Feasible { assignment, .. } => {
            let v = evaluate(&assignment).clamp(bracket.0, bracket.1);
            (v, assignment)
        }
        FeasibilityResult::Infeasible { .. } => {
            return Err(Error::invalid(
                "linear maximization",
                "base problem is infeasible",
            ))
        }
        FeasibilityResult::Undecided { note, .. } => {
            return Err(Error::Undecided(format!(
                "base problem did not resolve: {note}"
            )))
        }
    };
    let mut hi = bracket.1;

    // Primal ascent on the base problem: uphill step in the objective, then
    // re-solve feasibility from the stepped point. Level probes below the
    // optimum converge poorly, so the achievable side is pushed up here and
    // bisection is left with the refutation side, where the stall-based
    // witness extraction resolves quickly.
    {
        let budget = SolverConfig {
            max_iter: (cfg.max_iter / 8).max(2_000),
            ..*cfg
        };
        let mut cur = achiever.clone();
        let mut s = (hi - lo).max(bis_tol) / (norm * norm);
        let mut fails = 0usize;
        for _ in 0..80 {
            if hi - lo <= bis_tol || fails > 8 {
                break;
            }
            let mut stepped = cur.clone();
            for (b, g) in objective {
                stepped[*b].mat += g * Complex64::new(s, 0.0);
            }
            match solve_from(problem, &stepped, &budget) {
                FeasibilityResult::Feasible { assignment, .. } => {
                    let v = evaluate(&assignment);
                    if v > lo + 1e-12 {
                        lo = v.min(hi);
                        cur = assignment.clone();
                        achiever = assignment;
                        fails = 0;
                        s *= 1.3;
                    } else {
                        fails += 1;
                        s *= 0.5;
                    }
                }
                _ => {
                    fails += 1;
                    s *= 0.5;
                }
            }
        }
    }

    let mut refuter: Option<Witness> = None;
    let mut steps = 0usize;
    let mut tight = true;
    let mut warm = achiever.clone();

    while hi - lo > bis_tol && steps < 200 {
        steps += 1;
        let mid = 0.5 * (lo + hi);
        level.constraints[obj_row].rhs = mid / norm;
        let mut start = warm.clone();
        let s0 = ((evaluate(&warm) - mid) / norm).max(0.0);
        start.push(HermitianBlock {
            systems: vec![SystemLabel::new("@slack", 1)],
            mat: DMatrix::from_element(1, 1, Complex64::new(s0, 0.0)),
        });
        let mut outcome = solve_from(&level, &start, cfg);
        if matches!(outcome, FeasibilityResult::Undecided { .. }) {
            // one escalation with a larger budget before giving up
            let mut big = *cfg;
            big.max_iter = cfg.max_iter * 4;
            outcome = solve_from(&level, &start, &big);
        }
        if std::env::var("QIC_DEBUG_LINMAX").is_ok() {
            let kind = match &outcome {
                FeasibilityResult::Feasible { iters, residual, .. } => {
                    format!("feasible iters {iters} res {residual:.2e}")
                }
                FeasibilityResult::Infeasible { iters, .. } => format!("infeasible iters {iters}"),
                FeasibilityResult::Undecided { iters, gap, residual, .. } => {
                    format!("undecided iters {iters} gap {gap:.2e} res {residual:.2e}")
                }
            };
            eprintln!("linmax step {steps}: mid {mid:.9} -> {kind}");
        }
        match outcome {
            FeasibilityResult::Feasible { mut assignment, .. } => {
                assignment.pop();
                let v = evaluate(&assignment);
                lo = mid.max(v.min(hi));
                warm = assignment.clone();
                achiever = assignment;
            }
            FeasibilityResult::Infeasible { witness, .. } => {
                hi = mid;
                refuter = Some(witness);
            }
            FeasibilityResult::Undecided { .. } => {
                // neither side certifiable at mid: stop with the enclosure
                // established so far
                tight = false;
                break;
            }
        }
    }

    Ok(LinMaxResult {
        lo,
        hi,
        achiever,
        refuter,
        bisection_steps: steps,
        tight: tight && hi - lo <= bis_tol,
    })
}
