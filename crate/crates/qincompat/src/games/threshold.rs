//! Exact free-utility thresholds per framework.
//!
//! For each framework the supremum of the game value over free resources
//! and free protocols is a semidefinite program over branch Chois of a
//! mother instrument played straight into the game:
//!
//! * `c`: blocks `H_t : C -> D` indexed by guess tuples `t` (one guess per
//!   program), summing to a channel. A classical family's branches are
//!   binned by the guess tuple their mixing weights induce, and conversely
//!   every feasible block family is itself a classically programmable
//!   resource played with deterministic guesses.
//! * `q`: a tuple POVM `E_t` on the game input plus, per program `j` and
//!   tuple, a block `R_{j,t} : C -> D` whose input marginal matches `E_t`.
//!   Factoring `R_{j,t}` through the square-root instrument of `E_t`
//!   realizes every feasible point with branch-dependent repair channels,
//!   and every q-free strategy aggregates to a feasible point.
//! * `ex` (per designated program `j0`): blocks `P_y : C -> D` for the
//!   designated guesses, and per other program `j` recovery blocks
//!   `T_{j,y,y'}` with input marginals matching `P_y`. Here the repairs
//!   for `j` form instruments whose outcome is announced directly.
//!
//! The bisection encloses the optimum; the reported `value` replays the
//! canonical protocol built from the achiever, so it is always achievable,
//! while `upper` carries the refuted level.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::compat::seesaw::{factor_channel_raw, hermitize_raw, kron_id_left, lueders_choi_raw, tr_out};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::feasibility::{maximize_linear, AffinePsdProblem, BlockSpec, LinMaxResult};
use crate::games::game::GuessingGame;
use crate::games::protocol::{apply_protocol, fresh_labels, FreeProtocol, GuessSource};
use crate::games::search::{polish_family, UtilityReport};
use crate::games::Framework;
use crate::qobjects::{fixtures, CpMap, Instrument, ProgrammableInstrument, StochasticMatrix};
use crate::tensor::{HermitianBlock, SystemLabel};

const BIS_TOL: f64 = 1e-5;

/// The classical and quantum ports of a resource, without its maps.
#[derive(Debug, Clone)]
pub(crate) struct ResourceShape {
    pub inputs: Vec<SystemLabel>,
    pub outputs: Vec<SystemLabel>,
    pub n_programs: usize,
    pub n_outcomes: usize,
}

impl ResourceShape {
    pub(crate) fn of(pi: &ProgrammableInstrument) -> Result<Self> {
        let outputs = pi
            .uniform_outputs()
            .ok_or_else(|| Error::shape("threshold protocols need uniform resource outputs"))?
            .to_vec();
        Ok(ResourceShape {
            inputs: pi.inputs().to_vec(),
            outputs,
            n_programs: pi.n_programs(),
            n_outcomes: pi.max_outcomes(),
        })
    }
}

/// All guess tuples, mixed radix with the first program slowest.
fn tuples(counts: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &n in counts {
        let mut next = Vec::with_capacity(out.len() * n);
        for prefix in &out {
            for v in 0..n {
                let mut t = prefix.clone();
                t.push(v);
                next.push(t);
            }
        }
        out = next;
    }
    out
}

fn lam_max(m: &DMatrix<Complex64>) -> f64 {
    hermitize_raw(m)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::NEG_INFINITY, |a, &b| a.max(b))
}

struct GameData {
    d_c: usize,
    d_d: usize,
    n_j: usize,
    n_y: Vec<usize>,
    /// Transposed referee Chois, scaled by the round weight: objective
    /// coefficient of a played block.
    zt: Vec<Vec<DMatrix<Complex64>>>,
    /// A-priori upper bound on every framework's threshold.
    hi0: f64,
}

fn game_data(game: &GuessingGame) -> GameData {
    let d_c = game.in_dim();
    let d_d = game.out_dim();
    let lam = game.round_scale();
    let n_y: Vec<usize> = game
        .referee
        .instruments
        .iter()
        .map(|i| i.n_outcomes())
        .collect();
    let zt: Vec<Vec<DMatrix<Complex64>>> = game
        .referee
        .instruments
        .iter()
        .map(|inst| {
            inst.maps
                .iter()
                .map(|m| m.choi.mat.transpose() * Complex64::new(lam, 0.0))
                .collect()
        })
        .collect();
    let hi0 = zt
        .iter()
        .map(|row| row.iter().map(lam_max).fold(0.0f64, f64::max))
        .sum::<f64>()
        * d_c as f64
        + 1e-6;
    GameData {
        d_c,
        d_d,
        n_j: game.n_programs(),
        n_y,
        zt,
        hi0,
    }
}

fn c_sdp(gd: &GameData, cfg: &RunConfig) -> Result<(LinMaxResult, Vec<Vec<usize>>)> {
    let tups = tuples(&gd.n_y);
    let dim = gd.d_d * gd.d_c;
    let blocks = tups
        .iter()
        .enumerate()
        .map(|(k, _)| BlockSpec {
            name: format!("H{k}"),
            dim,
        })
        .collect();
    let mut problem = AffinePsdProblem::new(blocks);
    let all: Vec<usize> = (0..tups.len()).collect();
    let eye = DMatrix::<Complex64>::identity(gd.d_c, gd.d_c);
    let d_d = gd.d_d;
    problem.add_matrix_eq("mother-tp", &all, |_, beta| kron_id_left(d_d, beta), &eye)?;
    problem.add_trace_row(gd.d_c as f64)?;
    let objective: Vec<(usize, DMatrix<Complex64>)> = tups
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let mut g = DMatrix::<Complex64>::zeros(dim, dim);
            for (j, &y) in t.iter().enumerate() {
                g += &gd.zt[j][y];
            }
            (k, g)
        })
        .collect();
    let lin = maximize_linear(&problem, &objective, (0.0, gd.hi0), BIS_TOL, &cfg.solver)?;
    Ok((lin, tups))
}

fn q_sdp(gd: &GameData, cfg: &RunConfig) -> Result<(LinMaxResult, Vec<Vec<usize>>)> {
    let tups = tuples(&gd.n_y);
    let n_t = tups.len();
    let dim = gd.d_d * gd.d_c;
    let mut blocks: Vec<BlockSpec> = (0..n_t)
        .map(|k| BlockSpec {
            name: format!("E{k}"),
            dim: gd.d_c,
        })
        .collect();
    for j in 0..gd.n_j {
        for k in 0..n_t {
            blocks.push(BlockSpec {
                name: format!("R{j}.{k}"),
                dim,
            });
        }
    }
    let r_id = |j: usize, k: usize| n_t + j * n_t + k;
    let mut problem = AffinePsdProblem::new(blocks);
    let e_ids: Vec<usize> = (0..n_t).collect();
    let eye = DMatrix::<Complex64>::identity(gd.d_c, gd.d_c);
    problem.add_matrix_eq("tuple-povm", &e_ids, |_, beta| beta.clone(), &eye)?;
    let zero = DMatrix::<Complex64>::zeros(gd.d_c, gd.d_c);
    let d_d = gd.d_d;
    for j in 0..gd.n_j {
        for k in 0..n_t {
            let rid = r_id(j, k);
            problem.add_matrix_eq(
                &format!("marg-{j}-{k}"),
                &[rid, k],
                move |b, beta| {
                    if b == rid {
                        kron_id_left(d_d, beta)
                    } else {
                        -beta.clone()
                    }
                },
                &zero,
            )?;
        }
    }
    problem.add_trace_row(gd.d_c as f64 * (1.0 + gd.n_j as f64))?;
    let mut objective = Vec::new();
    for j in 0..gd.n_j {
        for (k, t) in tups.iter().enumerate() {
            objective.push((r_id(j, k), gd.zt[j][t[j]].clone()));
        }
    }
    let lin = maximize_linear(&problem, &objective, (0.0, gd.hi0), BIS_TOL, &cfg.solver)?;
    Ok((lin, tups))
}

/// Dense ids for the `ex` program: designated blocks first, then recovery
/// blocks grouped by (other program, designated guess, recovered guess).
struct ExIds {
    n_y0: usize,
    others: Vec<usize>,
    t_base: Vec<Vec<usize>>,
}

impl ExIds {
    fn new(gd: &GameData, j0: usize) -> Self {
        let n_y0 = gd.n_y[j0];
        let others: Vec<usize> = (0..gd.n_j).filter(|&j| j != j0).collect();
        let mut t_base = Vec::with_capacity(others.len());
        let mut next = n_y0;
        for &j in &others {
            let mut per_y = Vec::with_capacity(n_y0);
            for _ in 0..n_y0 {
                per_y.push(next);
                next += gd.n_y[j];
            }
            t_base.push(per_y);
        }
        ExIds {
            n_y0,
            others,
            t_base,
        }
    }

    fn t_id(&self, slot: usize, y: usize, yp: usize) -> usize {
        self.t_base[slot][y] + yp
    }
}

fn ex_sdp(gd: &GameData, j0: usize, cfg: &RunConfig) -> Result<(LinMaxResult, ExIds)> {
    let ids = ExIds::new(gd, j0);
    let dim = gd.d_d * gd.d_c;
    let mut blocks: Vec<BlockSpec> = (0..ids.n_y0)
        .map(|y| BlockSpec {
            name: format!("P{y}"),
            dim,
        })
        .collect();
    for (slot, &j) in ids.others.iter().enumerate() {
        for y in 0..ids.n_y0 {
            for yp in 0..gd.n_y[j] {
                debug_assert_eq!(ids.t_id(slot, y, yp), blocks.len());
                blocks.push(BlockSpec {
                    name: format!("T{j}.{y}.{yp}"),
                    dim,
                });
            }
        }
    }
    let mut problem = AffinePsdProblem::new(blocks);
    let p_ids: Vec<usize> = (0..ids.n_y0).collect();
    let eye = DMatrix::<Complex64>::identity(gd.d_c, gd.d_c);
    let d_d = gd.d_d;
    problem.add_matrix_eq("mother-tp", &p_ids, |_, beta| kron_id_left(d_d, beta), &eye)?;
    let zero = DMatrix::<Complex64>::zeros(gd.d_c, gd.d_c);
    for (slot, &j) in ids.others.iter().enumerate() {
        for y in 0..ids.n_y0 {
            let mut row_ids: Vec<usize> =
                (0..gd.n_y[j]).map(|yp| ids.t_id(slot, y, yp)).collect();
            row_ids.push(y);
            let p_block = y;
            problem.add_matrix_eq(
                &format!("recover-{j}-{y}"),
                &row_ids,
                move |b, beta| {
                    if b == p_block {
                        -kron_id_left(d_d, beta)
                    } else {
                        kron_id_left(d_d, beta)
                    }
                },
                &zero,
            )?;
        }
    }
    problem.add_trace_row(gd.n_j as f64 * gd.d_c as f64)?;
    let mut objective: Vec<(usize, DMatrix<Complex64>)> = (0..ids.n_y0)
        .map(|y| (y, gd.zt[j0][y].clone()))
        .collect();
    for (slot, &j) in ids.others.iter().enumerate() {
        for y in 0..ids.n_y0 {
            for yp in 0..gd.n_y[j] {
                objective.push((ids.t_id(slot, y, yp), gd.zt[j][yp].clone()));
            }
        }
    }
    let lin = maximize_linear(&problem, &objective, (0.0, gd.hi0), BIS_TOL, &cfg.solver)?;
    Ok((lin, ids))
}

pub(crate) fn decorate(labels: &[SystemLabel]) -> Vec<SystemLabel> {
    labels
        .iter()
        .map(|s| SystemLabel::new(format!("{}@in", s.name), s.dim))
        .collect()
}

/// Pre-processing instrument: feed the resource the maximally mixed state
/// and map the game input into memory with the given branch Chois.
pub(crate) fn build_pre(
    game_in: &[SystemLabel],
    shape_in: &[SystemLabel],
    mem: &[SystemLabel],
    mats: &[DMatrix<Complex64>],
) -> Result<Instrument> {
    let d_a: usize = shape_in.iter().map(|s| s.dim).product();
    let mut mixed = HermitianBlock::identity(shape_in.to_vec());
    mixed.mat *= Complex64::new(1.0 / d_a as f64, 0.0);
    let prep = CpMap::prepare(vec![], &mixed)?;
    let mut sys: Vec<SystemLabel> = mem.to_vec();
    sys.extend(decorate(game_in));
    let mut maps = Vec::with_capacity(mats.len());
    for m in mats {
        let mem_map = CpMap::new(
            game_in.to_vec(),
            mem.to_vec(),
            HermitianBlock::new(sys.clone(), m.clone())?,
        )?;
        maps.push(prep.tensor(&mem_map)?);
    }
    Instrument::new((0..mats.len()).map(|w| format!("w{w}")).collect(), maps)
}

/// Repair instrument: discard the resource output and map memory to the
/// game output with the given branch Chois.
pub(crate) fn build_post(
    game_out: &[SystemLabel],
    shape_out: &[SystemLabel],
    mem: &[SystemLabel],
    mats: &[DMatrix<Complex64>],
) -> Result<Instrument> {
    let disc = CpMap::discard(shape_out.to_vec())?;
    let mut sys: Vec<SystemLabel> = game_out.to_vec();
    sys.extend(decorate(mem));
    let mut maps = Vec::with_capacity(mats.len());
    for m in mats {
        let mem_map = CpMap::new(
            mem.to_vec(),
            game_out.to_vec(),
            HermitianBlock::new(sys.clone(), m.clone())?,
        )?;
        maps.push(disc.tensor(&mem_map)?);
    }
    Instrument::new((0..mats.len()).map(|z| format!("z{z}")).collect(), maps)
}

/// Square-root factors of an instrument-valued block family: branches are
/// sandwiched by the pseudo-inverse root of the family's joint input
/// marginal, with the kernel completed uniformly so the result is an exact
/// instrument.
fn factor_instrument_raw(
    branches: &[DMatrix<Complex64>],
    d_out: usize,
    d_in: usize,
) -> Vec<DMatrix<Complex64>> {
    let mut marg = DMatrix::<Complex64>::zeros(d_in, d_in);
    for b in branches {
        marg += tr_out(b, d_out, d_in);
    }
    let se = hermitize_raw(&marg).symmetric_eigen();
    let top = se.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b));
    let cut = 1e-12 * top.max(1.0);
    let mut sinv = DMatrix::<Complex64>::zeros(d_in, d_in);
    let mut pker = DMatrix::<Complex64>::zeros(d_in, d_in);
    for k in 0..se.eigenvalues.len() {
        let v = se.eigenvectors.column(k);
        if se.eigenvalues[k] > cut {
            sinv += (v * v.adjoint()) * Complex64::new(1.0 / se.eigenvalues[k].sqrt(), 0.0);
        } else {
            pker += v * v.adjoint();
        }
    }
    let sand = kron_id_left(d_out, &sinv);
    let fill = kron_id_left(d_out, &pker)
        * Complex64::new(1.0 / (branches.len() * d_out) as f64, 0.0);
    let mut out: Vec<DMatrix<Complex64>> = branches
        .iter()
        .map(|b| &sand * b * sand.adjoint() + &fill)
        .collect();
    polish_family(out.as_mut_slice(), d_out, d_in);
    out
}

/// Canonical achieving protocol for the classical threshold: the mother
/// instrument is the achiever itself, kept in memory and routed to the
/// output, with deterministic tuple guesses.
fn c_protocol(
    game: &GuessingGame,
    shape: &ResourceShape,
    tups: &[Vec<usize>],
    achiever: &[HermitianBlock],
) -> Result<FreeProtocol> {
    let gd_in = game.inputs().to_vec();
    let gd_out = game.outputs().to_vec();
    let taken = label_names(&gd_in, &gd_out, shape);
    let dims: Vec<usize> = gd_out.iter().map(|s| s.dim).collect();
    let mem = fresh_labels(&taken, "mem", &dims);

    let mut mats: Vec<DMatrix<Complex64>> =
        achiever.iter().map(|b| b.mat.clone()).collect();
    let d_d: usize = dims.iter().product();
    let d_c: usize = gd_in.iter().map(|s| s.dim).product();
    polish_family(mats.as_mut_slice(), d_d, d_c);
    let pre = build_pre(&gd_in, &shape.inputs, &mem, &mats)?;

    let route = relabel_route(&mem, &gd_out)?;
    let post = vec![vec![build_post(&gd_out, &shape.outputs, &mem, &[route])?]; tups.len()];

    let n_j = game.n_programs();
    let n_y = game.n_outcomes();
    let n_w = tups.len();
    let tups_owned = tups.to_vec();
    let announce = StochasticMatrix::deterministic(
        n_y,
        vec![n_j, n_w, shape.n_programs, shape.n_outcomes, 1],
        move |c| tups_owned[c[1]][c[0]],
    )?;
    Ok(FreeProtocol {
        framework: Framework::C,
        pre,
        memory: mem,
        choose: StochasticMatrix::deterministic(
            shape.n_programs,
            vec![n_j, n_w],
            |_| 0,
        )?,
        n_ii_memory: 1,
        announce,
        n_backward: 1,
        post,
        guess: vec![GuessSource::PlayerII; n_j],
    })
}

/// Identity Choi from memory labels to the game output labels.
pub(crate) fn relabel_route(mem: &[SystemLabel], out: &[SystemLabel]) -> Result<DMatrix<Complex64>> {
    let d: usize = mem.iter().map(|s| s.dim).product();
    let d2: usize = out.iter().map(|s| s.dim).product();
    if d != d2 {
        return Err(Error::shape("memory does not match the game output dimension"));
    }
    let mut omega = DMatrix::<Complex64>::zeros(d * d, d * d);
    for a in 0..d {
        for b in 0..d {
            omega[(a * d + a, b * d + b)] = Complex64::new(1.0, 0.0);
        }
    }
    Ok(omega)
}

pub(crate) fn label_names(
    gd_in: &[SystemLabel],
    gd_out: &[SystemLabel],
    shape: &ResourceShape,
) -> std::collections::HashSet<String> {
    gd_in
        .iter()
        .chain(gd_out)
        .chain(&shape.inputs)
        .chain(&shape.outputs)
        .map(|s| s.name.clone())
        .collect()
}

/// Canonical achieving protocol for the q threshold: square-root
/// instrument of the tuple POVM into memory, tuple guesses announced, and
/// per-program factored repair channels selected by the backward message.
fn q_protocol(
    game: &GuessingGame,
    shape: &ResourceShape,
    tups: &[Vec<usize>],
    achiever: &[HermitianBlock],
) -> Result<FreeProtocol> {
    let gd_in = game.inputs().to_vec();
    let gd_out = game.outputs().to_vec();
    let taken = label_names(&gd_in, &gd_out, shape);
    let dims: Vec<usize> = gd_in.iter().map(|s| s.dim).collect();
    let mem = fresh_labels(&taken, "mem", &dims);
    let n_t = tups.len();
    let n_j = game.n_programs();
    let d_c: usize = dims.iter().product();
    let d_d: usize = gd_out.iter().map(|s| s.dim).product();

    let mut effects: Vec<DMatrix<Complex64>> =
        achiever[..n_t].iter().map(|b| b.mat.clone()).collect();
    polish_family(effects.as_mut_slice(), 1, d_c);
    let mothers: Vec<DMatrix<Complex64>> = effects
        .iter()
        .map(|e| lueders_choi_raw(&e.transpose()))
        .collect();
    let pre = build_pre(&gd_in, &shape.inputs, &mem, &mothers)?;

    let mut post = Vec::with_capacity(n_t);
    for k in 0..n_t {
        let mut row = Vec::with_capacity(n_j);
        for j in 0..n_j {
            let r = &achiever[n_t + j * n_t + k].mat;
            let mut ch = factor_channel_raw(r, d_d, d_c);
            polish_family(std::slice::from_mut(&mut ch), d_d, d_c);
            row.push(build_post(&gd_out, &shape.outputs, &mem, &[ch])?);
        }
        post.push(row);
    }

    let n_y = game.n_outcomes();
    let tups_owned = tups.to_vec();
    let announce = StochasticMatrix::deterministic(
        n_y * n_j,
        vec![n_j, n_t, shape.n_programs, shape.n_outcomes, 1],
        move |c| tups_owned[c[1]][c[0]] * n_j + c[0],
    )?;
    Ok(FreeProtocol {
        framework: Framework::Q,
        pre,
        memory: mem,
        choose: StochasticMatrix::deterministic(shape.n_programs, vec![n_j, n_t], |_| 0)?,
        n_ii_memory: 1,
        announce,
        n_backward: n_j,
        post,
        guess: vec![GuessSource::PlayerII; n_j],
    })
}

/// Canonical achieving protocol for the `ex` threshold at a designated
/// program: square-root instrument of the designated effects, a repair
/// channel for the designated program, and factored recovery instruments
/// whose outcomes are announced for the others.
fn ex_protocol(
    game: &GuessingGame,
    shape: &ResourceShape,
    j0: usize,
    ids: &ExIds,
    achiever: &[HermitianBlock],
) -> Result<FreeProtocol> {
    let gd_in = game.inputs().to_vec();
    let gd_out = game.outputs().to_vec();
    let taken = label_names(&gd_in, &gd_out, shape);
    let dims: Vec<usize> = gd_in.iter().map(|s| s.dim).collect();
    let mem = fresh_labels(&taken, "mem", &dims);
    let d_c: usize = dims.iter().product();
    let d_d: usize = gd_out.iter().map(|s| s.dim).product();
    let n_j = game.n_programs();
    let n_y = game.n_outcomes();
    let n_y0 = ids.n_y0;

    let p_mats: Vec<DMatrix<Complex64>> =
        achiever[..n_y0].iter().map(|b| b.mat.clone()).collect();
    let mut margs: Vec<DMatrix<Complex64>> =
        p_mats.iter().map(|p| tr_out(p, d_d, d_c)).collect();
    polish_family(margs.as_mut_slice(), 1, d_c);
    let mothers: Vec<DMatrix<Complex64>> = margs
        .iter()
        .map(|m| lueders_choi_raw(&m.transpose()))
        .collect();
    let pre = build_pre(&gd_in, &shape.inputs, &mem, &mothers)?;

    let zero_mat = DMatrix::<Complex64>::zeros(d_d * d_c, d_d * d_c);
    let mut post = Vec::with_capacity(n_y0);
    for y in 0..n_y0 {
        let mut row = Vec::with_capacity(n_j);
        for j in 0..n_j {
            let branch_mats: Vec<DMatrix<Complex64>> = if j == j0 {
                let mut ch = factor_channel_raw(&p_mats[y], d_d, d_c);
                polish_family(std::slice::from_mut(&mut ch), d_d, d_c);
                let mut v = vec![ch];
                v.resize(n_y, zero_mat.clone());
                v
            } else {
                let slot = ids.others.iter().position(|&o| o == j).unwrap();
                let raw: Vec<DMatrix<Complex64>> = (0..game.referee.instruments[j]
                    .n_outcomes())
                    .map(|yp| achiever[ids.t_id(slot, y, yp)].mat.clone())
                    .collect();
                let mut v = factor_instrument_raw(&raw, d_d, d_c);
                v.resize(n_y, zero_mat.clone());
                v
            };
            row.push(build_post(&gd_out, &shape.outputs, &mem, &branch_mats)?);
        }
        post.push(row);
    }

    let announce = StochasticMatrix::deterministic(
        n_y * n_j,
        vec![n_j, n_y0, shape.n_programs, shape.n_outcomes, 1],
        move |c| {
            if c[0] == j0 {
                c[1] * n_j + c[0]
            } else {
                c[0]
            }
        },
    )?;
    let guess = (0..n_j)
        .map(|j| {
            if j == j0 {
                GuessSource::PlayerII
            } else {
                GuessSource::PlayerI
            }
        })
        .collect();
    Ok(FreeProtocol {
        framework: Framework::Ex,
        pre,
        memory: mem,
        choose: StochasticMatrix::deterministic(shape.n_programs, vec![n_j, n_y0], |_| 0)?,
        n_ii_memory: 1,
        announce,
        n_backward: n_j,
        post,
        guess,
    })
}

/// Threshold protocol and enclosure for a game, framework and resource
/// shape.
pub(crate) fn threshold_protocol(
    game: &GuessingGame,
    framework: Framework,
    cfg: &RunConfig,
    shape: &ResourceShape,
) -> Result<(FreeProtocol, LinMaxResult, Vec<String>)> {
    let gd = game_data(game);
    match framework {
        Framework::C => {
            let (lin, tups) = c_sdp(&gd, cfg)?;
            let proto = c_protocol(game, shape, &tups, &lin.achiever)?;
            Ok((proto, lin, Vec::new()))
        }
        Framework::Q => {
            let (lin, tups) = q_sdp(&gd, cfg)?;
            let proto = q_protocol(game, shape, &tups, &lin.achiever)?;
            Ok((proto, lin, Vec::new()))
        }
        Framework::Ex => {
            let mut best: Option<(usize, LinMaxResult, ExIds)> = None;
            let mut notes = Vec::new();
            for j0 in 0..gd.n_j {
                let (lin, ids) = ex_sdp(&gd, j0, cfg)?;
                notes.push(format!(
                    "designated {}: enclosure [{:.6}, {:.6}]",
                    j0, lin.lo, lin.hi
                ));
                if best.as_ref().map_or(true, |(_, b, _)| lin.lo > b.lo) {
                    best = Some((j0, lin, ids));
                }
            }
            let (j0, lin, ids) =
                best.ok_or_else(|| Error::Undecided("no designated program".into()))?;
            notes.push(format!("best designated program: {j0}"));
            let proto = ex_protocol(game, shape, j0, &ids, &lin.achiever)?;
            Ok((proto, lin, notes))
        }
    }
}

/// Threshold for a fixed designated program in the `ex` framework.
pub(crate) fn threshold_protocol_ex(
    game: &GuessingGame,
    designated: usize,
    cfg: &RunConfig,
    shape: &ResourceShape,
) -> Result<(FreeProtocol, LinMaxResult)> {
    let gd = game_data(game);
    if designated >= gd.n_j {
        return Err(Error::invalid(
            "designated program",
            format!("index {designated} out of {} programs", gd.n_j),
        ));
    }
    let (lin, ids) = ex_sdp(&gd, designated, cfg)?;
    let proto = ex_protocol(game, shape, designated, &ids, &lin.achiever)?;
    Ok((proto, lin))
}

fn report_from(
    game: &GuessingGame,
    framework: Framework,
    proto: FreeProtocol,
    lin: &LinMaxResult,
    mut notes: Vec<String>,
) -> Result<UtilityReport> {
    let resource = fixtures::trivial_resource()?;
    proto.validate(1e-7)?;
    let played = apply_protocol(&proto, &resource)?;
    let value = game.value_of(&played)?;
    notes.push(format!(
        "sdp enclosure [{:.9}, {:.9}] after {} bisection steps",
        lin.lo, lin.hi, lin.bisection_steps
    ));
    if (value - lin.lo).abs() > 1e-4 {
        notes.push(format!(
            "replayed value differs from sdp lower bound by {:.2e}",
            (value - lin.lo).abs()
        ));
    }
    Ok(UtilityReport {
        framework,
        value,
        upper: Some(lin.hi),
        protocol: proto,
        restart_values: Vec::new(),
        sweeps_used: Vec::new(),
        notes,
    })
}

/// Best utility achievable with free resources of the given framework:
/// an enclosure `[value, upper]` plus the canonical protocol achieving
/// `value` on the trivial resource.
pub fn free_threshold(
    game: &GuessingGame,
    framework: Framework,
    cfg: &RunConfig,
) -> Result<UtilityReport> {
    let resource = fixtures::trivial_resource()?;
    let shape = ResourceShape::of(&resource)?;
    let (proto, lin, notes) = threshold_protocol(game, framework, cfg, &shape)?;
    report_from(game, framework, proto, &lin, notes)
}

/// The `ex` threshold with the designated program fixed instead of
/// maximized.
pub fn free_threshold_ex(
    game: &GuessingGame,
    designated: usize,
    cfg: &RunConfig,
) -> Result<UtilityReport> {
    let resource = fixtures::trivial_resource()?;
    let shape = ResourceShape::of(&resource)?;
    let (proto, lin) = threshold_protocol_ex(game, designated, cfg, &shape)?;
    let notes = vec![format!("designated program fixed to {designated}")];
    report_from(game, Framework::Ex, proto, &lin, notes)
}
