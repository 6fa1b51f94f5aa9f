//! See-saw optimization of a game utility over free protocols of a fixed
//! framework.
//!
//! A protocol is parametrized by its pre-processing blocks `P_w` (Choi on
//! `A (x) M (x) C@in`), repair blocks `Q_{w,b,z}` (Choi on
//! `D (x) B@in (x) M@in`) and the two classical tables. The utility is
//! linear in each part separately, so the search alternates exact argmax
//! updates of the tables with projected-gradient ascent on the Choi
//! families, restarted from several structured and random initial points.
//! The reported value is obtained by replaying the extracted protocol
//! through `apply_protocol` and scoring it with `GuessingGame::value_of`,
//! so it is achievable by construction.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

use crate::compat::seesaw::{
    dykstra_family, frob2, hermitize_raw, instrument_affine, psd_part,
};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::games::game::GuessingGame;
use crate::games::protocol::{
    apply_protocol, fresh_labels, FreeProtocol, GuessSource,
};
use crate::games::Framework;
use crate::qobjects::fixtures::ginibre;
use crate::qobjects::{Instrument, ProgrammableInstrument, StochasticMatrix};
use crate::tensor::{HermitianBlock, SystemLabel};

/// Optional overrides for the protocol shape explored by the search.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SearchDims {
    /// Dimension of player I's quantum memory (default: the game input
    /// dimension).
    pub memory_dim: Option<usize>,
    /// Number of forward messages (default: resource outcomes times
    /// resource programs).
    pub n_forward: Option<usize>,
    /// Number of backward messages (default: resource outcomes times
    /// forward messages; forced to one in framework `c`).
    pub n_backward: Option<usize>,
    /// Player II working-memory size (default one; only composition needs
    /// more).
    pub n_ii_memory: Option<usize>,
}

/// Result of a utility optimization or threshold computation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UtilityReport {
    pub framework: Framework,
    /// Achieved utility: the extracted protocol replayed against the game.
    pub value: f64,
    /// Certified upper bound on the free value when the report comes from a
    /// threshold program; absent for pure see-saw searches.
    pub upper: Option<f64>,
    pub protocol: FreeProtocol,
    /// Best internal objective per restart.
    pub restart_values: Vec<f64>,
    /// Sweeps consumed per restart.
    pub sweeps_used: Vec<usize>,
    pub notes: Vec<String>,
}

struct Shape {
    d_c: usize,
    d_d: usize,
    d_a: usize,
    d_b: usize,
    d_m: usize,
    n_j: usize,
    n_y: usize,
    n_i: usize,
    n_x: usize,
    n_w: usize,
    n_b: usize,
    n_z: usize,
    n_r: usize,
    /// All guesses announced by player I (`ex` search) instead of player II.
    all_pi: bool,
    /// Overall scale: one over programs times in and out dimensions.
    lam: f64,
}

struct State {
    /// Pre-processing Chois, one per forward message; rows `(a m) c`.
    p: Vec<DMatrix<Complex64>>,
    /// Repair Chois per forward/backward/repair outcome; rows `d (b m)`.
    q: Vec<Vec<Vec<DMatrix<Complex64>>>>,
    /// `choose[(j n_w + w)(n_i n_r) + i n_r + r]`.
    choose: Vec<f64>,
    /// `announce[(((j n_w + w) n_i + i) n_x + x) n_r + r][y n_b + b]` flat.
    announce: Vec<f64>,
}

fn tr_t_prod(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| x.re * y.re - x.im * y.im)
        .sum()
}

/// Choi of `(resource (x) id_M) after pre`: `S[(bmc),(b'm'c')] =
/// sum_{a,a'} R[(ba),(b'a')] P[(amc),(a'm'c')]`.
fn link1(r: &DMatrix<Complex64>, p: &DMatrix<Complex64>, sh: &Shape) -> DMatrix<Complex64> {
    let (d_a, d_b, d_m, d_c) = (sh.d_a, sh.d_b, sh.d_m, sh.d_c);
    let dim = d_b * d_m * d_c;
    let mut s = DMatrix::<Complex64>::zeros(dim, dim);
    for b in 0..d_b {
        for m in 0..d_m {
            for cc in 0..d_c {
                let row = (b * d_m + m) * d_c + cc;
                for b2 in 0..d_b {
                    for m2 in 0..d_m {
                        for c2 in 0..d_c {
                            let col = (b2 * d_m + m2) * d_c + c2;
                            let mut acc = Complex64::new(0.0, 0.0);
                            for a in 0..d_a {
                                for a2 in 0..d_a {
                                    acc += r[(b * d_a + a, b2 * d_a + a2)]
                                        * p[((a * d_m + m) * d_c + cc, (a2 * d_m + m2) * d_c + c2)];
                                }
                            }
                            s[(row, col)] = acc;
                        }
                    }
                }
            }
        }
    }
    s
}

/// Referee leg contracted over the game input: `W[(d b m),(d' b' m')] =
/// sum_{c,c'} Z[(dc),(d'c')] S[(bmc),(b'm'c')]`. The objective of a branch
/// is then the entrywise product of `W` with its repair Choi.
fn contract_c(z: &DMatrix<Complex64>, s: &DMatrix<Complex64>, sh: &Shape) -> DMatrix<Complex64> {
    let (d_d, d_b, d_m, d_c) = (sh.d_d, sh.d_b, sh.d_m, sh.d_c);
    let dim = d_d * d_b * d_m;
    let mut w = DMatrix::<Complex64>::zeros(dim, dim);
    for d in 0..d_d {
        for b in 0..d_b {
            for m in 0..d_m {
                let row = d * (d_b * d_m) + b * d_m + m;
                for d2 in 0..d_d {
                    for b2 in 0..d_b {
                        for m2 in 0..d_m {
                            let col = d2 * (d_b * d_m) + b2 * d_m + m2;
                            let mut acc = Complex64::new(0.0, 0.0);
                            for cc in 0..d_c {
                                for c2 in 0..d_c {
                                    acc += z[(d * d_c + cc, d2 * d_c + c2)]
                                        * s[((b * d_m + m) * d_c + cc, (b2 * d_m + m2) * d_c + c2)];
                                }
                            }
                            w[(row, col)] = acc;
                        }
                    }
                }
            }
        }
    }
    w
}

/// Referee leg contracted against a repair block: `V[(bmc),(b'm'c')] =
/// sum_{d,d'} Z[(dc),(d'c')] Q[(d(bm)),(d'(b'm'))]`.
fn contract_d(z: &DMatrix<Complex64>, q: &DMatrix<Complex64>, sh: &Shape) -> DMatrix<Complex64> {
    let (d_d, d_b, d_m, d_c) = (sh.d_d, sh.d_b, sh.d_m, sh.d_c);
    let dim = d_b * d_m * d_c;
    let mut v = DMatrix::<Complex64>::zeros(dim, dim);
    for b in 0..d_b {
        for m in 0..d_m {
            for cc in 0..d_c {
                let row = (b * d_m + m) * d_c + cc;
                for b2 in 0..d_b {
                    for m2 in 0..d_m {
                        for c2 in 0..d_c {
                            let col = (b2 * d_m + m2) * d_c + c2;
                            let mut acc = Complex64::new(0.0, 0.0);
                            for d in 0..d_d {
                                for d2 in 0..d_d {
                                    acc += z[(d * d_c + cc, d2 * d_c + c2)]
                                        * q[(
                                            d * (d_b * d_m) + b * d_m + m,
                                            d2 * (d_b * d_m) + b2 * d_m + m2,
                                        )];
                                }
                            }
                            v[(row, col)] = acc;
                        }
                    }
                }
            }
        }
    }
    v
}

/// Resource leg contracted into the pre slot: `U[(amc),(a'm'c')] =
/// sum_{b,b'} R[(ba),(b'a')] V[(bmc),(b'm'c')]`.
fn contract_b(r: &DMatrix<Complex64>, v: &DMatrix<Complex64>, sh: &Shape) -> DMatrix<Complex64> {
    let (d_a, d_b, d_m, d_c) = (sh.d_a, sh.d_b, sh.d_m, sh.d_c);
    let dim = d_a * d_m * d_c;
    let mut u = DMatrix::<Complex64>::zeros(dim, dim);
    for a in 0..d_a {
        for m in 0..d_m {
            for cc in 0..d_c {
                let row = (a * d_m + m) * d_c + cc;
                for a2 in 0..d_a {
                    for m2 in 0..d_m {
                        for c2 in 0..d_c {
                            let col = (a2 * d_m + m2) * d_c + c2;
                            let mut acc = Complex64::new(0.0, 0.0);
                            for b in 0..d_b {
                                for b2 in 0..d_b {
                                    acc += r[(b * d_a + a, b2 * d_a + a2)]
                                        * v[((b * d_m + m) * d_c + cc, (b2 * d_m + m2) * d_c + c2)];
                                }
                            }
                            u[(row, col)] = acc;
                        }
                    }
                }
            }
        }
    }
    u
}

impl State {
    fn choose_at(&self, sh: &Shape, j: usize, w: usize, i: usize, r: usize) -> f64 {
        self.choose[(j * sh.n_w + w) * sh.n_i * sh.n_r + i * sh.n_r + r]
    }

    fn ann_row(&self, sh: &Shape, j: usize, w: usize, i: usize, x: usize, r: usize) -> &[f64] {
        let width = sh.n_y * sh.n_b;
        let base = ((((j * sh.n_w + w) * sh.n_i + i) * sh.n_x + x) * sh.n_r + r) * width;
        &self.announce[base..base + width]
    }
}

/// Scaled referee contractions `cc[w][i][x][j][y] = lam *
/// contract_c(Z_jy, S_wix)`; `None` where the resource or referee lacks the
/// outcome.
type CcTensor = Vec<Vec<Vec<Vec<Vec<Option<DMatrix<Complex64>>>>>>>;

fn compute_cc(
    state: &State,
    r_mats: &[Vec<Option<DMatrix<Complex64>>>],
    z_mats: &[Vec<Option<DMatrix<Complex64>>>],
    sh: &Shape,
) -> CcTensor {
    let mut cc = Vec::with_capacity(sh.n_w);
    for w in 0..sh.n_w {
        let mut per_w = Vec::with_capacity(sh.n_i);
        for r_row in r_mats.iter() {
            let mut per_i = Vec::with_capacity(sh.n_x);
            for x in 0..sh.n_x {
                let mut per_x = Vec::with_capacity(sh.n_j);
                match &r_row[x] {
                    None => {
                        for _ in 0..sh.n_j {
                            per_x.push(vec![None; sh.n_y]);
                        }
                    }
                    Some(r) => {
                        let s = link1(r, &state.p[w], sh);
                        for z_row in z_mats.iter() {
                            let mut per_j = Vec::with_capacity(sh.n_y);
                            for zy in z_row.iter() {
                                per_j.push(
                                    zy.as_ref()
                                        .map(|z| contract_c(z, &s, sh) * Complex64::new(sh.lam, 0.0)),
                                );
                            }
                            per_x.push(per_j);
                        }
                    }
                }
                per_i.push(per_x);
            }
            per_w.push(per_i);
        }
        cc.push(per_w);
    }
    cc
}

/// Branch scores `bs[w][i][x][b][z][j][y]`, already carrying the overall
/// scale.
#[allow(clippy::type_complexity)]
fn compute_bs(state: &State, cc: &CcTensor, sh: &Shape) -> Vec<f64> {
    let total = sh.n_w * sh.n_i * sh.n_x * sh.n_b * sh.n_z * sh.n_j * sh.n_y;
    let mut bs = vec![0.0f64; total];
    let idx = |w: usize, i: usize, x: usize, b: usize, z: usize, j: usize, y: usize| {
        (((((w * sh.n_i + i) * sh.n_x + x) * sh.n_b + b) * sh.n_z + z) * sh.n_j + j) * sh.n_y + y
    };
    for w in 0..sh.n_w {
        for i in 0..sh.n_i {
            for x in 0..sh.n_x {
                for j in 0..sh.n_j {
                    for y in 0..sh.n_y {
                        let Some(m) = &cc[w][i][x][j][y] else { continue };
                        for b in 0..sh.n_b {
                            for z in 0..sh.n_z {
                                bs[idx(w, i, x, b, z, j, y)] = tr_t_prod(m, &state.q[w][b][z]);
                            }
                        }
                    }
                }
            }
        }
    }
    bs
}

/// Value of one announce option `(y, b)` for condition `(j, w, i, x)`.
fn option_value(bs: &[f64], sh: &Shape, w: usize, i: usize, x: usize, j: usize, y: usize, b: usize) -> f64 {
    let idx = |z: usize, yy: usize| {
        (((((w * sh.n_i + i) * sh.n_x + x) * sh.n_b + b) * sh.n_z + z) * sh.n_j + j) * sh.n_y + yy
    };
    if sh.all_pi {
        (0..sh.n_z.min(sh.n_y)).map(|z| bs[idx(z, z)]).sum()
    } else {
        bs[idx(0, y)]
    }
}

fn update_announce(state: &mut State, bs: &[f64], sh: &Shape) {
    let width = sh.n_y * sh.n_b;
    for j in 0..sh.n_j {
        for w in 0..sh.n_w {
            for i in 0..sh.n_i {
                for x in 0..sh.n_x {
                    for r in 0..sh.n_r {
                        let base =
                            ((((j * sh.n_w + w) * sh.n_i + i) * sh.n_x + x) * sh.n_r + r) * width;
                        let mut best = (0usize, f64::NEG_INFINITY);
                        if sh.all_pi {
                            for b in 0..sh.n_b {
                                let v = option_value(bs, sh, w, i, x, j, 0, b);
                                if v > best.1 {
                                    best = (b, v);
                                }
                            }
                        } else {
                            for y in 0..sh.n_y {
                                for b in 0..sh.n_b {
                                    let v = option_value(bs, sh, w, i, x, j, y, b);
                                    if v > best.1 {
                                        best = (y * sh.n_b + b, v);
                                    }
                                }
                            }
                        }
                        for k in 0..width {
                            state.announce[base + k] = 0.0;
                        }
                        state.announce[base + best.0] = 1.0;
                    }
                }
            }
        }
    }
}

/// Value of routing `(j, w)` to resource program `i` with working memory
/// `r`, under the current announce table.
fn program_value(state: &State, bs: &[f64], sh: &Shape, j: usize, w: usize, i: usize, r: usize) -> f64 {
    let mut total = 0.0;
    for x in 0..sh.n_x {
        let row = state.ann_row(sh, j, w, i, x, r);
        for y in 0..sh.n_y {
            for b in 0..sh.n_b {
                let p = row[y * sh.n_b + b];
                if p > 0.0 {
                    total += p * option_value(bs, sh, w, i, x, j, y, b);
                }
            }
        }
    }
    total
}

fn update_choose(state: &mut State, bs: &[f64], sh: &Shape) {
    for j in 0..sh.n_j {
        for w in 0..sh.n_w {
            let mut best = (0usize, f64::NEG_INFINITY);
            for i in 0..sh.n_i {
                for r in 0..sh.n_r {
                    let v = program_value(state, bs, sh, j, w, i, r);
                    if v > best.1 {
                        best = (i * sh.n_r + r, v);
                    }
                }
            }
            let base = (j * sh.n_w + w) * sh.n_i * sh.n_r;
            for k in 0..sh.n_i * sh.n_r {
                state.choose[base + k] = 0.0;
            }
            state.choose[base + best.0] = 1.0;
        }
    }
}

/// Weight multiplying the branch Choi of `(w, b, z)` in the score of
/// referee block `(j, y_eff)`, summed over announce randomness.
fn branch_weight(
    state: &State,
    sh: &Shape,
    j: usize,
    w: usize,
    i: usize,
    x: usize,
    b: usize,
    z: usize,
    y: usize,
) -> f64 {
    let mut total = 0.0;
    for r in 0..sh.n_r {
        let pc = state.choose_at(sh, j, w, i, r);
        if pc == 0.0 {
            continue;
        }
        let row = state.ann_row(sh, j, w, i, x, r);
        if sh.all_pi {
            if y != z {
                continue;
            }
            let pb: f64 = (0..sh.n_y).map(|y2| row[y2 * sh.n_b + b]).sum();
            total += pc * pb;
        } else if z == 0 {
            total += pc * row[y * sh.n_b + b];
        }
    }
    total
}

/// Projected ascent on the repair blocks for fixed pre blocks and tables.
/// The objective is linear here, so the gradient is constant; the phase is
/// reverted unless it improves.
fn q_phase(state: &mut State, cc: &CcTensor, sh: &Shape, pg_iters: usize) {
    let dim = sh.d_d * sh.d_b * sh.d_m;
    let mut grad = vec![vec![vec![DMatrix::<Complex64>::zeros(dim, dim); sh.n_z]; sh.n_b]; sh.n_w];
    for w in 0..sh.n_w {
        for b in 0..sh.n_b {
            for z in 0..sh.n_z {
                for j in 0..sh.n_j {
                    for i in 0..sh.n_i {
                        for x in 0..sh.n_x {
                            for y in 0..sh.n_y {
                                let Some(m) = &cc[w][i][x][j][y] else { continue };
                                let wt = branch_weight(state, sh, j, w, i, x, b, z, y);
                                if wt != 0.0 {
                                    grad[w][b][z] += m * Complex64::new(wt, 0.0);
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    let lin = |q: &Vec<Vec<Vec<DMatrix<Complex64>>>>| -> f64 {
        let mut v = 0.0;
        for w in 0..sh.n_w {
            for b in 0..sh.n_b {
                for z in 0..sh.n_z {
                    v += tr_t_prod(&grad[w][b][z], &q[w][b][z]);
                }
            }
        }
        v
    };

    let obj0 = lin(&state.q);
    let snapshot = state.q.clone();
    let gn: f64 = grad
        .iter()
        .flatten()
        .flatten()
        .map(frob2)
        .sum::<f64>()
        .sqrt();
    if gn < 1e-14 {
        return;
    }
    let xn: f64 = state.q.iter().flatten().flatten().map(frob2).sum::<f64>().sqrt();
    let s0 = (xn + 1.0) / gn;
    let target = DMatrix::<Complex64>::identity(sh.d_b * sh.d_m, sh.d_b * sh.d_m);
    let affine = instrument_affine(sh.d_d, sh.d_b * sh.d_m, target);

    for t in 0..pg_iters {
        let s = Complex64::new(s0 / (1.0 + t as f64 / 8.0), 0.0);
        for w in 0..sh.n_w {
            for b in 0..sh.n_b {
                for z in 0..sh.n_z {
                    let step = grad[w][b][z].transpose() * s;
                    state.q[w][b][z] += step;
                    state.q[w][b][z] = psd_part(&hermitize_raw(&state.q[w][b][z]));
                }
                affine(state.q[w][b].as_mut_slice());
            }
        }
    }
    for w in 0..sh.n_w {
        for b in 0..sh.n_b {
            dykstra_family(state.q[w][b].as_mut_slice(), &affine, 40);
        }
    }
    if lin(&state.q) <= obj0 {
        state.q = snapshot;
    }
}

/// Projected ascent on the pre blocks for fixed repair blocks and tables.
fn p_phase(
    state: &mut State,
    r_mats: &[Vec<Option<DMatrix<Complex64>>>],
    z_mats: &[Vec<Option<DMatrix<Complex64>>>],
    sh: &Shape,
    pg_iters: usize,
) -> f64 {
    let dim_s = sh.d_b * sh.d_m * sh.d_c;
    let dim_p = sh.d_a * sh.d_m * sh.d_c;
    let mut grad = vec![DMatrix::<Complex64>::zeros(dim_p, dim_p); sh.n_w];
    for w in 0..sh.n_w {
        // mm[i][x]: repair-and-referee leg aggregated with its weights.
        let mut mm = vec![vec![DMatrix::<Complex64>::zeros(dim_s, dim_s); sh.n_x]; sh.n_i];
        for b in 0..sh.n_b {
            for z in 0..sh.n_z {
                for j in 0..sh.n_j {
                    for y in 0..sh.n_y {
                        let Some(zb) = &z_mats[j][y] else { continue };
                        let mut any = false;
                        for i in 0..sh.n_i {
                            for x in 0..sh.n_x {
                                if branch_weight(state, sh, j, w, i, x, b, z, y) != 0.0 {
                                    any = true;
                                }
                            }
                        }
                        if !any {
                            continue;
                        }
                        let dd = contract_d(zb, &state.q[w][b][z], sh) * Complex64::new(sh.lam, 0.0);
                        for i in 0..sh.n_i {
                            for x in 0..sh.n_x {
                                let wt = branch_weight(state, sh, j, w, i, x, b, z, y);
                                if wt != 0.0 {
                                    mm[i][x] += &dd * Complex64::new(wt, 0.0);
                                }
                            }
                        }
                    }
                }
            }
        }
        for (i, row) in r_mats.iter().enumerate() {
            for (x, rb) in row.iter().enumerate() {
                if let Some(r) = rb {
                    grad[w] += contract_b(r, &mm[i][x], sh);
                }
            }
        }
    }

    let lin = |p: &Vec<DMatrix<Complex64>>| -> f64 {
        (0..sh.n_w).map(|w| tr_t_prod(&grad[w], &p[w])).sum()
    };
    let obj0 = lin(&state.p);
    let snapshot = state.p.clone();
    let gn: f64 = grad.iter().map(frob2).sum::<f64>().sqrt();
    if gn < 1e-14 {
        return obj0;
    }
    let xn: f64 = state.p.iter().map(frob2).sum::<f64>().sqrt();
    let s0 = (xn + 1.0) / gn;
    let target = DMatrix::<Complex64>::identity(sh.d_c, sh.d_c);
    let affine = instrument_affine(sh.d_a * sh.d_m, sh.d_c, target);

    for t in 0..pg_iters {
        let s = Complex64::new(s0 / (1.0 + t as f64 / 8.0), 0.0);
        for w in 0..sh.n_w {
            let step = grad[w].transpose() * s;
            state.p[w] += step;
            state.p[w] = psd_part(&hermitize_raw(&state.p[w]));
        }
        affine(state.p.as_mut_slice());
    }
    dykstra_family(state.p.as_mut_slice(), &affine, 40);
    let obj1 = lin(&state.p);
    if obj1 <= obj0 {
        state.p = snapshot;
        return obj0;
    }
    obj1
}

/// Forces a family onto the instrument set exactly: hermitize, apply the
/// closed-form affine correction, then blend toward the depolarizing
/// instrument just enough to absorb any remaining negative eigenvalue.
/// The affine constraint `sum_z Tr_out = identity` survives the blend, so
/// the result is feasible up to machine precision.
pub(crate) fn polish_family(fam: &mut [DMatrix<Complex64>], d_out: usize, d_in: usize) {
    let target = DMatrix::<Complex64>::identity(d_in, d_in);
    let affine = instrument_affine(d_out, d_in, target);
    for m in fam.iter_mut() {
        *m = hermitize_raw(m);
    }
    affine(fam);
    let mut worst: f64 = 0.0;
    for m in fam.iter() {
        let se = m.clone().symmetric_eigen();
        for lam in se.eigenvalues.iter() {
            worst = worst.max(-lam);
        }
    }
    if worst <= 0.0 {
        return;
    }
    let floor = 1.0 / (fam.len() * d_out) as f64;
    let theta = (worst / (worst + floor)).min(1.0);
    let dim = d_out * d_in;
    let depol = DMatrix::<Complex64>::identity(dim, dim)
        * Complex64::new(theta / (fam.len() * d_out) as f64, 0.0);
    for m in fam.iter_mut() {
        *m = &*m * Complex64::new(1.0 - theta, 0.0) + &depol;
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Plan {
    RouteThrough,
    KeepInMemory,
    Random,
}

fn init_state(plan: Plan, sh: &Shape, rng: &mut ChaCha8Rng) -> State {
    let dim_p = sh.d_a * sh.d_m * sh.d_c;
    let dim_q = sh.d_d * sh.d_b * sh.d_m;
    let mut p = vec![DMatrix::<Complex64>::zeros(dim_p, dim_p); sh.n_w];
    let mut q =
        vec![vec![vec![DMatrix::<Complex64>::zeros(dim_q, dim_q); sh.n_z]; sh.n_b]; sh.n_w];
    let one = Complex64::new(1.0, 0.0);
    let spread = Complex64::new(1.0 / sh.n_z as f64, 0.0);
    match plan {
        Plan::RouteThrough => {
            for a in 0..sh.d_a {
                for a2 in 0..sh.d_a {
                    p[0][((a * sh.d_m) * sh.d_c + a, (a2 * sh.d_m) * sh.d_c + a2)] = one;
                }
            }
            for w in 0..sh.n_w {
                for b in 0..sh.n_b {
                    for z in 0..sh.n_z {
                        for bb in 0..sh.d_b {
                            for bb2 in 0..sh.d_b {
                                for m in 0..sh.d_m {
                                    q[w][b][z][(
                                        bb * (sh.d_b * sh.d_m) + bb * sh.d_m + m,
                                        bb2 * (sh.d_b * sh.d_m) + bb2 * sh.d_m + m,
                                    )] = spread;
                                }
                            }
                        }
                    }
                }
            }
        }
        Plan::KeepInMemory => {
            let wa = Complex64::new(1.0 / sh.d_a as f64, 0.0);
            for a in 0..sh.d_a {
                for cc in 0..sh.d_c {
                    for c2 in 0..sh.d_c {
                        p[0][((a * sh.d_m + cc) * sh.d_c + cc, (a * sh.d_m + c2) * sh.d_c + c2)] =
                            wa;
                    }
                }
            }
            for w in 0..sh.n_w {
                for b in 0..sh.n_b {
                    for z in 0..sh.n_z {
                        for d in 0..sh.d_d {
                            for d2 in 0..sh.d_d {
                                for bb in 0..sh.d_b {
                                    q[w][b][z][(
                                        d * (sh.d_b * sh.d_m) + bb * sh.d_m + d,
                                        d2 * (sh.d_b * sh.d_m) + bb * sh.d_m + d2,
                                    )] = spread;
                                }
                            }
                        }
                    }
                }
            }
        }
        Plan::Random => {
            let affine_p = instrument_affine(
                sh.d_a * sh.d_m,
                sh.d_c,
                DMatrix::identity(sh.d_c, sh.d_c),
            );
            for m in p.iter_mut() {
                let g = ginibre(rng, dim_p, dim_p);
                let raw = &g * g.adjoint();
                let scale = sh.d_c as f64 / raw.trace().re.max(1e-12) / sh.n_w as f64;
                *m = raw * Complex64::new(scale, 0.0);
            }
            dykstra_family(p.as_mut_slice(), &affine_p, 60);
            let affine_q = instrument_affine(
                sh.d_d,
                sh.d_b * sh.d_m,
                DMatrix::identity(sh.d_b * sh.d_m, sh.d_b * sh.d_m),
            );
            for row in q.iter_mut() {
                for fam in row.iter_mut() {
                    for m in fam.iter_mut() {
                        let g = ginibre(rng, dim_q, dim_q);
                        let raw = &g * g.adjoint();
                        let scale = (sh.d_b * sh.d_m) as f64 / raw.trace().re.max(1e-12)
                            / sh.n_z as f64;
                        *m = raw * Complex64::new(scale, 0.0);
                    }
                    dykstra_family(fam.as_mut_slice(), &affine_q, 60);
                }
            }
        }
    }
    State {
        p,
        q,
        choose: vec![1.0 / (sh.n_i * sh.n_r) as f64; sh.n_j * sh.n_w * sh.n_i * sh.n_r],
        announce: vec![
            1.0 / (sh.n_y * sh.n_b) as f64;
            sh.n_j * sh.n_w * sh.n_i * sh.n_x * sh.n_r * sh.n_y * sh.n_b
        ],
    }
}

/// Optimizes the utility of `pi` in `game` over free protocols of the
/// given framework, with default protocol shapes.
pub fn utility(
    pi: &ProgrammableInstrument,
    game: &GuessingGame,
    framework: Framework,
    cfg: &RunConfig,
) -> Result<UtilityReport> {
    utility_with(pi, game, framework, cfg, &SearchDims::default())
}

/// Utility optimization with explicit protocol-shape overrides.
pub fn utility_with(
    pi: &ProgrammableInstrument,
    game: &GuessingGame,
    framework: Framework,
    cfg: &RunConfig,
    dims: &SearchDims,
) -> Result<UtilityReport> {
    let res_out = pi.uniform_outputs().ok_or_else(|| {
        Error::shape("utility search needs a resource with a common output system")
    })?;
    let res_out: Vec<SystemLabel> = res_out.to_vec();
    let res_in: Vec<SystemLabel> = pi.inputs().to_vec();
    let game_in: Vec<SystemLabel> = game.inputs().to_vec();
    let game_out: Vec<SystemLabel> = game.outputs().to_vec();

    let d_c: usize = game_in.iter().map(|s| s.dim).product();
    let d_d: usize = game_out.iter().map(|s| s.dim).product();
    let d_a: usize = res_in.iter().map(|s| s.dim).product();
    let d_b: usize = res_out.iter().map(|s| s.dim).product();
    let n_j = game.n_programs();
    let n_y = game.n_outcomes();
    let n_i = pi.n_programs();
    let n_x = pi.max_outcomes();
    let d_m = dims.memory_dim.unwrap_or(d_c).max(1);
    let n_w = dims.n_forward.unwrap_or(n_x * n_i).max(1);
    let n_b = if framework == Framework::C {
        1
    } else {
        dims.n_backward.unwrap_or(n_x * n_w).max(1)
    };
    let n_r = dims.n_ii_memory.unwrap_or(1).max(1);
    let all_pi = framework == Framework::Ex;
    let n_z = if all_pi { n_y } else { 1 };
    let sh = Shape {
        d_c,
        d_d,
        d_a,
        d_b,
        d_m,
        n_j,
        n_y,
        n_i,
        n_x,
        n_w,
        n_b,
        n_z,
        n_r,
        all_pi,
        lam: game.round_scale(),
    };

    let r_mats: Vec<Vec<Option<DMatrix<Complex64>>>> = pi
        .instruments
        .iter()
        .map(|inst| {
            (0..n_x)
                .map(|x| inst.maps.get(x).map(|m| m.choi.mat.clone()))
                .collect()
        })
        .collect();
    let z_mats: Vec<Vec<Option<DMatrix<Complex64>>>> = game
        .referee
        .instruments
        .iter()
        .map(|inst| {
            (0..n_y)
                .map(|y| inst.maps.get(y).map(|m| m.choi.mat.clone()))
                .collect()
        })
        .collect();

    let see = &cfg.seesaw;
    let mut best: Option<(f64, State)> = None;
    let mut restart_values = Vec::new();
    let mut sweeps_used = Vec::new();
    let mut notes = Vec::new();
    let route_ok = d_a == d_c && d_b == d_d;
    let keep_ok = d_m == d_c && d_m == d_d;

    for restart in 0..see.restarts.max(1) {
        let plan = match restart {
            0 if route_ok => Plan::RouteThrough,
            0 | 1 if keep_ok => Plan::KeepInMemory,
            _ => Plan::Random,
        };
        let mut rng =
            ChaCha8Rng::seed_from_u64(see.seed ^ (restart as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut state = init_state(plan, &sh, &mut rng);
        let mut cur = f64::NEG_INFINITY;
        let mut used = see.sweeps;
        for sweep in 0..see.sweeps.max(1) {
            let cc = compute_cc(&state, &r_mats, &z_mats, &sh);
            let bs = compute_bs(&state, &cc, &sh);
            update_announce(&mut state, &bs, &sh);
            update_choose(&mut state, &bs, &sh);
            q_phase(&mut state, &cc, &sh, see.pg_iters);
            let obj = p_phase(&mut state, &r_mats, &z_mats, &sh, see.pg_iters);
            if obj - cur <= see.obj_tol && sweep > 0 {
                cur = cur.max(obj);
                used = sweep + 1;
                break;
            }
            cur = cur.max(obj);
        }
        restart_values.push(cur);
        sweeps_used.push(used);
        if best.as_ref().map_or(true, |(v, _)| cur > *v) {
            if best.is_none() {
                let tag = match plan {
                    Plan::RouteThrough => "route-through",
                    Plan::KeepInMemory => "keep-in-memory",
                    Plan::Random => "random",
                };
                notes.push(format!("first restart plan: {tag}"));
            }
            best = Some((cur, state));
        }
    }
    let (internal, state) =
        best.ok_or_else(|| Error::Undecided("no search restart completed".into()))?;

    let protocol = extract_protocol(
        &state, &sh, framework, &game_in, &game_out, &res_in, &res_out,
    )?;
    let played = apply_protocol(&protocol, pi)?;
    let value = game.value_of(&played)?;
    notes.push(format!("internal objective {internal:.9}"));
    if (value - internal).abs() > 1e-6 {
        notes.push(format!(
            "replayed value differs from internal objective by {:.2e}",
            (value - internal).abs()
        ));
    }
    Ok(UtilityReport {
        framework,
        value,
        upper: None,
        protocol,
        restart_values,
        sweeps_used,
        notes,
    })
}

/// Packages a search state as a `FreeProtocol` over the given system
/// labels.
#[allow(clippy::too_many_arguments)]
fn extract_protocol(
    state: &State,
    sh: &Shape,
    framework: Framework,
    game_in: &[SystemLabel],
    game_out: &[SystemLabel],
    res_in: &[SystemLabel],
    res_out: &[SystemLabel],
) -> Result<FreeProtocol> {
    let taken: HashSet<String> = game_in
        .iter()
        .chain(game_out)
        .chain(res_in)
        .chain(res_out)
        .map(|s| s.name.clone())
        .collect();
    let mem = fresh_labels(&taken, "mem", &[sh.d_m]);

    let mut p_blocks = state.p.clone();
    polish_family(p_blocks.as_mut_slice(), sh.d_a * sh.d_m, sh.d_c);
    let mut q_blocks = state.q.clone();
    for row in q_blocks.iter_mut() {
        for fam in row.iter_mut() {
            polish_family(fam.as_mut_slice(), sh.d_d, sh.d_b * sh.d_m);
        }
    }

    let mut pre_outs: Vec<SystemLabel> = res_in.to_vec();
    pre_outs.extend(mem.iter().cloned());
    let mut pre_sys = pre_outs.clone();
    pre_sys.extend(
        game_in
            .iter()
            .map(|s| SystemLabel::new(format!("{}@in", s.name), s.dim)),
    );
    let mut pre_maps = Vec::with_capacity(sh.n_w);
    for w in 0..sh.n_w {
        let block = HermitianBlock::new(pre_sys.clone(), p_blocks[w].clone())?;
        pre_maps.push(crate::qobjects::CpMap::new(
            game_in.to_vec(),
            pre_outs.clone(),
            block,
        )?);
    }
    let pre = Instrument::new((0..sh.n_w).map(|w| format!("w{w}")).collect(), pre_maps)?;

    let mut post_ins: Vec<SystemLabel> = res_out.to_vec();
    post_ins.extend(mem.iter().cloned());
    let mut post_sys = game_out.to_vec();
    post_sys.extend(
        post_ins
            .iter()
            .map(|s| SystemLabel::new(format!("{}@in", s.name), s.dim)),
    );
    let mut post = Vec::with_capacity(sh.n_w);
    for w in 0..sh.n_w {
        let mut row = Vec::with_capacity(sh.n_b);
        for b in 0..sh.n_b {
            let mut maps = Vec::with_capacity(sh.n_z);
            for z in 0..sh.n_z {
                let block = HermitianBlock::new(post_sys.clone(), q_blocks[w][b][z].clone())?;
                maps.push(crate::qobjects::CpMap::new(
                    post_ins.clone(),
                    game_out.to_vec(),
                    block,
                )?);
            }
            row.push(Instrument::new(
                (0..sh.n_z).map(|z| format!("z{z}")).collect(),
                maps,
            )?);
        }
        post.push(row);
    }

    let choose = StochasticMatrix::new(
        sh.n_i * sh.n_r,
        vec![sh.n_j, sh.n_w],
        state.choose.clone(),
        1e-9,
    )?;
    let announce = StochasticMatrix::new(
        sh.n_y * sh.n_b,
        vec![sh.n_j, sh.n_w, sh.n_i, sh.n_x, sh.n_r],
        state.announce.clone(),
        1e-9,
    )?;
    let guess = if sh.all_pi {
        vec![GuessSource::PlayerI; sh.n_j]
    } else {
        vec![GuessSource::PlayerII; sh.n_j]
    };
    Ok(FreeProtocol {
        framework,
        pre,
        memory: mem,
        choose,
        n_ii_memory: sh.n_r,
        announce,
        n_backward: sh.n_b,
        post,
        guess,
    })
}
