//! Alternating certificate search for the notions whose certificates mix a
//! mother instrument with outcome-dependent downstream processing.
//!
//! Any CP map `F` with effect `E` factors as a channel after the Lueders
//! map of `E` (sandwich by the pseudo-inverse square root, complete on the
//! kernel). Applied branchwise to a mother instrument this absorbs every
//! non-Lueders part of the mother into the downstream maps, so the mother
//! can be searched over Lueders instruments of POVMs on the input itself:
//! no ancilla dimension has to be guessed. The downstream variables stay
//! convex for a fixed mother and vice versa, giving a two-phase see-saw of
//! projected-gradient steps; every projection here is a Dykstra loop whose
//! two half-steps are closed form.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::qobjects::{fixtures, CpMap, Instrument, ProgrammableInstrument, StochasticMatrix};
use crate::tensor::HermitianBlock;

use super::verdict::{NoExclusionCertificate, QCompatCertificate};

/// Objective below which a candidate is polished and turned into a
/// certificate. Squared Frobenius residuals, summed over all branches.
const ATTEMPT_AT: f64 = 1e-15;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub(crate) fn hermitize_raw(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    (m + m.adjoint()) * c(0.5)
}

/// `Tr_out` of a Choi matrix laid out `(out (x) in)`.
pub(crate) fn tr_out(m: &DMatrix<Complex64>, d_out: usize, d_in: usize) -> DMatrix<Complex64> {
    let mut out = DMatrix::zeros(d_in, d_in);
    for o in 0..d_out {
        for a in 0..d_in {
            for b in 0..d_in {
                out[(a, b)] += m[(o * d_in + a, o * d_in + b)];
            }
        }
    }
    out
}

pub(crate) fn kron_id_left(d_out: usize, x: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    DMatrix::<Complex64>::identity(d_out, d_out).kronecker(x)
}

pub(crate) fn psd_part(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let se = hermitize_raw(m).symmetric_eigen();
    let n = se.eigenvalues.len();
    let mut out = DMatrix::zeros(n, n);
    for k in 0..n {
        let lam = se.eigenvalues[k];
        if lam > 0.0 {
            let v = se.eigenvectors.column(k);
            out += (v * v.adjoint()) * c(lam);
        }
    }
    out
}

pub(crate) fn frob2(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// Dykstra between the PSD product cone and an affine set with a
/// closed-form projection. Ends on the affine set so its linear invariants
/// hold exactly on exit.
pub(crate) fn dykstra_family(
    family: &mut [DMatrix<Complex64>],
    affine: &dyn Fn(&mut [DMatrix<Complex64>]),
    iters: usize,
) {
    let n = family.len();
    let mut p: Vec<DMatrix<Complex64>> = family
        .iter()
        .map(|m| DMatrix::zeros(m.nrows(), m.ncols()))
        .collect();
    let mut q = p.clone();
    for _ in 0..iters {
        for k in 0..n {
            let shifted = &family[k] + &p[k];
            let y = psd_part(&shifted);
            p[k] = shifted - &y;
            family[k] = y;
        }
        for k in 0..n {
            family[k] += q[k].clone();
        }
        let before: Vec<DMatrix<Complex64>> = family.to_vec();
        affine(family);
        for k in 0..n {
            q[k] = &before[k] - &family[k];
        }
    }
    affine(family);
}

/// Affine part of the instrument set: `sum_x Tr_out C_x = target`.
pub(crate) fn instrument_affine(
    d_out: usize,
    d_in: usize,
    target: DMatrix<Complex64>,
) -> impl Fn(&mut [DMatrix<Complex64>]) {
    move |family: &mut [DMatrix<Complex64>]| {
        let n = family.len() as f64;
        let mut defect = target.clone();
        for m in family.iter() {
            defect -= tr_out(m, d_out, d_in);
        }
        let corr = kron_id_left(d_out, &(defect * c(1.0 / (n * d_out as f64))));
        for m in family.iter_mut() {
            *m += &corr;
        }
    }
}

/// Affine part of the `mixing times channel` set: every member's out-marginal
/// is a multiple of the identity and the multiples sum to one.
fn scaled_effect_affine(d_out: usize, d_in: usize) -> impl Fn(&mut [DMatrix<Complex64>]) {
    move |family: &mut [DMatrix<Complex64>]| {
        let margs: Vec<DMatrix<Complex64>> =
            family.iter().map(|m| tr_out(m, d_out, d_in)).collect();
        let weights: Vec<f64> = margs.iter().map(|m| m.trace().re / d_in as f64).collect();
        let shift = (1.0 - weights.iter().sum::<f64>()) / family.len() as f64;
        for ((mat, marg), w) in family.iter_mut().zip(&margs).zip(&weights) {
            let delta = DMatrix::<Complex64>::identity(d_in, d_in) * c(w + shift) - marg;
            *mat += kron_id_left(d_out, &(delta * c(1.0 / d_out as f64)));
        }
    }
}

/// Kraus operators of a CP map given its Choi matrix on `(out (x) in)`.
pub(crate) fn kraus_from_choi(
    m: &DMatrix<Complex64>,
    d_out: usize,
    d_in: usize,
) -> Vec<DMatrix<Complex64>> {
    let se = hermitize_raw(m).symmetric_eigen();
    let lmax = se.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let cutoff = 1e-12 * lmax.max(1.0);
    let mut out = Vec::new();
    for k in 0..se.eigenvalues.len() {
        let lam = se.eigenvalues[k];
        if lam > cutoff {
            let s = lam.sqrt();
            let v = se.eigenvectors.column(k);
            let mut kmat = DMatrix::zeros(d_out, d_in);
            for b in 0..d_out {
                for a in 0..d_in {
                    kmat[(b, a)] = v[b * d_in + a] * c(s);
                }
            }
            out.push(kmat);
        }
    }
    if out.is_empty() {
        out.push(DMatrix::zeros(d_out, d_in));
    }
    out
}

pub(crate) fn congruence(ms: &[DMatrix<Complex64>], x: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let d = ms[0].nrows();
    let mut acc = DMatrix::zeros(d, d);
    for m in ms {
        acc += m * x * m.adjoint();
    }
    acc
}

pub(crate) fn congruence_adj(ms: &[DMatrix<Complex64>], g: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let d = ms[0].ncols();
    let mut acc = DMatrix::zeros(d, d);
    for m in ms {
        acc += m.adjoint() * g * m;
    }
    acc
}

/// Channel `F~` with `F = F~ . Lueders(effect of F)`: sandwich by the
/// pseudo-inverse square root of the out-marginal, completed on its kernel
/// with the maximally mixed preparation.
pub(crate) fn factor_channel_raw(t: &DMatrix<Complex64>, d_out: usize, d_in: usize) -> DMatrix<Complex64> {
    let marg = tr_out(t, d_out, d_in);
    let se = hermitize_raw(&marg).symmetric_eigen();
    let lmax = se.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let cutoff = 1e-12 * lmax.max(1e-12);
    let mut inv_sqrt = DMatrix::zeros(d_in, d_in);
    let mut kernel = DMatrix::zeros(d_in, d_in);
    for k in 0..se.eigenvalues.len() {
        let lam = se.eigenvalues[k];
        let v = se.eigenvectors.column(k);
        let proj = v * v.adjoint();
        if lam > cutoff {
            inv_sqrt += proj * c(1.0 / lam.sqrt());
        } else {
            kernel += proj;
        }
    }
    let lift = kron_id_left(d_out, &inv_sqrt);
    &lift * t * lift.adjoint() + kron_id_left(d_out, &kernel) * c(1.0 / d_out as f64)
}

/// Choi of the Lueders branch of an effect: `vec(sqrt E) vec(sqrt E)^dag`
/// in the `(out (x) in)` layout.
pub(crate) fn lueders_choi_raw(effect: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let d = effect.nrows();
    let se = hermitize_raw(effect).symmetric_eigen();
    let mut root = DMatrix::zeros(d, d);
    for k in 0..se.eigenvalues.len() {
        let lam = se.eigenvalues[k];
        if lam > 0.0 {
            let v = se.eigenvectors.column(k);
            root += (v * v.adjoint()) * c(lam.sqrt());
        }
    }
    let mut veck = DMatrix::zeros(d * d, 1);
    for b in 0..d {
        for a in 0..d {
            veck[(b * d + a, 0)] = root[(b, a)];
        }
    }
    &veck * veck.adjoint()
}

/// How a downstream family is constrained per `(group, mother branch)`.
#[derive(Clone, Copy, PartialEq)]
enum FamilyKind {
    /// Members are `mu_x` times a channel: out-marginals proportional to
    /// the identity, proportions summing to one.
    ScaledEffect,
    /// Members form an instrument: out-marginals sum to the identity.
    Instrument,
}

struct BranchGroup {
    kind: FamilyKind,
    d_out: usize,
    targets: Vec<DMatrix<Complex64>>,
}

struct Engine {
    d_a: usize,
    groups: Vec<BranchGroup>,
}

/// One candidate: mother Choi blocks (input to input) and downstream Choi
/// blocks per `(group, branch, outcome)`.
#[derive(Clone)]
struct Iterate {
    mother: Vec<DMatrix<Complex64>>,
    posts: Vec<Vec<Vec<DMatrix<Complex64>>>>,
}

impl Engine {
    fn w_count(itr: &Iterate) -> usize {
        itr.mother.len()
    }

    /// Sandwich matrices `1_out (x) K^T` per (group, branch, kraus index),
    /// implementing post-composition with the current mother.
    fn mother_lifts(&self, mother: &[DMatrix<Complex64>]) -> Vec<Vec<Vec<DMatrix<Complex64>>>> {
        let kraus: Vec<Vec<DMatrix<Complex64>>> = mother
            .iter()
            .map(|m| kraus_from_choi(m, self.d_a, self.d_a))
            .collect();
        self.groups
            .iter()
            .map(|g| {
                kraus
                    .iter()
                    .map(|ks| {
                        ks.iter()
                            .map(|k| kron_id_left(g.d_out, &k.transpose()))
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }

    fn predict(
        &self,
        lifts: &[Vec<Vec<DMatrix<Complex64>>>],
        posts: &[Vec<Vec<DMatrix<Complex64>>>],
    ) -> Vec<Vec<DMatrix<Complex64>>> {
        self.groups
            .iter()
            .enumerate()
            .map(|(g, group)| {
                (0..group.targets.len())
                    .map(|x| {
                        let d = group.d_out * self.d_a;
                        let mut acc = DMatrix::zeros(d, d);
                        for (w, lw) in lifts[g].iter().enumerate() {
                            acc += congruence(lw, &posts[g][w][x]);
                        }
                        acc
                    })
                    .collect()
            })
            .collect()
    }

    fn residuals(
        &self,
        pred: &[Vec<DMatrix<Complex64>>],
    ) -> (f64, Vec<Vec<DMatrix<Complex64>>>) {
        let mut f = 0.0;
        let res = self
            .groups
            .iter()
            .enumerate()
            .map(|(g, group)| {
                group
                    .targets
                    .iter()
                    .enumerate()
                    .map(|(x, t)| {
                        let r = &pred[g][x] - t;
                        f += frob2(&r);
                        r
                    })
                    .collect()
            })
            .collect();
        (f, res)
    }

    fn objective_with(
        &self,
        lifts: &[Vec<Vec<DMatrix<Complex64>>>],
        posts: &[Vec<Vec<DMatrix<Complex64>>>],
    ) -> f64 {
        self.residuals(&self.predict(lifts, posts)).0
    }

    fn project_posts(&self, posts: &mut [Vec<Vec<DMatrix<Complex64>>>], iters: usize) {
        for (g, group) in self.groups.iter().enumerate() {
            for fam in posts[g].iter_mut() {
                match group.kind {
                    FamilyKind::ScaledEffect => {
                        let aff = scaled_effect_affine(group.d_out, self.d_a);
                        dykstra_family(fam, &aff, iters);
                    }
                    FamilyKind::Instrument => {
                        let aff = instrument_affine(
                            group.d_out,
                            self.d_a,
                            DMatrix::identity(self.d_a, self.d_a),
                        );
                        dykstra_family(fam, &aff, iters);
                    }
                }
            }
        }
    }

    fn project_mother(&self, mother: &mut [DMatrix<Complex64>], iters: usize) {
        let aff = instrument_affine(self.d_a, self.d_a, DMatrix::identity(self.d_a, self.d_a));
        dykstra_family(mother, &aff, iters);
    }

    /// Convex phase over the downstream families at fixed mother:
    /// projected gradient with a monotone backtracking step.
    fn posts_phase(&self, itr: &mut Iterate, pg_iters: usize) {
        let lifts = self.mother_lifts(&itr.mother);
        let mut t = 1.0;
        for _ in 0..pg_iters {
            let pred = self.predict(&lifts, &itr.posts);
            let (f0, res) = self.residuals(&pred);
            if f0 < ATTEMPT_AT {
                break;
            }
            let mut gnorm2 = 0.0;
            let grads: Vec<Vec<Vec<DMatrix<Complex64>>>> = self
                .groups
                .iter()
                .enumerate()
                .map(|(g, group)| {
                    (0..Self::w_count(itr))
                        .map(|w| {
                            (0..group.targets.len())
                                .map(|x| {
                                    let grad =
                                        congruence_adj(&lifts[g][w], &res[g][x]) * c(2.0);
                                    gnorm2 += frob2(&grad);
                                    grad
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect();
            if gnorm2 < 1e-30 {
                break;
            }
            let mut advanced = false;
            for _ in 0..30 {
                let mut cand = itr.posts.clone();
                for (g, per_w) in cand.iter_mut().enumerate() {
                    for (w, fam) in per_w.iter_mut().enumerate() {
                        for (x, m) in fam.iter_mut().enumerate() {
                            *m -= &grads[g][w][x] * c(t);
                        }
                    }
                }
                self.project_posts(&mut cand, 20);
                if self.objective_with(&lifts, &cand) < f0 {
                    itr.posts = cand;
                    t = (t * 1.25).min(1e3);
                    advanced = true;
                    break;
                }
                t *= 0.25;
                if t < 1e-14 {
                    break;
                }
            }
            if !advanced {
                break;
            }
        }
    }

    /// Convex phase over the mother at fixed downstream families.
    fn mother_phase(&self, itr: &mut Iterate, pg_iters: usize) {
        // Kraus lifts `L (x) 1_in` of every downstream map, implementing
        // pre-composition with the mother.
        let post_lifts: Vec<Vec<Vec<Vec<DMatrix<Complex64>>>>> = self
            .groups
            .iter()
            .enumerate()
            .map(|(g, group)| {
                itr.posts[g]
                    .iter()
                    .map(|fam| {
                        fam.iter()
                            .map(|m| {
                                kraus_from_choi(m, group.d_out, self.d_a)
                                    .iter()
                                    .map(|l| {
                                        l.kronecker(&DMatrix::<Complex64>::identity(
                                            self.d_a, self.d_a,
                                        ))
                                    })
                                    .collect()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let w_count = Self::w_count(itr);
        let predict = |mother: &[DMatrix<Complex64>]| -> Vec<Vec<DMatrix<Complex64>>> {
            self.groups
                .iter()
                .enumerate()
                .map(|(g, group)| {
                    (0..group.targets.len())
                        .map(|x| {
                            let d = group.d_out * self.d_a;
                            let mut acc = DMatrix::zeros(d, d);
                            for w in 0..w_count {
                                acc += congruence(&post_lifts[g][w][x], &mother[w]);
                            }
                            acc
                        })
                        .collect()
                })
                .collect()
        };
        let mut t = 1.0;
        for _ in 0..pg_iters {
            let (f0, res) = self.residuals(&predict(&itr.mother));
            if f0 < ATTEMPT_AT {
                break;
            }
            let mut gnorm2 = 0.0;
            let grads: Vec<DMatrix<Complex64>> = (0..w_count)
                .map(|w| {
                    let mut grad = DMatrix::zeros(self.d_a * self.d_a, self.d_a * self.d_a);
                    for (g, group) in self.groups.iter().enumerate() {
                        for x in 0..group.targets.len() {
                            grad += congruence_adj(&post_lifts[g][w][x], &res[g][x]) * c(2.0);
                        }
                    }
                    gnorm2 += frob2(&grad);
                    grad
                })
                .collect();
            if gnorm2 < 1e-30 {
                break;
            }
            let mut advanced = false;
            for _ in 0..30 {
                let mut cand = itr.mother.clone();
                for (w, m) in cand.iter_mut().enumerate() {
                    *m -= &grads[w] * c(t);
                }
                self.project_mother(&mut cand, 20);
                if self.residuals(&predict(&cand)).0 < f0 {
                    itr.mother = cand;
                    t = (t * 1.25).min(1e3);
                    advanced = true;
                    break;
                }
                t *= 0.25;
                if t < 1e-14 {
                    break;
                }
            }
            if !advanced {
                break;
            }
        }
    }

    fn objective(&self, itr: &Iterate) -> f64 {
        let lifts = self.mother_lifts(&itr.mother);
        self.objective_with(&lifts, &itr.posts)
    }

    fn run(&self, mut itr: Iterate, sweeps: usize, pg_iters: usize, obj_tol: f64) -> (Iterate, f64, usize) {
        let mut best = f64::INFINITY;
        let mut used = 0;
        for sweep in 0..sweeps {
            self.posts_phase(&mut itr, pg_iters);
            self.mother_phase(&mut itr, pg_iters);
            used = sweep + 1;
            let f = self.objective(&itr);
            if f < ATTEMPT_AT {
                break;
            }
            if sweep > 3 && best - f < obj_tol {
                break;
            }
            best = best.min(f);
        }
        self.project_mother(&mut itr.mother, 300);
        self.project_posts(&mut itr.posts, 300);
        let f = self.objective(&itr);
        (itr, f, used)
    }
}

/// See-saw outcome bookkeeping for diagnostics.
pub(crate) struct FitReport {
    pub objective: f64,
    pub iterations: usize,
}

fn raw_random_cp(
    rng: &mut ChaCha8Rng,
    d_out: usize,
    d_in: usize,
    normalize_channel: bool,
) -> DMatrix<Complex64> {
    let g = fixtures::ginibre(rng, d_out * d_in, d_out * d_in);
    let mut m = &g * g.adjoint();
    if normalize_channel {
        let marg = tr_out(&m, d_out, d_in);
        let se = hermitize_raw(&marg).symmetric_eigen();
        let mut inv_sqrt = DMatrix::zeros(d_in, d_in);
        for k in 0..se.eigenvalues.len() {
            let lam = se.eigenvalues[k].max(1e-12);
            let v = se.eigenvectors.column(k);
            inv_sqrt += (v * v.adjoint()) * c(1.0 / lam.sqrt());
        }
        let lift = kron_id_left(d_out, &inv_sqrt);
        m = &lift * m * lift.adjoint();
    }
    m
}

fn random_povm_raw(rng: &mut ChaCha8Rng, d: usize, n: usize) -> Vec<DMatrix<Complex64>> {
    let raw: Vec<DMatrix<Complex64>> = (0..n)
        .map(|_| {
            let g = fixtures::ginibre(rng, d, d);
            &g * g.adjoint()
        })
        .collect();
    let mut total = DMatrix::zeros(d, d);
    for r in &raw {
        total += r;
    }
    let se = hermitize_raw(&total).symmetric_eigen();
    let mut inv_sqrt = DMatrix::zeros(d, d);
    for k in 0..se.eigenvalues.len() {
        let lam = se.eigenvalues[k].max(1e-12);
        let v = se.eigenvectors.column(k);
        inv_sqrt += (v * v.adjoint()) * c(1.0 / lam.sqrt());
    }
    raw.iter()
        .map(|r| hermitize_raw(&(&inv_sqrt * r * &inv_sqrt)))
        .collect()
}

/// Mother from a POVM: one Lueders branch per effect.
fn lueders_mother(effects: &[DMatrix<Complex64>]) -> Vec<DMatrix<Complex64>> {
    effects.iter().map(lueders_choi_raw).collect()
}

struct InitPlan {
    mother: Vec<DMatrix<Complex64>>,
    posts: Vec<Vec<Vec<DMatrix<Complex64>>>>,
}

/// Copy-the-target downstream initialization for every branch.
fn target_posts(groups: &[BranchGroup], w_count: usize) -> Vec<Vec<Vec<DMatrix<Complex64>>>> {
    groups
        .iter()
        .map(|g| (0..w_count).map(|_| g.targets.clone()).collect())
        .collect()
}

fn init_plans(
    engine: &Engine,
    effect_sets: &[Vec<DMatrix<Complex64>>],
    anchored: &[usize],
    restarts: usize,
    seed: u64,
) -> Vec<InitPlan> {
    let mut plans = Vec::new();
    // Anchored starts: mother = Lueders instrument of one group's induced
    // POVM; that group's branches are exact by the factorization lemma.
    for &g0 in anchored {
        let effects = &effect_sets[g0];
        let w_count = effects.len();
        let mother = lueders_mother(effects);
        let mut posts = target_posts(&engine.groups, w_count);
        if engine.groups[g0].kind == FamilyKind::ScaledEffect {
            let group = &engine.groups[g0];
            for (w, fam) in posts[g0].iter_mut().enumerate() {
                for (x, m) in fam.iter_mut().enumerate() {
                    *m = if x == w {
                        factor_channel_raw(&group.targets[x], group.d_out, engine.d_a)
                    } else {
                        DMatrix::zeros(group.d_out * engine.d_a, group.d_out * engine.d_a)
                    };
                }
            }
        }
        plans.push(InitPlan { mother, posts });
    }
    // Uniform start: the mother splits the identity evenly; predictions
    // start exactly on target, feasibility is earned during the descent.
    let base_w = engine
        .groups
        .iter()
        .map(|g| g.targets.len())
        .product::<usize>()
        .clamp(2, 8);
    let uniform = |w: usize| -> InitPlan {
        let eff = DMatrix::<Complex64>::identity(engine.d_a, engine.d_a) * c(1.0 / w as f64);
        InitPlan {
            mother: lueders_mother(&vec![eff; w]),
            posts: target_posts(&engine.groups, w),
        }
    };
    plans.push(uniform(base_w));
    if base_w != 2 {
        plans.push(uniform(2));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while plans.len() < restarts.max(anchored.len() + 2) {
        let mother = lueders_mother(&random_povm_raw(&mut rng, engine.d_a, base_w));
        let posts = engine
            .groups
            .iter()
            .map(|g| {
                (0..base_w)
                    .map(|_| {
                        let n = g.targets.len();
                        (0..n)
                            .map(|_| {
                                raw_random_cp(&mut rng, g.d_out, engine.d_a, true)
                                    * c(1.0 / n as f64)
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        plans.push(InitPlan { mother, posts });
    }
    plans
}

/// Wraps a raw mother family into an `Instrument` on the given input.
fn mother_instrument(
    mother: &[DMatrix<Complex64>],
    inputs: &[crate::tensor::SystemLabel],
) -> Result<Instrument> {
    let in_systems: Vec<crate::tensor::SystemLabel> =
        inputs.iter().map(crate::qobjects::in_label).collect();
    let mut systems = inputs.to_vec();
    systems.extend(in_systems);
    let maps = mother
        .iter()
        .map(|m| {
            let choi = HermitianBlock::new(systems.clone(), m.clone())?;
            CpMap::new(inputs.to_vec(), inputs.to_vec(), choi)
        })
        .collect::<Result<Vec<_>>>()?;
    let outcomes = (0..maps.len()).map(|w| w.to_string()).collect();
    Instrument::new(outcomes, maps)
}

/// Splits one scaled-effect family into mixing weights and channels.
fn split_family(
    fam: &[DMatrix<Complex64>],
    d_out: usize,
    d_a: usize,
    inputs: &[crate::tensor::SystemLabel],
    outputs: &[crate::tensor::SystemLabel],
) -> Result<(Vec<f64>, Vec<CpMap>)> {
    let mut systems = outputs.to_vec();
    systems.extend(inputs.iter().map(crate::qobjects::in_label));
    let mut weights = Vec::with_capacity(fam.len());
    let mut channels = Vec::with_capacity(fam.len());
    for m in fam {
        let w = (m.trace().re / d_a as f64).max(0.0);
        if w <= 1e-10 {
            weights.push(0.0);
            let mixed = HermitianBlock::identity(outputs.to_vec()).scale(1.0 / d_out as f64);
            channels.push(CpMap::prepare(inputs.to_vec(), &mixed)?);
        } else {
            weights.push(w);
            let choi = HermitianBlock::new(systems.clone(), m * c(1.0 / w))?;
            channels.push(CpMap::new(inputs.to_vec(), outputs.to_vec(), choi)?);
        }
    }
    let total: f64 = weights.iter().sum();
    if total > 0.0 {
        for w in weights.iter_mut() {
            *w /= total;
        }
    }
    Ok((weights, channels))
}

/// Searches for a q-compatibility certificate of the whole family. Returns
/// the certificate only when its solver-independent reconstruction matches
/// the programs within the certificate tolerance.
pub(crate) fn fit_q(
    pi: &ProgrammableInstrument,
    cfg: &RunConfig,
) -> Result<(Option<QCompatCertificate>, FitReport)> {
    let d_a: usize = pi.inputs().iter().map(|s| s.dim).product();
    let groups: Vec<BranchGroup> = pi
        .instruments
        .iter()
        .map(|inst| BranchGroup {
            kind: FamilyKind::ScaledEffect,
            d_out: inst.maps[0].out_dim(),
            targets: inst.maps.iter().map(|m| m.choi.mat.clone()).collect(),
        })
        .collect();
    let engine = Engine { d_a, groups };
    let effect_sets: Vec<Vec<DMatrix<Complex64>>> = pi
        .instruments
        .iter()
        .map(|inst| {
            inst.maps
                .iter()
                .map(|m| tr_out(&m.choi.mat, m.out_dim(), d_a).transpose())
                .collect()
        })
        .collect();
    let anchored: Vec<usize> = (0..pi.n_programs()).collect();
    let plans = init_plans(
        &engine,
        &effect_sets,
        &anchored,
        cfg.seesaw.restarts,
        cfg.seesaw.seed,
    );

    let mut best_f = f64::INFINITY;
    let mut total_sweeps = 0;
    for plan in plans {
        let (itr, f, used) = engine.run(
            Iterate {
                mother: plan.mother,
                posts: plan.posts,
            },
            cfg.seesaw.sweeps,
            cfg.seesaw.pg_iters,
            cfg.seesaw.obj_tol,
        );
        total_sweeps += used;
        best_f = best_f.min(f);
        if f < ATTEMPT_AT * 10.0 {
            let w_count = itr.mother.len();
            let mother = mother_instrument(&itr.mother, pi.inputs())?;
            let n = pi.n_programs();
            let out_dim = pi.max_outcomes();
            let mut mu_p = vec![0.0; w_count * n * out_dim];
            let mut post_channels = Vec::with_capacity(n);
            for (i, inst) in pi.instruments.iter().enumerate() {
                let mut per_w = Vec::with_capacity(w_count);
                for (w, fam) in itr.posts[i].iter().enumerate() {
                    let (weights, channels) = split_family(
                        fam,
                        inst.maps[0].out_dim(),
                        d_a,
                        pi.inputs(),
                        inst.outputs(),
                    )?;
                    for (x, wt) in weights.iter().enumerate() {
                        mu_p[(w * n + i) * out_dim + x] = *wt;
                    }
                    per_w.push(channels);
                }
                post_channels.push(per_w);
            }
            let mu = StochasticMatrix::new(out_dim, vec![w_count, n], mu_p, 1e-6)?;
            let cert = QCompatCertificate {
                mother,
                mu,
                post_channels,
            };
            if cert.validate(cfg.tol.certificate).is_ok()
                && cert.deviation(pi)? <= cfg.tol.certificate
            {
                return Ok((
                    Some(cert),
                    FitReport {
                        objective: f,
                        iterations: total_sweeps,
                    },
                ));
            }
        }
    }
    Ok((
        None,
        FitReport {
            objective: best_f,
            iterations: total_sweeps,
        },
    ))
}

/// Searches for a no-exclusion certificate with the given designated
/// program: the designated program is realized through a mother whose
/// branches still admit downstream instruments for every other program.
pub(crate) fn fit_no_exclusion(
    pi: &ProgrammableInstrument,
    designated: usize,
    cfg: &RunConfig,
) -> Result<(Option<NoExclusionCertificate>, FitReport)> {
    if designated >= pi.n_programs() {
        return Err(Error::invalid(
            "exclusion check",
            format!("designated program {designated} out of range"),
        ));
    }
    let d_a: usize = pi.inputs().iter().map(|s| s.dim).product();
    let others: Vec<usize> = (0..pi.n_programs()).filter(|&j| j != designated).collect();
    let mut groups = Vec::with_capacity(pi.n_programs());
    let des_inst = &pi.instruments[designated];
    groups.push(BranchGroup {
        kind: FamilyKind::ScaledEffect,
        d_out: des_inst.maps[0].out_dim(),
        targets: des_inst.maps.iter().map(|m| m.choi.mat.clone()).collect(),
    });
    for &j in &others {
        let inst = &pi.instruments[j];
        groups.push(BranchGroup {
            kind: FamilyKind::Instrument,
            d_out: inst.maps[0].out_dim(),
            targets: inst.maps.iter().map(|m| m.choi.mat.clone()).collect(),
        });
    }
    let engine = Engine { d_a, groups };
    let effect_sets = vec![des_inst
        .maps
        .iter()
        .map(|m| tr_out(&m.choi.mat, m.out_dim(), d_a).transpose())
        .collect()];
    let plans = init_plans(&engine, &effect_sets, &[0], cfg.seesaw.restarts, cfg.seesaw.seed);

    let mut best_f = f64::INFINITY;
    let mut total_sweeps = 0;
    for plan in plans {
        let (itr, f, used) = engine.run(
            Iterate {
                mother: plan.mother,
                posts: plan.posts,
            },
            cfg.seesaw.sweeps,
            cfg.seesaw.pg_iters,
            cfg.seesaw.obj_tol,
        );
        total_sweeps += used;
        best_f = best_f.min(f);
        if f < ATTEMPT_AT * 10.0 {
            let w_count = itr.mother.len();
            let mother = mother_instrument(&itr.mother, pi.inputs())?;
            let out_dim = des_inst.n_outcomes();
            let mut mu_p = vec![0.0; w_count * out_dim];
            let mut post_channels = Vec::with_capacity(w_count);
            for (w, fam) in itr.posts[0].iter().enumerate() {
                let (weights, channels) = split_family(
                    fam,
                    des_inst.maps[0].out_dim(),
                    d_a,
                    pi.inputs(),
                    des_inst.outputs(),
                )?;
                for (x, wt) in weights.iter().enumerate() {
                    mu_p[w * out_dim + x] = *wt;
                }
                post_channels.push(channels);
            }
            let mu = StochasticMatrix::new(out_dim, vec![w_count], mu_p, 1e-6)?;
            let mut recovery = Vec::with_capacity(others.len());
            for (slot, &j) in others.iter().enumerate() {
                let inst = &pi.instruments[j];
                let mut systems = inst.outputs().to_vec();
                systems.extend(pi.inputs().iter().map(crate::qobjects::in_label));
                let mut per_w = Vec::with_capacity(w_count);
                for fam in itr.posts[slot + 1].iter() {
                    let maps = fam
                        .iter()
                        .map(|m| {
                            let choi = HermitianBlock::new(systems.clone(), m.clone())?;
                            CpMap::new(pi.inputs().to_vec(), inst.outputs().to_vec(), choi)
                        })
                        .collect::<Result<Vec<_>>>()?;
                    per_w.push(Instrument::new(inst.outcomes.clone(), maps)?);
                }
                recovery.push(per_w);
            }
            let cert = NoExclusionCertificate {
                designated,
                mother,
                mu,
                post_channels,
                recovery,
                recovered_programs: others.clone(),
            };
            if cert.validate(cfg.tol.certificate).is_ok()
                && cert.deviation(pi)? <= cfg.tol.certificate
            {
                return Ok((
                    Some(cert),
                    FitReport {
                        objective: f,
                        iterations: total_sweeps,
                    },
                ));
            }
        }
    }
    Ok((
        None,
        FitReport {
            objective: best_f,
            iterations: total_sweeps,
        },
    ))
}
