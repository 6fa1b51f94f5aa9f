//! Replaying compatibility certificates as explicit free protocols.
//!
//! A certificate asserts that a programmable instrument is free in some
//! framework by exhibiting a mother object together with classical and
//! quantum post-processing. [`simulate_free`] turns that data into a free
//! protocol acting on the trivial resource and replays it through
//! [`apply_protocol`], so the claim is re-checked end to end by machinery
//! that shares nothing with the feasibility solver: if the replayed family
//! matches the target, the certificate is honest and the family really is
//! free.
//!
//! The module also hosts the composition-replay identity behind utility
//! monotonicity ([`monotonicity_check`]), the canonical free-utility replay
//! used to compare free resources ([`free_utility_replay`]), and a
//! generator of random valid protocols for the property suites
//! ([`random_protocol`]).

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::compat::{
    CertificateKind, ClassicalCertificate, NoExclusionCertificate, QCompatCertificate,
};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::games::game::GuessingGame;
use crate::games::protocol::{
    apply_protocol, compose_protocols, fresh_labels, identity_protocol, FreeProtocol, GuessSource,
};
use crate::games::threshold::{
    build_post, build_pre, decorate, label_names, relabel_route, threshold_protocol, ResourceShape,
};
use crate::games::Framework;
use crate::qobjects::{fixtures, CpMap, Instrument, ProgrammableInstrument, StochasticMatrix};
use crate::tensor::SystemLabel;

/// Builds the free protocol encoded by a compatibility certificate and
/// replays it on the trivial resource.
///
/// Supported pairings: `c` with a classical certificate, `q` with either a
/// q-compatibility certificate or a classical one (classical freeness
/// implies q-freeness), and `ex` with a no-exclusion certificate. The
/// returned family is `apply_protocol(protocol, trivial_resource())`; its
/// distance to the certified target is measured by [`replay_error`].
pub fn simulate_free(
    framework: Framework,
    target: &ProgrammableInstrument,
    certificate: &CertificateKind,
) -> Result<(FreeProtocol, ProgrammableInstrument)> {
    let resource = fixtures::trivial_resource()?;
    let shape = ResourceShape::of(&resource)?;
    let protocol = match (framework, certificate) {
        (Framework::C, CertificateKind::Classical(c)) => {
            classical_sim(target, &shape, c, Framework::C)?
        }
        (Framework::Q, CertificateKind::Classical(c)) => {
            classical_sim(target, &shape, c, Framework::Q)?
        }
        (Framework::Q, CertificateKind::Q(c)) => q_sim(target, &shape, c)?,
        (Framework::Ex, CertificateKind::NoExclusion(c)) => ex_sim(target, &shape, c)?,
        _ => {
            return Err(Error::InvalidProtocol(
                "no free-protocol simulation for this framework/certificate pairing".into(),
            ))
        }
    };
    protocol.validate(1e-7)?;
    let played = apply_protocol(&protocol, &resource)?;
    Ok((protocol, played))
}

/// Worst Frobenius distance between corresponding branch Chois of two
/// families with the same programs. Extra branches on either side (padding
/// outcomes) count with their full norm, so they must be numerically zero.
pub fn replay_error(target: &ProgrammableInstrument, played: &ProgrammableInstrument) -> Result<f64> {
    if target.n_programs() != played.n_programs() {
        return Err(Error::shape(format!(
            "replay has {} programs, target {}",
            played.n_programs(),
            target.n_programs()
        )));
    }
    let mut worst = 0.0f64;
    for (a, b) in target.instruments.iter().zip(&played.instruments) {
        let n = a.n_outcomes().max(b.n_outcomes());
        for x in 0..n {
            let err = match (a.maps.get(x), b.maps.get(x)) {
                (Some(ma), Some(mb)) => {
                    let order: Vec<&str> =
                        ma.choi.systems.iter().map(|s| s.name.as_str()).collect();
                    let aligned = mb.choi.permute_systems(&order)?;
                    (&ma.choi.mat - &aligned.mat).norm()
                }
                (Some(ma), None) => ma.choi.mat.norm(),
                (None, Some(mb)) => mb.choi.mat.norm(),
                (None, None) => 0.0,
            };
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

/// Mother instrument routed into memory, outcomes post-processed
/// classically. Also covers q-framework replay of classical certificates.
fn classical_sim(
    target: &ProgrammableInstrument,
    shape: &ResourceShape,
    cert: &ClassicalCertificate,
    framework: Framework,
) -> Result<FreeProtocol> {
    let gd_in = target.inputs().to_vec();
    let gd_out = target
        .uniform_outputs()
        .ok_or_else(|| Error::shape("certificate replay needs uniform target outputs"))?
        .to_vec();
    if cert.mother.inputs() != gd_in.as_slice() {
        return Err(Error::shape("mother inputs do not match the target's"));
    }
    if cert.mother.outputs() != gd_out.as_slice() {
        return Err(Error::shape("mother outputs do not match the target's"));
    }

    let mut taken = label_names(&gd_in, &gd_out, shape);
    for s in cert.mother.outputs() {
        taken.insert(s.name.clone());
    }
    let dims: Vec<usize> = gd_out.iter().map(|s| s.dim).collect();
    let mem = fresh_labels(&taken, "mem", &dims);

    let mats: Vec<DMatrix<Complex64>> =
        cert.mother.maps.iter().map(|m| m.choi.mat.clone()).collect();
    let pre = build_pre(&gd_in, &shape.inputs, &mem, &mats)?;
    let route = relabel_route(&mem, &gd_out)?;
    let n_w = cert.mother.n_outcomes();
    let post = vec![vec![build_post(&gd_out, &shape.outputs, &mem, &[route])?]; n_w];

    let n_j = target.n_programs();
    let n_x = cert.mu.out_dim;
    let mut announce = StochasticMatrix::uniform(
        n_x,
        vec![n_j, n_w, shape.n_programs, shape.n_outcomes, 1],
    );
    for j in 0..n_j {
        for w in 0..n_w {
            for i in 0..shape.n_programs {
                for x in 0..shape.n_outcomes {
                    let row = announce.row_mut(&[j, w, i, x, 0]);
                    for (y, slot) in row.iter_mut().enumerate() {
                        *slot = cert.mu.get(y, &[w, j]);
                    }
                }
            }
        }
    }

    Ok(FreeProtocol {
        framework,
        pre,
        memory: mem,
        choose: StochasticMatrix::deterministic(shape.n_programs, vec![n_j, n_w], |_| 0)?,
        n_ii_memory: 1,
        announce,
        n_backward: 1,
        post,
        guess: vec![GuessSource::PlayerII; n_j],
    })
}

/// Mother instrument into a mediating memory, announced outcomes selecting
/// per-program repair channels through the backward message.
fn q_sim(
    target: &ProgrammableInstrument,
    shape: &ResourceShape,
    cert: &QCompatCertificate,
) -> Result<FreeProtocol> {
    let gd_in = target.inputs().to_vec();
    let gd_out = target
        .uniform_outputs()
        .ok_or_else(|| Error::shape("certificate replay needs uniform target outputs"))?
        .to_vec();
    if cert.mother.inputs() != gd_in.as_slice() {
        return Err(Error::shape("mother inputs do not match the target's"));
    }
    let med = cert.mother.outputs().to_vec();
    let n_w = cert.mother.n_outcomes();
    let n_j = target.n_programs();
    if cert.post_channels.len() != n_j
        || cert.post_channels.iter().any(|per| per.len() != n_w)
        || cert
            .post_channels
            .iter()
            .flatten()
            .any(|per_w| per_w.is_empty())
    {
        return Err(Error::shape("repair channel grid does not match (programs, outcomes)"));
    }
    for ch in cert.post_channels.iter().flatten().flatten() {
        if ch.inputs != med || ch.outputs != gd_out {
            return Err(Error::shape("repair channels must map the mediating system to the target output"));
        }
    }

    let mut taken = label_names(&gd_in, &gd_out, shape);
    for s in &med {
        taken.insert(s.name.clone());
    }
    let dims: Vec<usize> = med.iter().map(|s| s.dim).collect();
    let mem = fresh_labels(&taken, "mem", &dims);

    let mats: Vec<DMatrix<Complex64>> =
        cert.mother.maps.iter().map(|m| m.choi.mat.clone()).collect();
    let pre = build_pre(&gd_in, &shape.inputs, &mem, &mats)?;

    let n_x = cert.mu.out_dim;
    let n_b = n_j * n_x;
    let mut post = Vec::with_capacity(n_w);
    for w in 0..n_w {
        let mut row = Vec::with_capacity(n_b);
        for j in 0..n_j {
            let per = &cert.post_channels[j][w];
            for y in 0..n_x {
                let ch = per.get(y).unwrap_or(&per[per.len() - 1]);
                row.push(build_post(&gd_out, &shape.outputs, &mem, &[ch.choi.mat.clone()])?);
            }
        }
        post.push(row);
    }

    let mut announce = StochasticMatrix::uniform(
        n_x * n_b,
        vec![n_j, n_w, shape.n_programs, shape.n_outcomes, 1],
    );
    for j in 0..n_j {
        for w in 0..n_w {
            for i in 0..shape.n_programs {
                for x in 0..shape.n_outcomes {
                    let row = announce.row_mut(&[j, w, i, x, 0]);
                    row.fill(0.0);
                    for y in 0..n_x {
                        row[y * n_b + j * n_x + y] = cert.mu.get(y, &[w, j]);
                    }
                }
            }
        }
    }

    Ok(FreeProtocol {
        framework: Framework::Q,
        pre,
        memory: mem,
        choose: StochasticMatrix::deterministic(shape.n_programs, vec![n_j, n_w], |_| 0)?,
        n_ii_memory: 1,
        announce,
        n_backward: n_b,
        post,
        guess: vec![GuessSource::PlayerII; n_j],
    })
}

/// Designated program announced and repaired by channels, remaining
/// programs recovered by instruments whose outcomes player I announces.
fn ex_sim(
    target: &ProgrammableInstrument,
    shape: &ResourceShape,
    cert: &NoExclusionCertificate,
) -> Result<FreeProtocol> {
    let gd_in = target.inputs().to_vec();
    let gd_out = target
        .uniform_outputs()
        .ok_or_else(|| Error::shape("certificate replay needs uniform target outputs"))?
        .to_vec();
    let n_j = target.n_programs();
    let j0 = cert.designated;
    if j0 >= n_j {
        return Err(Error::invalid(
            "no-exclusion certificate",
            format!("designated program {j0} out of {n_j}"),
        ));
    }
    if cert.mother.inputs() != gd_in.as_slice() {
        return Err(Error::shape("mother inputs do not match the target's"));
    }
    let med = cert.mother.outputs().to_vec();
    let n_w = cert.mother.n_outcomes();
    let n_max = target.max_outcomes();
    if cert.post_channels.len() != n_w {
        return Err(Error::shape("designated repair grid does not match the mother outcomes"));
    }

    let mut taken = label_names(&gd_in, &gd_out, shape);
    for s in &med {
        taken.insert(s.name.clone());
    }
    let dims: Vec<usize> = med.iter().map(|s| s.dim).collect();
    let mem = fresh_labels(&taken, "mem", &dims);

    let mats: Vec<DMatrix<Complex64>> =
        cert.mother.maps.iter().map(|m| m.choi.mat.clone()).collect();
    let pre = build_pre(&gd_in, &shape.inputs, &mem, &mats)?;

    let d_d: usize = gd_out.iter().map(|s| s.dim).product();
    let d_m: usize = med.iter().map(|s| s.dim).product();
    let zero_mat = DMatrix::<Complex64>::zeros(d_d * d_m, d_d * d_m);

    let n_b = n_j * n_max;
    let mut post = Vec::with_capacity(n_w);
    for w in 0..n_w {
        let mut row: Vec<Option<Instrument>> = vec![None; n_b];
        for y in 0..n_max {
            let per = &cert.post_channels[w];
            let ch = per.get(y).unwrap_or(&per[per.len() - 1]);
            let mut branch = vec![ch.choi.mat.clone()];
            branch.resize(n_max, zero_mat.clone());
            row[j0 * n_max + y] = Some(build_post(&gd_out, &shape.outputs, &mem, &branch)?);
        }
        for j in 0..n_j {
            if j == j0 {
                continue;
            }
            let slot = cert
                .recovered_programs
                .iter()
                .position(|&p| p == j)
                .ok_or_else(|| {
                    Error::invalid("no-exclusion certificate", format!("program {j} has no recovery"))
                })?;
            let inst = &cert.recovery[slot][w];
            if inst.inputs() != med.as_slice() || inst.outputs() != gd_out.as_slice() {
                return Err(Error::shape(
                    "recovery instruments must map the mediating system to the target output",
                ));
            }
            let mut branch: Vec<DMatrix<Complex64>> =
                inst.maps.iter().map(|m| m.choi.mat.clone()).collect();
            branch.resize(n_max, zero_mat.clone());
            let built = build_post(&gd_out, &shape.outputs, &mem, &branch)?;
            for y in 0..n_max {
                row[j * n_max + y] = Some(built.clone());
            }
        }
        post.push(row.into_iter().map(|o| o.unwrap()).collect::<Vec<_>>());
    }

    let n_x0 = cert.mu.out_dim;
    let mut announce = StochasticMatrix::uniform(
        n_max * n_b,
        vec![n_j, n_w, shape.n_programs, shape.n_outcomes, 1],
    );
    for j in 0..n_j {
        for w in 0..n_w {
            for i in 0..shape.n_programs {
                for x in 0..shape.n_outcomes {
                    let row = announce.row_mut(&[j, w, i, x, 0]);
                    row.fill(0.0);
                    if j == j0 {
                        for y in 0..n_x0.min(n_max) {
                            row[y * n_b + j0 * n_max + y] = cert.mu.get(y, &[w]);
                        }
                    } else {
                        row[j * n_max] = 1.0;
                    }
                }
            }
        }
    }

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
        choose: StochasticMatrix::deterministic(shape.n_programs, vec![n_j, n_w], |_| 0)?,
        n_ii_memory: 1,
        announce,
        n_backward: n_b,
        post,
        guess,
    })
}

/// Outcome of the composition-replay identity behind utility monotonicity.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonotonicityReport {
    /// Game value of the transformed resource, scored directly.
    pub value: f64,
    /// The same value through the composed protocol: the identity protocol
    /// of the image chained after the transformation and applied to the
    /// original resource.
    pub replay: f64,
    pub residual: f64,
    pub ok: bool,
}

/// Checks that playing a transformed resource directly and replaying it
/// through protocol composition give the same game value.
///
/// A free transformation cannot create utility: any strategy for the
/// transformed resource is also a strategy for the original one, obtained
/// by composing protocols. This is that argument instantiated at the
/// neutral strategy; the two values must agree up to numerical error.
pub fn monotonicity_check(
    t: &FreeProtocol,
    pi: &ProgrammableInstrument,
    game: &GuessingGame,
    tol: f64,
) -> Result<MonotonicityReport> {
    let image = apply_protocol(t, pi)?;
    let value = game.value_of(&image)?;
    let via_image = identity_protocol(&image, t.framework)?;
    let composed = compose_protocols(&via_image, t)?;
    let replay = game.value_of(&apply_protocol(&composed, pi)?)?;
    let residual = (replay - value).abs();
    Ok(MonotonicityReport {
        value,
        replay,
        residual,
        ok: residual <= tol,
    })
}

/// Value a given free resource earns on a game under the canonical
/// threshold protocol for its framework.
///
/// The canonical protocol prepares its own input and discards the
/// resource's output, so for genuinely free resources the replayed value is
/// the same number regardless of which free resource is plugged in; this is
/// the equivalence the acceptance suite checks pairwise.
pub fn free_utility_replay(
    game: &GuessingGame,
    framework: Framework,
    resource: &ProgrammableInstrument,
    cfg: &RunConfig,
) -> Result<f64> {
    let shape = ResourceShape::of(resource)?;
    let (proto, _, _) = threshold_protocol(game, framework, cfg, &shape)?;
    game.value_of(&apply_protocol(&proto, resource)?)
}

/// Random valid free protocol for property tests: a two-message, q-shaped
/// protocol whose game ports mirror the resource's own ports, so self-games
/// of equally shaped families can score the transformed resource.
///
/// The protocol is q-shaped (channel repairs, player II announcing) in
/// every framework; that shape is valid in all three and is the one
/// admitted as the inner factor of an `ex` composition.
pub fn random_protocol(
    pi: &ProgrammableInstrument,
    framework: Framework,
    seed: u64,
) -> Result<FreeProtocol> {
    let shape = ResourceShape::of(pi)?;
    let gd_in = shape.inputs.clone();
    let gd_out = shape.outputs.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let taken = label_names(&gd_in, &gd_out, &shape);
    let mem = fresh_labels(&taken, "mem", &[2]);

    let n_w = 2;
    let n_j = shape.n_programs;
    let n_z = shape.n_outcomes;
    let n_b = match framework {
        Framework::C => 1,
        _ => 2,
    };

    let mut pre_outs = shape.inputs.clone();
    pre_outs.extend(mem.iter().cloned());
    let pre = random_multi_instrument(&mut rng, &gd_in, &pre_outs, n_w)?;

    let mut post_ins = shape.outputs.clone();
    post_ins.extend(mem.iter().cloned());
    let mut post = Vec::with_capacity(n_w);
    for _ in 0..n_w {
        let mut row = Vec::with_capacity(n_b);
        for _ in 0..n_b {
            row.push(random_multi_instrument(&mut rng, &post_ins, &gd_out, 1)?);
        }
        post.push(row);
    }

    let proto = FreeProtocol {
        framework,
        pre,
        memory: mem,
        choose: fixtures::random_stochastic(&mut rng, shape.n_programs, vec![n_j, n_w]),
        n_ii_memory: 1,
        announce: fixtures::random_stochastic(
            &mut rng,
            n_z * n_b,
            vec![n_j, n_w, shape.n_programs, shape.n_outcomes, 1],
        ),
        n_backward: n_b,
        post,
        guess: vec![GuessSource::PlayerII; n_j],
    };
    proto.validate(1e-9)?;
    Ok(proto)
}

/// Random instrument between multi-system ports, built by generating one on
/// fused single systems and re-reading the Choi blocks on the split labels.
fn random_multi_instrument(
    rng: &mut ChaCha8Rng,
    ins: &[SystemLabel],
    outs: &[SystemLabel],
    n_outcomes: usize,
) -> Result<Instrument> {
    let d_in: usize = ins.iter().map(|s| s.dim).product();
    let d_out: usize = outs.iter().map(|s| s.dim).product();
    let fused = fixtures::random_instrument(
        rng,
        SystemLabel::new("fused-in", d_in),
        SystemLabel::new("fused-out", d_out),
        n_outcomes,
    )?;
    let mut sys: Vec<SystemLabel> = outs.to_vec();
    sys.extend(decorate(ins));
    let maps = fused
        .maps
        .iter()
        .map(|m| {
            CpMap::new(
                ins.to_vec(),
                outs.to_vec(),
                crate::tensor::HermitianBlock::new(sys.clone(), m.choi.mat.clone())?,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Instrument::new(fused.outcomes.clone(), maps)
}
