//! Named example families used across tests, examples and the CLI, plus
//! seeded random generators for states, channels and instruments. Everything
//! here is deterministic given the seed.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::qobjects::cpmap::CpMap;
use crate::qobjects::instrument::Instrument;
use crate::qobjects::povm::Povm;
use crate::qobjects::programmable::ProgrammableInstrument;
use crate::qobjects::stochastic::StochasticMatrix;
use crate::tensor::{HermitianBlock, StateVector, SystemLabel};

pub fn qubit(name: &str) -> SystemLabel {
    SystemLabel::new(name, 2)
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Projectors onto the Z eigenbasis.
pub fn z_projectors() -> [DMatrix<Complex64>; 2] {
    [
        DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]),
        DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]),
    ]
}

/// Projectors onto the X eigenbasis `|+->`.
pub fn x_projectors() -> [DMatrix<Complex64>; 2] {
    [
        DMatrix::from_row_slice(2, 2, &[c(0.5, 0.0), c(0.5, 0.0), c(0.5, 0.0), c(0.5, 0.0)]),
        DMatrix::from_row_slice(
            2,
            2,
            &[c(0.5, 0.0), c(-0.5, 0.0), c(-0.5, 0.0), c(0.5, 0.0)],
        ),
    ]
}

/// Lueders instrument of the sharp X measurement on a qubit.
pub fn lueders_x(input: &str, output: &str) -> Result<Instrument> {
    let maps = x_projectors()
        .iter()
        .map(|p| CpMap::from_kraus(vec![qubit(input)], vec![qubit(output)], &[p.clone()]))
        .collect::<Result<Vec<_>>>()?;
    Instrument::new(vec!["+".into(), "-".into()], maps)
}

/// Lueders instrument of the sharp Z measurement on a qubit.
pub fn lueders_z(input: &str, output: &str) -> Result<Instrument> {
    let maps = z_projectors()
        .iter()
        .map(|p| CpMap::from_kraus(vec![qubit(input)], vec![qubit(output)], &[p.clone()]))
        .collect::<Result<Vec<_>>>()?;
    Instrument::new(vec!["0".into(), "1".into()], maps)
}

/// Identity channel as a one-outcome instrument.
pub fn id_instrument(input: &str, output: &str) -> Result<Instrument> {
    let k = DMatrix::identity(2, 2);
    let map = CpMap::from_kraus(vec![qubit(input)], vec![qubit(output)], &[k])?;
    Ok(Instrument::from_channel(map))
}

/// Constant channel that discards the input and prepares `|k>`.
pub fn prepare_qubit(input: &str, output: &str, k: usize) -> Result<Instrument> {
    let basis = StateVector::basis(qubit(output), k)?;
    let map = CpMap::prepare(vec![qubit(input)], &basis.outer())?;
    Ok(Instrument::from_channel(map))
}

/// Two copies of the identity channel. Classically compatible (the programs
/// are equal) but not parallel compatible (that would clone).
pub fn pair_id() -> Result<ProgrammableInstrument> {
    ProgrammableInstrument::new(
        vec!["id-1".into(), "id-2".into()],
        vec![id_instrument("A", "B")?, id_instrument("A", "B")?],
    )
}

/// Two distinct constant channels. Parallel compatible (prepare both
/// outputs) but classically incompatible (unequal channels).
pub fn pair_const() -> Result<ProgrammableInstrument> {
    ProgrammableInstrument::new(
        vec!["prep-0".into(), "prep-1".into()],
        vec![prepare_qubit("A", "B", 0)?, prepare_qubit("A", "B", 1)?],
    )
}

/// Two independent random qubit channels; q-compatible like every channel
/// family, classically incompatible with probability one.
pub fn channels_rand(seed: u64) -> Result<ProgrammableInstrument> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c1 = random_channel(&mut rng, qubit("A"), qubit("B"))?;
    let c2 = random_channel(&mut rng, qubit("A"), qubit("B"))?;
    ProgrammableInstrument::new(
        vec!["rand-1".into(), "rand-2".into()],
        vec![Instrument::from_channel(c1), Instrument::from_channel(c2)],
    )
}

/// Identity channel plus the two sharp Lueders instruments. The identity
/// program excludes nothing, so the family is non-exclusive, yet it is not
/// q-compatible: the induced POVMs of the X and Z branches are sharp and
/// jointly unmeasurable.
pub fn triple_excl() -> Result<ProgrammableInstrument> {
    ProgrammableInstrument::new(
        vec!["id".into(), "lueders-x".into(), "lueders-z".into()],
        vec![
            id_instrument("A", "B")?,
            lueders_x("A", "B")?,
            lueders_z("A", "B")?,
        ],
    )
}

/// Smeared X and Z measurements `eta P + (1-eta) I/2` on one qubit. Jointly
/// measurable exactly for `eta <= 1/sqrt(2)`.
pub fn povm_xz(input: &str, eta: f64) -> Result<[Povm; 2]> {
    let half_id = DMatrix::identity(2, 2) * c(0.5 * (1.0 - eta), 0.0);
    let mk = |projs: [DMatrix<Complex64>; 2], labels: [&str; 2]| -> Result<Povm> {
        let effects = projs
            .iter()
            .map(|p| {
                HermitianBlock::new(vec![qubit(input)], p * c(eta, 0.0) + half_id.clone())
            })
            .collect::<Result<Vec<_>>>()?;
        Povm::new(labels.iter().map(|s| s.to_string()).collect(), effects)
    };
    Ok([
        mk(x_projectors(), ["+", "-"])?,
        mk(z_projectors(), ["0", "1"])?,
    ])
}

/// A family that is classically compatible by construction: a random mother
/// instrument post-processed through random stochastic tables.
pub fn classical_free(seed: u64, n_programs: usize, n_outcomes: usize) -> Result<ProgrammableInstrument> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mother = random_instrument(&mut rng, qubit("A"), qubit("B"), 3)?;
    let mut instruments = Vec::with_capacity(n_programs);
    for _ in 0..n_programs {
        let mu = random_stochastic(&mut rng, n_outcomes, vec![3]);
        instruments.push(mother.post_process_classical(&mu)?);
    }
    let programs = (0..n_programs).map(|i| format!("classical-{i}")).collect();
    ProgrammableInstrument::new(programs, instruments)
}

/// One-program family whose only member discards the input and prepares
/// `|0>`. Free in every framework.
pub fn trivial_resource() -> Result<ProgrammableInstrument> {
    ProgrammableInstrument::new(vec!["trivial".into()], vec![prepare_qubit("A", "B", 0)?])
}

/// Complex Ginibre matrix with iid standard normal entries.
pub fn ginibre(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        // Box-Muller
        let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
        let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let r = (-2.0 * u1.ln()).sqrt();
        c(r * u2.cos(), r * u2.sin())
    })
}

/// Haar-distributed unitary via QR of a Ginibre matrix.
pub fn random_unitary(rng: &mut ChaCha8Rng, dim: usize) -> DMatrix<Complex64> {
    let g = ginibre(rng, dim, dim);
    g.qr().q()
}

/// Random full-rank density operator.
pub fn random_density(rng: &mut ChaCha8Rng, label: SystemLabel) -> Result<HermitianBlock> {
    let d = label.dim;
    let g = ginibre(rng, d, d);
    let mut m = &g * g.adjoint();
    let tr = m.trace().re;
    m /= c(tr, 0.0);
    HermitianBlock::new(vec![label], m)
}

/// Random channel from a Stinespring isometry with environment dimension
/// equal to the output dimension.
pub fn random_channel(
    rng: &mut ChaCha8Rng,
    input: SystemLabel,
    output: SystemLabel,
) -> Result<CpMap> {
    let (din, dout) = (input.dim, output.dim);
    let denv = dout;
    let g = ginibre(rng, dout * denv, din);
    let v = g.qr().q();
    let kraus: Vec<DMatrix<Complex64>> = (0..denv)
        .map(|e| DMatrix::from_fn(dout, din, |b, a| v[(b * denv + e, a)]))
        .collect();
    CpMap::from_kraus(vec![input], vec![output], &kraus)
}

/// Random instrument: a Stinespring isometry whose environment carries the
/// outcome index and one extra hidden leg.
pub fn random_instrument(
    rng: &mut ChaCha8Rng,
    input: SystemLabel,
    output: SystemLabel,
    n_outcomes: usize,
) -> Result<Instrument> {
    let (din, dout) = (input.dim, output.dim);
    let dhid = 2usize;
    let g = ginibre(rng, dout * n_outcomes * dhid, din);
    let v = g.qr().q();
    let mut maps = Vec::with_capacity(n_outcomes);
    for w in 0..n_outcomes {
        let kraus: Vec<DMatrix<Complex64>> = (0..dhid)
            .map(|h| {
                DMatrix::from_fn(dout, din, |b, a| v[((b * n_outcomes + w) * dhid + h, a)])
            })
            .collect();
        maps.push(CpMap::from_kraus(
            vec![input.clone()],
            vec![output.clone()],
            &kraus,
        )?);
    }
    Instrument::new((0..n_outcomes).map(|w| w.to_string()).collect(), maps)
}

/// Random POVM from a random instrument's statistics.
pub fn random_povm(rng: &mut ChaCha8Rng, label: SystemLabel, n_outcomes: usize) -> Result<Povm> {
    random_instrument(rng, label.clone(), label, n_outcomes)?.induced_povm()
}

/// Random conditional probability table with Dirichlet-like rows.
pub fn random_stochastic(
    rng: &mut ChaCha8Rng,
    out_dim: usize,
    cond_dims: Vec<usize>,
) -> StochasticMatrix {
    let mut m = StochasticMatrix::uniform(out_dim, cond_dims.clone());
    let rows: usize = cond_dims.iter().product::<usize>().max(1);
    let mut idx = vec![0usize; cond_dims.len()];
    for row in 0..rows {
        crate::qobjects::stochastic::decode_row(row, &cond_dims, &mut idx);
        let mut vals: Vec<f64> = (0..out_dim)
            .map(|_| -f64::ln(rng.gen_range(f64::EPSILON..1.0)))
            .collect();
        let sum: f64 = vals.iter().sum();
        for v in vals.iter_mut() {
            *v /= sum;
        }
        for (y, v) in vals.iter().enumerate() {
            m.set(y, &idx, *v);
        }
    }
    m
}

/// Random uniform-output programmable instrument.
pub fn random_programmable(
    rng: &mut ChaCha8Rng,
    input: SystemLabel,
    output: SystemLabel,
    n_programs: usize,
    n_outcomes: usize,
) -> Result<ProgrammableInstrument> {
    let instruments = (0..n_programs)
        .map(|_| random_instrument(rng, input.clone(), output.clone(), n_outcomes))
        .collect::<Result<Vec<_>>>()?;
    let programs = (0..n_programs).map(|i| format!("p{i}")).collect();
    ProgrammableInstrument::new(programs, instruments)
}
