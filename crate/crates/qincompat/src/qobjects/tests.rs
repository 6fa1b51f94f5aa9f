use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::tensor::{HermitianBlock, StateVector, SystemLabel};

const TOL: f64 = 1e-10;
const VTOL: f64 = 1e-9;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Oracle: act with an explicit Kraus family directly on a matrix.
fn kraus_apply(kraus: &[DMatrix<Complex64>], rho: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let mut out = DMatrix::zeros(kraus[0].nrows(), kraus[0].nrows());
    for k in kraus {
        out += k * rho * k.adjoint();
    }
    out
}

fn random_kraus_channel(seed: u64, din: usize, dout: usize) -> Vec<DMatrix<Complex64>> {
    let mut r = rng(seed);
    let g = ginibre(&mut r, dout * dout, din);
    let v = g.qr().q();
    (0..dout)
        .map(|e| DMatrix::from_fn(dout, din, |b, a| v[(b * dout + e, a)]))
        .collect()
}

#[test]
fn apply_matches_kraus_oracle() {
    let kraus = random_kraus_channel(21, 3, 2);
    let map = CpMap::from_kraus(
        vec![SystemLabel::new("A", 3)],
        vec![SystemLabel::new("B", 2)],
        &kraus,
    )
    .unwrap();
    map.validate_channel(VTOL).unwrap();
    let mut r = rng(22);
    for _ in 0..5 {
        let rho = random_density(&mut r, SystemLabel::new("A", 3)).unwrap();
        let got = map.apply(&rho).unwrap();
        let want = kraus_apply(&kraus, &rho.mat);
        assert!((got.mat.clone() - want).norm() < TOL);
        assert!((got.trace().re - 1.0).abs() < TOL);
    }
}

#[test]
fn choi_of_identity_is_omega() {
    let id = CpMap::identity(vec![SystemLabel::new("A", 3)]).unwrap();
    let om = HermitianBlock::max_entangled(
        SystemLabel::new("A", 3),
        SystemLabel::new("A@in", 3),
    )
    .unwrap();
    assert!(id.choi.max_abs_diff(&om) < TOL);
}

#[test]
fn compose_matches_sequential_action() {
    let k1 = random_kraus_channel(31, 2, 3);
    let k2 = random_kraus_channel(32, 3, 2);
    let f = CpMap::from_kraus(
        vec![SystemLabel::new("A", 2)],
        vec![SystemLabel::new("C", 3)],
        &k1,
    )
    .unwrap();
    let g = CpMap::from_kraus(
        vec![SystemLabel::new("C", 3)],
        vec![SystemLabel::new("B", 2)],
        &k2,
    )
    .unwrap();
    let gf = CpMap::compose(&g, &f).unwrap();
    gf.validate_channel(VTOL).unwrap();
    let mut r = rng(33);
    for _ in 0..5 {
        let rho = random_density(&mut r, SystemLabel::new("A", 2)).unwrap();
        let got = gf.apply(&rho).unwrap();
        let want = kraus_apply(&k2, &kraus_apply(&k1, &rho.mat));
        assert!((got.mat.clone() - want).norm() < TOL);
    }
}

#[test]
fn compose_handles_recycled_labels() {
    // both maps A -> A; mid systems share the user label
    let mut r = rng(34);
    let f = random_channel(&mut r, qubit("A"), qubit("A")).unwrap();
    let g = random_channel(&mut r, qubit("A"), qubit("A")).unwrap();
    let gf = CpMap::compose(&g, &f).unwrap();
    gf.validate_channel(VTOL).unwrap();
    let rho = random_density(&mut r, qubit("A")).unwrap();
    let got = gf.apply(&rho).unwrap();
    let want = g.apply(&f.apply(&rho).unwrap()).unwrap();
    assert!(got.max_abs_diff(&want) < TOL);
}

#[test]
fn compose_rejects_wiring_mismatch() {
    let mut r = rng(35);
    let f = random_channel(&mut r, qubit("A"), qubit("B")).unwrap();
    let g = random_channel(&mut r, qubit("C"), qubit("D")).unwrap();
    assert!(CpMap::compose(&g, &f).is_err());
}

#[test]
fn effect_reproduces_output_trace() {
    let mut r = rng(36);
    let inst = random_instrument(&mut r, qubit("A"), qubit("B"), 3).unwrap();
    let rho = random_density(&mut r, qubit("A")).unwrap();
    let povm = inst.induced_povm().unwrap();
    povm.validate(VTOL).unwrap();
    let probs = povm.probabilities(&rho).unwrap();
    let mut total = 0.0;
    for (x, m) in inst.maps.iter().enumerate() {
        let out = m.apply(&rho).unwrap();
        assert!((out.trace().re - probs[x]).abs() < TOL);
        total += probs[x];
    }
    assert!((total - 1.0).abs() < TOL);
}

#[test]
fn extended_channel_acts_trivially_on_ancilla() {
    let mut r = rng(37);
    let f = random_channel(&mut r, qubit("A"), qubit("B")).unwrap();
    let ext = f.extended_channel(&SystemLabel::new("M", 3)).unwrap();
    ext.validate_channel(VTOL).unwrap();
    let rho_a = random_density(&mut r, qubit("A")).unwrap();
    let rho_m = random_density(&mut r, SystemLabel::new("M", 3)).unwrap();
    let joint = rho_a.kron(&rho_m).unwrap();
    let got = ext.apply(&joint).unwrap();
    let want = f.apply(&rho_a).unwrap().kron(&rho_m).unwrap();
    assert!(got.max_abs_diff(&want) < TOL);
}

#[test]
fn extended_channel_preserves_entanglement_with_identity() {
    // id (x) id on half of a Bell state keeps the state
    let id = CpMap::identity(vec![qubit("A")]).unwrap();
    let ext = id.extended_channel(&qubit("R")).unwrap();
    let phi = crate::tensor::bell_phi_plus(qubit("A"), qubit("R")).unwrap();
    let rho = phi.outer();
    let got = ext.apply(&rho).unwrap();
    assert!(got.max_abs_diff(&rho) < TOL);
}

#[test]
fn tensor_of_maps_factorizes() {
    let mut r = rng(38);
    let f = random_channel(&mut r, qubit("A"), qubit("B")).unwrap();
    let g = random_channel(&mut r, SystemLabel::new("C", 3), qubit("D")).unwrap();
    let fg = f.tensor(&g).unwrap();
    fg.validate_channel(VTOL).unwrap();
    let rho = random_density(&mut r, qubit("A")).unwrap();
    let sig = random_density(&mut r, SystemLabel::new("C", 3)).unwrap();
    let got = fg.apply(&rho.kron(&sig).unwrap()).unwrap();
    let want = f
        .apply(&rho)
        .unwrap()
        .kron(&g.apply(&sig).unwrap())
        .unwrap();
    assert!(got.max_abs_diff(&want) < TOL);
}

#[test]
fn prepare_and_discard() {
    let mut r = rng(39);
    let sigma = random_density(&mut r, qubit("B")).unwrap();
    let prep = CpMap::prepare(vec![qubit("A")], &sigma).unwrap();
    prep.validate_channel(VTOL).unwrap();
    let rho = random_density(&mut r, qubit("A")).unwrap();
    assert!(prep.apply(&rho).unwrap().max_abs_diff(&sigma) < TOL);

    let disc = CpMap::discard(vec![qubit("A")]).unwrap();
    disc.validate_channel(VTOL).unwrap();
    let out = disc.apply(&rho).unwrap();
    assert_eq!(out.dim(), 1);
    assert!((out.mat[(0, 0)].re - 1.0).abs() < TOL);
}

#[test]
fn lueders_instruments_on_basis_states() {
    let lz = lueders_z("A", "B").unwrap();
    lz.validate(VTOL).unwrap();
    let zero = StateVector::basis(qubit("A"), 0).unwrap().outer();
    let out0 = lz.maps[0].apply(&zero).unwrap();
    assert!((out0.trace().re - 1.0).abs() < TOL);
    let out1 = lz.maps[1].apply(&zero).unwrap();
    assert!(out1.trace().re.abs() < TOL);

    let lx = lueders_x("A", "B").unwrap();
    lx.validate(VTOL).unwrap();
    let probs = lx.induced_povm().unwrap().probabilities(&zero).unwrap();
    assert!((probs[0] - 0.5).abs() < TOL);
    assert!((probs[1] - 0.5).abs() < TOL);
}

#[test]
fn post_process_matches_manual_mixture() {
    let mut r = rng(40);
    let inst = random_instrument(&mut r, qubit("A"), qubit("B"), 3).unwrap();
    let mu = random_stochastic(&mut r, 2, vec![3]);
    let coarse = inst.post_process_classical(&mu).unwrap();
    coarse.validate(VTOL).unwrap();
    for y in 0..2 {
        let mut want = inst.maps[0].scale(mu.get(y, &[0]));
        for x in 1..3 {
            want = want.add_scaled(&inst.maps[x], mu.get(y, &[x])).unwrap();
        }
        assert!(coarse.maps[y].choi.max_abs_diff(&want.choi) < TOL);
    }
}

#[test]
fn marginal_recovers_tensor_factors() {
    // random instrument whose 6 outcomes are declared as the product 2 x 3
    let mut r = rng(41);
    let inst = random_instrument(&mut r, qubit("A"), qubit("B"), 6).unwrap();
    let m0 = inst.marginal_instrument(&[2, 3], 0).unwrap();
    let m1 = inst.marginal_instrument(&[2, 3], 1).unwrap();
    m0.validate(VTOL).unwrap();
    m1.validate(VTOL).unwrap();
    assert_eq!(m0.n_outcomes(), 2);
    assert_eq!(m1.n_outcomes(), 3);
    // row-major: outcome lin = x0*3 + x1
    let want00 = inst.maps[0]
        .add_scaled(&inst.maps[1], 1.0)
        .unwrap()
        .add_scaled(&inst.maps[2], 1.0)
        .unwrap();
    assert!(m0.maps[0].choi.max_abs_diff(&want00.choi) < TOL);
    let want_x1_2 = inst.maps[2].add_scaled(&inst.maps[5], 1.0).unwrap();
    assert!(m1.maps[2].choi.max_abs_diff(&want_x1_2.choi) < TOL);
    // non-product declaration errors
    assert!(inst.marginal_instrument(&[4], 0).is_err());
}

#[test]
fn povm_as_instrument_keeps_statistics() {
    let mut r = rng(42);
    let povm = random_povm(&mut r, qubit("A"), 3).unwrap();
    povm.validate(VTOL).unwrap();
    let inst = povm.as_instrument().unwrap();
    inst.validate(VTOL).unwrap();
    let rho = random_density(&mut r, qubit("A")).unwrap();
    let probs = povm.probabilities(&rho).unwrap();
    for (x, m) in inst.maps.iter().enumerate() {
        let p = m.apply(&rho).unwrap().mat[(0, 0)].re;
        assert!((p - probs[x]).abs() < TOL);
    }
    let back = inst.induced_povm().unwrap();
    for (e1, e2) in povm.effects.iter().zip(back.effects.iter()) {
        assert!(e1.max_abs_diff(e2) < TOL);
    }
}

#[test]
fn povm_xz_validates_across_eta() {
    for eta in [0.0, 0.3, 1.0 / 2f64.sqrt(), 0.9, 1.0] {
        let [px, pz] = povm_xz("A", eta).unwrap();
        px.validate(VTOL).unwrap();
        pz.validate(VTOL).unwrap();
    }
}

#[test]
fn lueders_of_smeared_povm_reproduces_statistics() {
    let [px, _] = povm_xz("A", 0.6).unwrap();
    let li = px.lueders_instrument().unwrap();
    li.validate(VTOL).unwrap();
    let mut r = rng(43);
    let rho = random_density(&mut r, qubit("A")).unwrap();
    let probs = px.probabilities(&rho).unwrap();
    for (x, m) in li.maps.iter().enumerate() {
        assert!((m.apply(&rho).unwrap().trace().re - probs[x]).abs() < TOL);
    }
}

#[test]
fn named_fixtures_validate() {
    pair_id().unwrap().validate(VTOL).unwrap();
    pair_const().unwrap().validate(VTOL).unwrap();
    channels_rand(5).unwrap().validate(VTOL).unwrap();
    triple_excl().unwrap().validate(VTOL).unwrap();
    classical_free(6, 3, 2).unwrap().validate(VTOL).unwrap();
    trivial_resource().unwrap().validate(VTOL).unwrap();
}

#[test]
fn programmable_requires_common_input() {
    let i1 = id_instrument("A", "B").unwrap();
    let mut r = rng(44);
    let other = Instrument::from_channel(
        random_channel(&mut r, SystemLabel::new("C", 3), qubit("B")).unwrap(),
    );
    assert!(ProgrammableInstrument::new(vec!["a".into(), "b".into()], vec![i1, other]).is_err());
}

#[test]
fn instrument_json_roundtrip_is_bit_exact() {
    let mut r = rng(45);
    let inst = random_instrument(&mut r, qubit("A"), qubit("B"), 2).unwrap();
    let s = inst.to_json_string().unwrap();
    let back = Instrument::from_json_str(&s).unwrap();
    assert_eq!(back.outcomes, inst.outcomes);
    for (m1, m2) in inst.maps.iter().zip(back.maps.iter()) {
        assert_eq!(m1.choi.systems, m2.choi.systems);
        for (x, y) in m1.choi.mat.iter().zip(m2.choi.mat.iter()) {
            assert_eq!(x.re.to_bits(), y.re.to_bits());
            assert_eq!(x.im.to_bits(), y.im.to_bits());
        }
    }
}

#[test]
fn programmable_json_roundtrip() {
    let p = triple_excl().unwrap();
    let s = p.to_json_string().unwrap();
    let back = ProgrammableInstrument::from_json_str(&s).unwrap();
    assert_eq!(back.programs, p.programs);
    for (i1, i2) in p.instruments.iter().zip(back.instruments.iter()) {
        for (m1, m2) in i1.maps.iter().zip(i2.maps.iter()) {
            assert!(m1.choi.max_abs_diff(&m2.choi) == 0.0);
        }
    }
}

#[test]
fn random_generators_are_seed_deterministic() {
    let a = channels_rand(9).unwrap();
    let b = channels_rand(9).unwrap();
    for (i1, i2) in a.instruments.iter().zip(b.instruments.iter()) {
        for (m1, m2) in i1.maps.iter().zip(i2.maps.iter()) {
            assert!(m1.choi.max_abs_diff(&m2.choi) == 0.0);
        }
    }
    let c1 = channels_rand(10).unwrap();
    let diff = c1.instruments[0].maps[0]
        .choi
        .max_abs_diff(&a.instruments[0].maps[0].choi);
    assert!(diff > 1e-3, "different seeds should differ, got {diff:.3e}");
}

#[test]
fn random_unitary_is_unitary() {
    let mut r = rng(46);
    let u = random_unitary(&mut r, 4);
    let err = (u.adjoint() * &u - DMatrix::<Complex64>::identity(4, 4)).norm();
    assert!(err < VTOL);
}

#[test]
fn stochastic_matrix_validation() {
    assert!(StochasticMatrix::new(2, vec![2], vec![0.5, 0.5, 0.9, 0.1], VTOL).is_ok());
    assert!(StochasticMatrix::new(2, vec![2], vec![0.5, 0.6, 0.9, 0.1], VTOL).is_err());
    assert!(StochasticMatrix::new(2, vec![2], vec![-0.1, 1.1, 0.9, 0.1], VTOL).is_err());
    let det = StochasticMatrix::deterministic(3, vec![2, 2], |c| c[0] + c[1]).unwrap();
    assert_eq!(det.get(2, &[1, 1]), 1.0);
    assert_eq!(det.get(1, &[1, 0]), 1.0);
    assert_eq!(det.get(0, &[1, 0]), 0.0);
}

#[test]
fn channel_validation_catches_bad_objects() {
    let mut r = rng(47);
    let mut ch = random_channel(&mut r, qubit("A"), qubit("B")).unwrap();
    // break trace preservation
    ch.choi = ch.choi.scale(1.1);
    assert!(ch.validate_channel(VTOL).is_err());
    // break positivity
    let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
        c(1.0, 0.0),
        c(-0.05, 0.0),
        c(1.0, 0.0),
        c(0.05, 0.0),
    ]));
    let bad = CpMap::new(
        vec![qubit("A")],
        vec![qubit("B")],
        HermitianBlock::new(
            vec![qubit("B"), SystemLabel::new("A@in", 2)],
            m,
        )
        .unwrap(),
    )
    .unwrap();
    assert!(bad.validate_cp(VTOL).is_err());
}
