use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;

const TOL: f64 = 1e-10;

fn lab(name: &str, dim: usize) -> SystemLabel {
    SystemLabel::new(name, dim)
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_matrix(r: &mut ChaCha8Rng, label: &str, dim: usize) -> HermitianBlock {
    let mat = DMatrix::from_fn(dim, dim, |_, _| {
        Complex64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0))
    });
    HermitianBlock::new(vec![lab(label, dim)], mat).unwrap()
}

fn random_hermitian(r: &mut ChaCha8Rng, label: &str, dim: usize) -> HermitianBlock {
    let mut m = random_matrix(r, label, dim);
    m.hermitize();
    m
}

#[test]
fn kron_trace_is_multiplicative() {
    let mut r = rng(1);
    let a = random_matrix(&mut r, "A", 3);
    let b = random_matrix(&mut r, "B", 2);
    let ab = a.kron(&b).unwrap();
    assert_eq!(ab.dim(), 6);
    let lhs = ab.trace();
    let rhs = a.trace() * b.trace();
    assert!((lhs - rhs).norm() < TOL);
}

#[test]
fn kron_rejects_duplicate_labels() {
    let mut r = rng(2);
    let a = random_matrix(&mut r, "A", 2);
    let b = random_matrix(&mut r, "A", 2);
    assert!(matches!(a.kron(&b), Err(crate::Error::DuplicateLabel(_))));
}

#[test]
fn partial_trace_of_product_factors() {
    let mut r = rng(3);
    let a = random_matrix(&mut r, "A", 3);
    let b = random_matrix(&mut r, "B", 4);
    let ab = a.kron(&b).unwrap();
    let got = ab.partial_trace(&["B"]).unwrap();
    let want = a.scale(1.0);
    let tb = b.trace();
    let mut scaled = want.clone();
    scaled.mat *= tb;
    assert!(got.max_abs_diff(&scaled) < TOL);
    // tracing out A keeps B in place
    let got_b = ab.partial_trace(&["A"]).unwrap();
    let mut scaled_b = b.clone();
    scaled_b.mat *= a.trace();
    assert!(got_b.max_abs_diff(&scaled_b) < TOL);
}

#[test]
fn partial_trace_duality_with_embedding() {
    // <X (x) I, M> = <X, Tr_B M> for Hermitian X on the kept factor.
    let mut r = rng(4);
    let x = random_hermitian(&mut r, "A", 3);
    let mut m = random_matrix(&mut r, "A", 3)
        .kron(&random_matrix(&mut r, "B", 2))
        .unwrap();
    // make M generic (non-product): add a second product term
    let m2 = random_matrix(&mut r, "A", 3)
        .kron(&random_matrix(&mut r, "B", 2))
        .unwrap();
    m = m.add(&m2).unwrap();
    m.hermitize();
    let id_b = HermitianBlock::identity(vec![lab("B", 2)]);
    let emb = x.kron(&id_b).unwrap();
    let lhs = emb.inner(&m);
    let rhs = x.inner(&m.partial_trace(&["B"]).unwrap());
    assert!((lhs - rhs).abs() < TOL);
}

#[test]
fn partial_trace_all_and_none() {
    let mut r = rng(5);
    let a = random_matrix(&mut r, "A", 2);
    let b = random_matrix(&mut r, "B", 3);
    let ab = a.kron(&b).unwrap();
    let none = ab.partial_trace(&[]).unwrap();
    assert!(none.max_abs_diff(&ab) < TOL);
    let all = ab.partial_trace(&["A", "B"]).unwrap();
    assert_eq!(all.dim(), 1);
    assert!((all.mat[(0, 0)] - ab.trace()).norm() < TOL);
}

#[test]
fn partial_trace_unknown_label_errors() {
    let mut r = rng(6);
    let a = random_matrix(&mut r, "A", 2);
    match a.partial_trace(&["Q"]) {
        Err(crate::Error::UnknownLabel(n)) => assert_eq!(n, "Q"),
        other => panic!("expected UnknownLabel, got {other:?}"),
    }
}

#[test]
fn partial_transpose_is_involution_and_matches_full() {
    let mut r = rng(7);
    let m = random_matrix(&mut r, "A", 2)
        .kron(&random_matrix(&mut r, "B", 3))
        .unwrap();
    let pt = m.partial_transpose(&["B"]).unwrap();
    let back = pt.partial_transpose(&["B"]).unwrap();
    assert!(back.max_abs_diff(&m) < TOL);
    let full = m.partial_transpose(&["A", "B"]).unwrap();
    assert!(full.max_abs_diff(&m.transpose()) < TOL);
}

#[test]
fn partial_transpose_on_product_acts_on_one_factor() {
    let mut r = rng(8);
    let a = random_matrix(&mut r, "A", 2);
    let b = random_matrix(&mut r, "B", 3);
    let ab = a.kron(&b).unwrap();
    let want = a.kron(&b.transpose()).unwrap();
    let got = ab.partial_transpose(&["B"]).unwrap();
    assert!(got.max_abs_diff(&want) < TOL);
}

#[test]
fn pinch_zeroes_cross_sector_coherences() {
    let mut r = rng(9);
    let m = random_matrix(&mut r, "A", 2)
        .kron(&random_matrix(&mut r, "B", 3))
        .unwrap();
    let p = m.pinch("A").unwrap();
    // sector structure: A-index equal on row and column survives
    for i in 0..6 {
        for j in 0..6 {
            let (ra, ca) = (i / 3, j / 3);
            if ra == ca {
                assert!((p.mat[(i, j)] - m.mat[(i, j)]).norm() < TOL);
            } else {
                assert_eq!(p.mat[(i, j)], Complex64::new(0.0, 0.0));
            }
        }
    }
    // idempotent and trace-preserving
    let pp = p.pinch("A").unwrap();
    assert!(pp.max_abs_diff(&p) < TOL);
    assert!((p.trace() - m.trace()).norm() < TOL);
}

#[test]
fn permute_roundtrip_and_kron_swap() {
    let mut r = rng(10);
    let a = random_matrix(&mut r, "A", 2);
    let b = random_matrix(&mut r, "B", 3);
    let ab = a.kron(&b).unwrap();
    let ba = b.kron(&a).unwrap();
    let swapped = ab.permute_systems(&["B", "A"]).unwrap();
    assert!(swapped.max_abs_diff(&ba) < TOL);
    let back = swapped.permute_systems(&["A", "B"]).unwrap();
    assert!(back.max_abs_diff(&ab) < TOL);
}

#[test]
fn permute_interacts_with_partial_trace() {
    let mut r = rng(11);
    let m = random_matrix(&mut r, "A", 2)
        .kron(&random_matrix(&mut r, "B", 2))
        .unwrap()
        .kron(&random_matrix(&mut r, "C", 2))
        .unwrap();
    let direct = m.partial_trace(&["B"]).unwrap();
    let via_perm = m
        .permute_systems(&["B", "C", "A"])
        .unwrap()
        .partial_trace(&["B"])
        .unwrap()
        .permute_systems(&["A", "C"])
        .unwrap();
    assert!(direct.max_abs_diff(&via_perm) < TOL);
}

#[test]
fn max_entangled_properties() {
    let om = HermitianBlock::max_entangled(lab("O", 3), lab("I", 3)).unwrap();
    assert!((om.trace() - Complex64::new(3.0, 0.0)).norm() < TOL);
    // rank one with eigenvalue d
    let e = om.eig_hermitian();
    assert!((e.values[e.values.len() - 1] - 3.0).abs() < TOL);
    assert!(e.values[e.values.len() - 2].abs() < TOL);
    // both marginals are the identity
    let mo = om.partial_trace(&["I"]).unwrap();
    assert!(mo.max_abs_diff(&HermitianBlock::identity(vec![lab("O", 3)])) < TOL);
    let mi = om.partial_trace(&["O"]).unwrap();
    assert!(mi.max_abs_diff(&HermitianBlock::identity(vec![lab("I", 3)])) < TOL);
}

#[test]
fn bell_state_matches_scaled_omega() {
    let phi = bell_phi_plus(lab("A", 2), lab("B", 2)).unwrap();
    let proj = phi.outer();
    let om = HermitianBlock::max_entangled(lab("A", 2), lab("B", 2)).unwrap();
    assert!(proj.max_abs_diff(&om.scale(0.5)) < TOL);
}

#[test]
fn eig_reconstructs_and_sorts() {
    let mut r = rng(12);
    let h = random_hermitian(&mut r, "A", 5);
    let e = h.eig_hermitian();
    for k in 1..5 {
        assert!(e.values[k] >= e.values[k - 1]);
    }
    let mut rec = DMatrix::<Complex64>::zeros(5, 5);
    for k in 0..5 {
        let v = e.vectors.column(k);
        rec += &v * v.adjoint() * Complex64::new(e.values[k], 0.0);
    }
    let err = (&h.mat - &rec).norm();
    assert!(err < TOL, "reconstruction error {err:.3e}");
}

#[test]
fn eig_degenerate_projectors_are_stable() {
    // spectrum {1, 1, 4}; compare spectral projectors, not eigenvectors
    let mut r = rng(13);
    let u_src = random_matrix(&mut r, "A", 3);
    let q = u_src.mat.qr().q();
    let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
        Complex64::new(1.0, 0.0),
        Complex64::new(1.0, 0.0),
        Complex64::new(4.0, 0.0),
    ]));
    let m = &q * diag * q.adjoint();
    let h = HermitianBlock::new(vec![lab("A", 3)], m).unwrap();
    let e = h.eig_hermitian();
    // projector onto the degenerate pair
    let mut p = DMatrix::<Complex64>::zeros(3, 3);
    for k in 0..2 {
        let v = e.vectors.column(k);
        p += &v * v.adjoint();
    }
    // independent construction: P = (4 I - M) / 3 since M = P + 4 (I - P)
    let want = (DMatrix::<Complex64>::identity(3, 3) * Complex64::new(4.0, 0.0) - &h.mat)
        / Complex64::new(3.0, 0.0);
    assert!((p - want).norm() < 1e-9);
}

#[test]
fn project_psd_clips_and_fixes() {
    let mut r = rng(14);
    let h = random_hermitian(&mut r, "A", 4);
    let p = h.project_psd();
    assert!(p.lambda_min() > -TOL);
    // fixed point on PSD input
    let pp = p.project_psd();
    assert!(pp.max_abs_diff(&p) < 1e-9);
    // optimality on a diagonal example: clip(-2, 3) = (0, 3)
    let d = HermitianBlock::new(
        vec![lab("A", 2)],
        DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            Complex64::new(-2.0, 0.0),
            Complex64::new(3.0, 0.0),
        ])),
    )
    .unwrap();
    let pd = d.project_psd();
    assert!((pd.mat[(0, 0)]).norm() < TOL);
    assert!((pd.mat[(1, 1)] - Complex64::new(3.0, 0.0)).norm() < TOL);
}

#[test]
fn spectral_map_computes_inverse_sqrt() {
    let mut r = rng(15);
    let mut h = random_hermitian(&mut r, "A", 3);
    // make strictly positive
    h = h
        .matmul(&h.clone())
        .unwrap()
        .add(&HermitianBlock::identity(vec![lab("A", 3)]).scale(0.5))
        .unwrap();
    let inv_sqrt = h.spectral_map(|x| if x > 0.0 { x.powf(-0.5) } else { 0.0 });
    let prod = inv_sqrt
        .matmul(&h)
        .unwrap()
        .matmul(&inv_sqrt)
        .unwrap();
    assert!(prod.max_abs_diff(&HermitianBlock::identity(vec![lab("A", 3)])) < 1e-9);
}

#[test]
fn json_roundtrip_is_bit_exact() {
    let vals = [
        1.0 / 3.0,
        -0.0,
        1e-17,
        2.0_f64.powi(-700),
        std::f64::consts::PI,
        1e300,
    ];
    let mut r = rng(16);
    let n = 3usize;
    let mat = DMatrix::from_fn(n, n, |_, _| {
        Complex64::new(
            vals[r.gen_range(0..vals.len())],
            vals[r.gen_range(0..vals.len())],
        )
    });
    let b = HermitianBlock::new(vec![lab("A", 3)], mat).unwrap();
    let s = b.to_json_string().unwrap();
    let b2 = HermitianBlock::from_json_str(&s).unwrap();
    assert_eq!(b.systems, b2.systems);
    for (x, y) in b.mat.iter().zip(b2.mat.iter()) {
        assert_eq!(x.re.to_bits(), y.re.to_bits());
        assert_eq!(x.im.to_bits(), y.im.to_bits());
    }
}

#[test]
fn json_rejects_bad_shapes() {
    let s = r#"{"systems":[{"name":"A","dim":2}],"re":[[1.0,0.0]],"im":[[0.0,0.0]]}"#;
    assert!(HermitianBlock::from_json_str(s).is_err());
}

#[test]
fn block_constructor_validates() {
    let m = DMatrix::<Complex64>::zeros(3, 3);
    assert!(HermitianBlock::new(vec![lab("A", 2)], m.clone()).is_err());
    assert!(HermitianBlock::new(vec![lab("A", 3), lab("A", 1)], m).is_err());
}

#[test]
fn hermiticity_check_reports_deviation() {
    let mut m = DMatrix::<Complex64>::identity(2, 2);
    m[(0, 1)] = Complex64::new(0.0, 1e-3);
    let b = HermitianBlock::new(vec![lab("A", 2)], m).unwrap();
    assert!(b.check_hermitian(1e-9).is_err());
    assert!(b.check_hermitian(1e-2).is_ok());
}

mod properties {
    use super::*;
    use proptest::prelude::*;

    fn arb_dims() -> impl Strategy<Value = (usize, usize)> {
        (1usize..4, 1usize..4)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn trace_after_partial_trace_is_full_trace((da, db) in arb_dims(), seed in 0u64..1_000) {
            let mut r = rng(seed);
            let m = random_matrix(&mut r, "A", da).kron(&random_matrix(&mut r, "B", db)).unwrap();
            let t1 = m.partial_trace(&["A"]).unwrap().trace();
            let t2 = m.partial_trace(&["B"]).unwrap().trace();
            let t = m.trace();
            prop_assert!((t1 - t).norm() < TOL);
            prop_assert!((t2 - t).norm() < TOL);
        }

        #[test]
        fn partial_trace_is_linear((da, db) in arb_dims(), seed in 0u64..1_000) {
            let mut r = rng(seed.wrapping_add(77));
            let m1 = random_matrix(&mut r, "A", da).kron(&random_matrix(&mut r, "B", db)).unwrap();
            let m2 = random_matrix(&mut r, "A", da).kron(&random_matrix(&mut r, "B", db)).unwrap();
            let s = m1.add(&m2).unwrap();
            let lhs = s.partial_trace(&["B"]).unwrap();
            let rhs = m1.partial_trace(&["B"]).unwrap().add(&m2.partial_trace(&["B"]).unwrap()).unwrap();
            prop_assert!(lhs.max_abs_diff(&rhs) < TOL);
        }

        #[test]
        fn pinch_is_contractive_in_frobenius((da, db) in arb_dims(), seed in 0u64..1_000) {
            let mut r = rng(seed.wrapping_add(154));
            let m = random_matrix(&mut r, "A", da).kron(&random_matrix(&mut r, "B", db)).unwrap();
            let p = m.pinch("A").unwrap();
            prop_assert!(p.norm_fro() <= m.norm_fro() + TOL);
        }
    }
}
