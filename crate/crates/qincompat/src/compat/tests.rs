use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::qobjects::fixtures::{
    channels_rand, classical_free, id_instrument, lueders_x, lueders_z, pair_const, pair_id,
    povm_xz, prepare_qubit, qubit, random_povm, triple_excl,
};
use crate::qobjects::{CpMap, Instrument, ProgrammableInstrument};

use super::*;

fn quick() -> RunConfig {
    RunConfig::quick()
}

#[test]
fn pair_id_is_classical_but_not_parallel() {
    let pi = pair_id().unwrap();
    let cfg = quick();
    let classical = check_instrument_classical(&pi, &cfg).unwrap();
    assert!(classical.is_compatible(), "{classical:?}");
    match classical.certificate().unwrap() {
        CertificateKind::Classical(cert) => {
            assert!(cert.deviation(&pi).unwrap() <= 1e-7);
            cert.validate(1e-7).unwrap();
        }
        other => panic!("unexpected certificate {other:?}"),
    }
    // Cloning the identity channel onto two slots is forbidden.
    let parallel = check_parallel(&pi, &cfg).unwrap();
    assert!(parallel.is_incompatible(), "{parallel:?}");
}

#[test]
fn pair_const_is_parallel_but_not_classical() {
    let pi = pair_const().unwrap();
    let cfg = quick();
    let parallel = check_parallel(&pi, &cfg).unwrap();
    assert!(parallel.is_compatible(), "{parallel:?}");
    match parallel.certificate().unwrap() {
        CertificateKind::Parallel(cert) => {
            assert!(cert.deviation(&pi).unwrap() <= 1e-7);
        }
        other => panic!("unexpected certificate {other:?}"),
    }
    let classical = check_instrument_classical(&pi, &cfg).unwrap();
    assert!(classical.is_incompatible(), "{classical:?}");
    match classical.witness().unwrap() {
        CompatWitness::Sdp(w) => assert!(w.trace_rhs > 0.0),
        other => panic!("unexpected witness {other:?}"),
    }
}

#[test]
fn mixed_output_systems_fail_classically_for_structural_reasons() {
    let a = Instrument::from_channel(
        CpMap::identity(vec![qubit("A")]).unwrap(),
    );
    let b = prepare_qubit("A", "B", 0).unwrap();
    let pi = ProgrammableInstrument::new(vec!["one".into(), "two".into()], vec![a, b]).unwrap();
    let v = check_instrument_classical(&pi, &quick()).unwrap();
    assert!(v.is_incompatible());
    assert!(matches!(
        v.witness().unwrap(),
        CompatWitness::Structural(_)
    ));
}

#[test]
fn q_compatibility_of_channel_pairs_is_instant() {
    let pi = channels_rand(11).unwrap();
    let cfg = quick();
    let v = check_q(&pi, &cfg).unwrap();
    assert!(v.is_compatible(), "{v:?}");
    match v.certificate().unwrap() {
        CertificateKind::Q(cert) => {
            assert!(cert.deviation(&pi).unwrap() <= 1e-7);
            cert.validate(1e-7).unwrap();
        }
        other => panic!("unexpected certificate {other:?}"),
    }
}

#[test]
fn triple_excl_fails_q_via_induced_povms_but_does_not_exclude() {
    let pi = triple_excl().unwrap();
    let cfg = quick();
    let q = check_q(&pi, &cfg).unwrap();
    assert!(q.is_incompatible(), "{q:?}");
    assert!(matches!(
        q.witness().unwrap(),
        CompatWitness::InducedPovm(_)
    ));
    let ex = check_exclusive(&pi, 0, &cfg).unwrap();
    assert!(ex.is_compatible(), "{ex:?}");
    match ex.certificate().unwrap() {
        CertificateKind::NoExclusion(cert) => {
            assert!(cert.deviation(&pi).unwrap() <= 1e-7);
            cert.validate(1e-7).unwrap();
        }
        other => panic!("unexpected certificate {other:?}"),
    }
}

#[test]
fn classical_certificates_lift_to_no_exclusion_for_any_designated() {
    let pi = classical_free(3, 3, 2).unwrap();
    let cfg = quick();
    for designated in 0..pi.n_programs() {
        let v = check_exclusive(&pi, designated, &cfg).unwrap();
        assert!(v.is_compatible(), "designated {designated}: {v:?}");
    }
}

#[test]
fn equal_instruments_never_exclude() {
    let cfg = quick();
    let lz = lueders_z("A", "B").unwrap();
    let v = excludes(&lz, &lz.clone(), &cfg).unwrap();
    assert!(v.is_compatible(), "{v:?}");
}

#[test]
fn seesaw_certifies_q_for_a_single_program() {
    let pi = ProgrammableInstrument::new(
        vec!["lz".into()],
        vec![lueders_z("A", "B").unwrap()],
    )
    .unwrap();
    let cfg = quick();
    let (cert, report) = seesaw::fit_q(&pi, &cfg).unwrap();
    let cert = cert.unwrap_or_else(|| panic!("no certificate, objective {}", report.objective));
    assert!(cert.deviation(&pi).unwrap() <= 1e-7);
}

#[test]
fn seesaw_certifies_unitarily_rotated_recovery() {
    // Designated Lueders-Z; the other program applies X after the same
    // measurement. No structural shortcut fires, yet recovery is exact:
    // re-announce the branch and rotate.
    let lz = lueders_z("A", "B").unwrap();
    let x = nalgebra::DMatrix::from_row_slice(
        2,
        2,
        &[
            num_complex::Complex64::new(0.0, 0.0),
            num_complex::Complex64::new(1.0, 0.0),
            num_complex::Complex64::new(1.0, 0.0),
            num_complex::Complex64::new(0.0, 0.0),
        ],
    );
    let flip = CpMap::from_kraus(vec![qubit("B")], vec![qubit("B")], &[x]).unwrap();
    let rotated = Instrument::new(
        lz.outcomes.clone(),
        lz.maps
            .iter()
            .map(|m| CpMap::compose(&flip, m).unwrap())
            .collect(),
    )
    .unwrap();
    let pi = ProgrammableInstrument::new(
        vec!["lz".into(), "x-after-lz".into()],
        vec![lz, rotated],
    )
    .unwrap();
    let cfg = quick();
    let v = check_exclusive(&pi, 0, &cfg).unwrap();
    assert!(v.is_compatible(), "{v:?}");
    match v.certificate().unwrap() {
        CertificateKind::NoExclusion(cert) => {
            assert!(cert.deviation(&pi).unwrap() <= 1e-7);
        }
        other => panic!("unexpected certificate {other:?}"),
    }
}

#[test]
fn povm_joint_measurability_matches_the_known_threshold_region() {
    let cfg = quick();
    let jm = check_povm_classical(&povm_xz("A", 0.60).unwrap(), &cfg).unwrap();
    assert!(jm.is_compatible(), "{jm:?}");
    match jm.certificate().unwrap() {
        CertificateKind::PovmClassical(cert) => {
            cert.validate(1e-6).unwrap();
        }
        other => panic!("unexpected certificate {other:?}"),
    }
    let not_jm = check_povm_classical(&povm_xz("A", 0.90).unwrap(), &cfg).unwrap();
    assert!(not_jm.is_incompatible(), "{not_jm:?}");
}

#[test]
fn povm_witnesses_are_sound_on_random_compatible_families() {
    // A verified witness must be nonpositive on every jointly measurable
    // pair; spot-check against parent-POVM coarse-grainings.
    let cfg = quick();
    let v = check_povm_classical(&povm_xz("A", 0.95).unwrap(), &cfg).unwrap();
    let w = match v.witness().unwrap() {
        CompatWitness::Sdp(w) => w.clone(),
        other => panic!("unexpected witness {other:?}"),
    };
    assert!(w.witness.margin > 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let parent = random_povm(&mut rng, qubit("A"), 4).unwrap();
        // Coarse-grain the parent into two binary POVMs (deterministically).
        let eff = |pick: &[usize]| {
            let mut sum = parent.effects[pick[0]].clone();
            for &k in &pick[1..] {
                sum = sum.add(&parent.effects[k]).unwrap();
            }
            sum
        };
        let chois = vec![
            vec![eff(&[0, 1]), eff(&[2, 3])],
            vec![eff(&[0, 2]), eff(&[1, 3])],
        ];
        let val = w.value_on(&chois).unwrap();
        assert!(
            val <= 1e-8,
            "witness value {val} positive on a compatible pair"
        );
    }
}

#[test]
fn xz_threshold_estimate_is_near_the_analytic_value() {
    let cfg = quick();
    let report = povm_xz_threshold(&cfg).unwrap();
    let eta = std::f64::consts::FRAC_1_SQRT_2;
    assert!(report.lo <= eta && eta <= report.hi, "{report:?}");
    assert!(
        (report.estimate() - eta).abs() <= 5e-3,
        "estimate {} vs {eta}",
        report.estimate()
    );
}

#[test]
fn hierarchy_on_triple_excl_shows_the_strict_gap() {
    let pi = triple_excl().unwrap();
    let cfg = quick();
    let report = hierarchy(&pi, &cfg).unwrap();
    assert!(report.classical.is_incompatible());
    assert!(report.q.is_incompatible());
    assert!(report.exclusivity.is_compatible());
    assert!(report
        .implied
        .iter()
        .any(|s| s.contains("non-exclusive yet q-incompatible")));
}

#[test]
fn hierarchy_on_pair_id_embeds_classical_into_q() {
    let pi = pair_id().unwrap();
    let cfg = quick();
    let report = hierarchy(&pi, &cfg).unwrap();
    assert!(report.classical.is_compatible());
    assert!(report.parallel.is_incompatible());
    assert!(report.q.is_compatible());
    assert!(report.exclusivity.is_compatible());
}

#[test]
fn povm_hierarchy_replicates_the_joint_measurability_verdict() {
    let cfg = quick();
    let report = povm_hierarchy(&povm_xz("A", 0.5).unwrap(), &cfg).unwrap();
    assert!(report.classical.is_compatible());
    assert!(report.parallel.is_compatible());
    assert!(report.q.is_compatible());
    assert!(report.exclusivity.is_compatible());
    assert_eq!(report.q.notion, Notion::Q);
}

#[test]
fn verdicts_round_trip_through_json() {
    let pi = pair_const().unwrap();
    let cfg = quick();
    let v = check_parallel(&pi, &cfg).unwrap();
    let s = serde_json::to_string(&v).unwrap();
    let back: Verdict = serde_json::from_str(&s).unwrap();
    assert!(back.is_compatible());
    match back.certificate().unwrap() {
        CertificateKind::Parallel(cert) => {
            assert!(cert.deviation(&pi).unwrap() <= 1e-7);
        }
        other => panic!("unexpected certificate {other:?}"),
    }
}

#[test]
fn id_and_lueders_z_are_q_incompatible_by_the_induced_precheck() {
    let pi = ProgrammableInstrument::new(
        vec!["id".into(), "lz".into()],
        vec![id_instrument("A", "B").unwrap(), lueders_z("A", "B").unwrap()],
    )
    .unwrap();
    let cfg = quick();
    let q = check_q(&pi, &cfg).unwrap();
    // The identity program induces the trivial POVM, which is compatible
    // with anything, so the precheck cannot fire here; whatever the route,
    // the verdict must not be a false certificate.
    assert!(!q.is_compatible(), "{q:?}");
}

#[test]
fn lueders_xz_family_is_q_incompatible() {
    let pi = ProgrammableInstrument::new(
        vec!["lx".into(), "lz".into()],
        vec![lueders_x("A", "B").unwrap(), lueders_z("A", "B").unwrap()],
    )
    .unwrap();
    let cfg = quick();
    let q = check_q(&pi, &cfg).unwrap();
    assert!(q.is_incompatible(), "{q:?}");
    assert!(matches!(
        q.witness().unwrap(),
        CompatWitness::InducedPovm(_)
    ));
}
