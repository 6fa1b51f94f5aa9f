use crate::config::RunConfig;
use crate::games::*;
use crate::qobjects::fixtures;
use crate::qobjects::ProgrammableInstrument;

fn family_distance(a: &ProgrammableInstrument, b: &ProgrammableInstrument) -> f64 {
    let mut worst: f64 = 0.0;
    assert_eq!(a.n_programs(), b.n_programs());
    for (ia, ib) in a.instruments.iter().zip(&b.instruments) {
        assert_eq!(ia.n_outcomes(), ib.n_outcomes());
        for (ma, mb) in ia.maps.iter().zip(&ib.maps) {
            worst = worst.max((&ma.choi.mat - &mb.choi.mat).norm());
        }
    }
    worst
}

#[test]
fn identity_protocol_replays_resource() {
    let pi = fixtures::pair_id().unwrap();
    for fw in [Framework::C, Framework::Q, Framework::Ex] {
        let t = identity_protocol(&pi, fw).unwrap();
        t.validate(1e-9).unwrap();
        let played = apply_protocol(&t, &pi).unwrap();
        assert!(family_distance(&pi, &played) < 1e-10);
    }
}

#[test]
fn self_game_value_of_identity_pair_is_one() {
    let pi = fixtures::pair_id().unwrap();
    let game = GuessingGame::new(pi.clone()).unwrap();
    let v = game.value_of(&pi).unwrap();
    assert!((v - 1.0).abs() < 1e-12, "self value {v}");
}

#[test]
fn composed_identity_protocols_replay_resource() {
    let pi = fixtures::pair_id().unwrap();
    let t = identity_protocol(&pi, Framework::Q).unwrap();
    let tt = compose_protocols(&t, &t).unwrap();
    tt.validate(1e-9).unwrap();
    let played = apply_protocol(&tt, &pi).unwrap();
    assert!(family_distance(&pi, &played) < 1e-10);
}

#[test]
fn mixed_identity_protocols_replay_resource() {
    let pi = fixtures::pair_const().unwrap();
    let t = identity_protocol(&pi, Framework::Q).unwrap();
    let mixed = mix_protocols(&t, &t, 0.3).unwrap();
    mixed.validate(1e-9).unwrap();
    let played = apply_protocol(&mixed, &pi).unwrap();
    assert!(family_distance(&pi, &played) < 1e-10);
}

#[test]
fn utility_search_recovers_identity_self_game() {
    let pi = fixtures::pair_id().unwrap();
    let game = GuessingGame::new(pi.clone()).unwrap();
    let mut cfg = RunConfig::quick();
    cfg.seesaw.restarts = 2;
    cfg.seesaw.sweeps = 6;
    let dims = SearchDims {
        memory_dim: Some(1),
        n_forward: Some(1),
        n_backward: Some(1),
        n_ii_memory: None,
    };
    let report = utility_with(&pi, &game, Framework::Q, &cfg, &dims).unwrap();
    assert!(
        report.value > 1.0 - 1e-6 && report.value < 1.0 + 1e-9,
        "searched value {}",
        report.value
    );
}

// Golden ratio appears as the optimal overlap between the identity and a
// Lueders measurement; the shared c and q threshold is (3 + sqrt 5)/8.
const ID_LZ_THRESHOLD: f64 = 0.654_508_497_187_473_7;

fn id_lz_game() -> GuessingGame {
    let pi = ProgrammableInstrument::new(
        vec!["id".into(), "lz".into()],
        vec![
            fixtures::id_instrument("A", "B").unwrap(),
            fixtures::lueders_z("A", "B").unwrap(),
        ],
    )
    .unwrap();
    GuessingGame::new(pi).unwrap()
}

#[test]
fn free_thresholds_match_constant_pair_oracles() {
    let cfg = RunConfig::default();
    let game = GuessingGame::new(fixtures::pair_const().unwrap()).unwrap();
    for (fw, expected) in [
        (Framework::C, 0.25),
        (Framework::Q, 0.5),
        (Framework::Ex, 0.5),
    ] {
        let rep = free_threshold(&game, fw, &cfg).unwrap();
        let upper = rep.upper.unwrap();
        assert!(
            (rep.value - expected).abs() < 1e-3,
            "{fw} value {} vs {expected}",
            rep.value
        );
        assert!((upper - expected).abs() < 1e-3, "{fw} upper {upper}");
        assert!(rep.value <= upper + 1e-9);
        assert_eq!(rep.framework, fw);
        rep.protocol.validate(1e-7).unwrap();
    }
}

#[test]
fn free_thresholds_match_identity_lueders_oracles() {
    let cfg = RunConfig::default();
    let game = id_lz_game();

    let c = free_threshold(&game, Framework::C, &cfg).unwrap();
    assert!(
        (c.value - ID_LZ_THRESHOLD).abs() < 1e-4,
        "c value {}",
        c.value
    );
    assert!((c.upper.unwrap() - ID_LZ_THRESHOLD).abs() < 1e-4);

    let q = free_threshold(&game, Framework::Q, &cfg).unwrap();
    assert!(
        (q.value - ID_LZ_THRESHOLD).abs() < 1e-4,
        "q value {}",
        q.value
    );
    assert!((q.upper.unwrap() - ID_LZ_THRESHOLD).abs() < 1e-4);

    // designating the identity program recovers the full pair: announce the
    // Lueders outcome from the repair instrument and score 3/4
    let ex = free_threshold_ex(&game, 0, &cfg).unwrap();
    assert!((ex.value - 0.75).abs() < 1e-4, "ex value {}", ex.value);
    assert!(ex.upper.unwrap() <= 0.75 + 1e-3);

    // the hierarchy is strict between q and ex on this pair
    assert!(c.value <= q.upper.unwrap() + 1e-9);
    assert!(ex.value - q.upper.unwrap() > 0.09);
}

#[test]
fn witness_to_game_separates_constant_pair() {
    use crate::compat::{check_instrument_classical, CompatWitness};
    use crate::tensor::HermitianBlock;

    let cfg = RunConfig::default();
    let pi = fixtures::pair_const().unwrap();
    let verdict = check_instrument_classical(&pi, &cfg).unwrap();
    let w = match verdict.witness() {
        Some(CompatWitness::Sdp(w)) => w.clone(),
        other => panic!("expected an sdp witness, got {other:?}"),
    };

    let (game, rescale) = witness_to_game(&w).unwrap();
    game.validate(1e-9).unwrap();

    // the affine relation reproduces the witness value on the target
    let chois: Vec<Vec<HermitianBlock>> = pi
        .instruments
        .iter()
        .map(|inst| inst.maps.iter().map(|m| m.choi.clone()).collect())
        .collect();
    let wv = w.value_on(&chois).unwrap();
    let gv = game.value_of(&pi).unwrap();
    let predicted = wv * game.round_scale() / rescale.k + rescale.c;
    assert!(
        (gv - predicted).abs() < 1e-9,
        "game {gv} vs predicted {predicted}"
    );

    // the guaranteed excess over classical-free play is realized
    let margin = w.witness.margin;
    assert!(margin > 0.0);
    let excess = rescale.excess(margin, &game);
    assert!(excess > 0.0);
    let free = free_threshold(&game, Framework::C, &cfg).unwrap();
    let gap = gv - free.upper.unwrap();
    assert!(
        gap >= excess - 1e-4,
        "gap {gap} below certified excess {excess}"
    );
}

#[test]
fn simulate_free_replays_a_classical_certificate() {
    let cfg = RunConfig::quick();
    let family = fixtures::classical_free(11, 2, 2).unwrap();
    let v = crate::compat::check_instrument_classical(&family, &cfg).unwrap();
    let cert = v.certificate().expect("classically free fixture").clone();
    let (proto, played) = simulate_free(Framework::C, &family, &cert).unwrap();
    proto.validate(1e-7).unwrap();
    let err = replay_error(&family, &played).unwrap();
    assert!(err < 1e-6, "classical replay error {err:.2e}");

    // classical freeness lifts to the q framework with the same certificate
    let (proto_q, played_q) = simulate_free(Framework::Q, &family, &cert).unwrap();
    assert_eq!(proto_q.framework, Framework::Q);
    let err_q = replay_error(&family, &played_q).unwrap();
    assert!(err_q < 1e-6, "lifted replay error {err_q:.2e}");
}

#[test]
fn simulate_free_replays_a_q_certificate() {
    let cfg = RunConfig::quick();
    let family = fixtures::channels_rand(11).unwrap();
    let v = crate::compat::check_q(&family, &cfg).unwrap();
    let cert = v.certificate().expect("channel pairs are q-compatible").clone();
    let (proto, played) = simulate_free(Framework::Q, &family, &cert).unwrap();
    proto.validate(1e-7).unwrap();
    let err = replay_error(&family, &played).unwrap();
    assert!(err < 1e-6, "q replay error {err:.2e}");
}

#[test]
fn simulate_free_replays_a_no_exclusion_certificate() {
    let cfg = RunConfig::quick();
    let family = fixtures::triple_excl().unwrap();
    let v = crate::compat::check_exclusive(&family, 0, &cfg).unwrap();
    let cert = v.certificate().expect("identity does not exclude").clone();
    let (proto, played) = simulate_free(Framework::Ex, &family, &cert).unwrap();
    proto.validate(1e-7).unwrap();
    let err = replay_error(&family, &played).unwrap();
    assert!(err < 1e-6, "no-exclusion replay error {err:.2e}");
}

#[test]
fn monotonicity_replay_identity_holds_for_random_protocols() {
    let resource = fixtures::channels_rand(5).unwrap();
    let game = GuessingGame::new(fixtures::channels_rand(6).unwrap()).unwrap();
    for (k, fw) in [Framework::C, Framework::Q, Framework::Ex].into_iter().enumerate() {
        let t = random_protocol(&resource, fw, 100 + k as u64).unwrap();
        let report = monotonicity_check(&t, &resource, &game, 1e-8).unwrap();
        assert!(
            report.ok,
            "{fw:?}: direct {} vs replay {} (residual {:.2e})",
            report.value, report.replay, report.residual
        );
    }
}

#[test]
fn free_utility_replay_is_resource_independent() {
    let cfg = RunConfig::quick();
    let game = GuessingGame::new(fixtures::pair_const().unwrap()).unwrap();
    let a = fixtures::classical_free(21, 2, 2).unwrap();
    let b = fixtures::classical_free(22, 3, 2).unwrap();
    let ua = free_utility_replay(&game, Framework::C, &a, &cfg).unwrap();
    let ub = free_utility_replay(&game, Framework::C, &b, &cfg).unwrap();
    assert!((ua - ub).abs() < 1e-6, "{ua} vs {ub}");
    assert!((ua - 0.25).abs() < 1e-3, "free value {ua}");
}
