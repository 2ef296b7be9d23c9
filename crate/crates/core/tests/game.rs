use paraccel::game::{
    consistency_replay, gap_certificate, run_game, win_event_check, CoordinateProbe, GameState,
    RandomBall, SubgradientSweep,
};
use paraccel::instances::{Branch, LowerBoundParams};
use paraccel::oracle::{orthonormal_complement_sample, RngStream};

#[test]
fn random_ball_games_are_mostly_won_and_replay_exactly() {
    let mut won = 0;
    for seed in 0..20 {
        let mut s = RandomBall::new(seed);
        let (tr, rep) = run_game(&mut s, 500, 5, 100, 0.1, seed).unwrap();
        assert!(!rep.params.theorem_condition_holds);
        assert_eq!(rep.depth, 5);
        assert_eq!(rep.work, 500);
        assert!(tr.ledger.is_consistent());
        if rep.won {
            won += 1;
            assert!(rep.replay_deviation.unwrap() <= 1e-7);
        }
    }
    assert!(won >= 18, "won {won} of 20");
}

#[test]
fn rotated_commitment_breaks_replay() {
    // the second round queries the committed v_1, where a linear piece is active
    let params = LowerBoundParams::derive_saturating(500, 5, 100, 0.1).unwrap();
    let mut game = GameState::new(params, 4);
    let mut rng = RngStream::new(4, 1 << 41);
    let batch = |rng: &mut RngStream| (0..100).map(|_| rng.uniform_in_ball(500, 1.0)).collect::<Vec<_>>();
    game.play_round(batch(&mut rng)).unwrap();
    let mut second = batch(&mut rng);
    second[0] = game.committed()[0].clone();
    let r = game.play_round(second).unwrap();
    assert_eq!(r.branches[0], Branch::Piece(1));
    for _ in 2..5 {
        game.play_round(batch(&mut rng)).unwrap();
    }
    let mut tr = game.into_transcript().unwrap();
    assert!(win_event_check(&tr).won);
    assert!(consistency_replay(&tr).unwrap() <= 1e-7);

    let w = orthonormal_complement_sample(&tr.committed, 1, 500, &mut rng).unwrap().remove(0);
    tr.committed[0] = &tr.committed[0] * 0.8 + &w * 0.6;
    assert!(win_event_check(&tr).won);
    assert!(consistency_replay(&tr).unwrap() > 1e-3);
}

#[test]
fn subgradient_player_report() {
    let mut s = SubgradientSweep::new(1.0).unwrap();
    let (tr, rep) = run_game(&mut s, 500, 5, 100, 0.1, 12).unwrap();
    assert_eq!(rep.depth, 5);
    assert_eq!(tr.rounds[0].queries.len(), 1);
    if rep.won {
        let cert = gap_certificate(&tr).unwrap();
        assert_eq!(Some(cert), rep.certificate);
    }
}

#[test]
fn games_are_seed_deterministic() {
    let run = |seed| {
        let mut s = CoordinateProbe;
        run_game(&mut s, 200, 4, 10, 0.1, seed).unwrap()
    };
    let (a, ra) = run(5);
    let (b, rb) = run(5);
    assert_eq!(a, b);
    assert_eq!(ra, rb);
    assert_eq!(a.to_jsonl(), b.to_jsonl());
}

#[test]
fn certificate_only_decreases_with_more_queries() {
    let mut s = RandomBall::new(6);
    let (tr, rep) = run_game(&mut s, 500, 5, 20, 0.1, 6).unwrap();
    assert!(rep.won);
    let full = gap_certificate(&tr).unwrap();
    let mut fewer = tr.clone();
    for r in &mut fewer.rounds {
        r.queries.truncate(5);
        r.values.truncate(5);
        r.gradients.truncate(5);
    }
    assert!(gap_certificate(&fewer).unwrap() >= full);
}
