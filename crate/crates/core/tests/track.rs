use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use semtrack::data::synth::Background;
use semtrack::data::{generate_synthetic, Motion, Sequence, Shape, SynthSpec};
use semtrack::net::{build_model, ModelBundle, ModelConfig};
use semtrack::regions::BBox;
use semtrack::regression::RegressorSet;
use semtrack::track::{
    adapt, as_ratio, estimate_target, initialize, score_candidates, track_frame, track_sequence, type_counts,
    SampleRecord, SampleType, StopReason, TrackConfig,
};

fn sequence(frames: usize) -> Sequence {
    generate_synthetic(&SynthSpec {
        name: "t".into(),
        shape: Shape::Disk,
        category: None,
        width: 64,
        height: 48,
        frames,
        color: [0.9, 0.8, 0.1],
        start: [30.0, 24.0],
        size: [16.0, 16.0],
        motion: Motion::Linear { vx: 0.8, vy: 0.0 },
        scale_drift: 0.0,
        brightness_ramp: 0.0,
        background: Background::default(),
        distractors: vec![],
        occluder: None,
        seed: 5,
    })
    .unwrap()
}

fn model() -> ModelBundle {
    build_model(&ModelConfig::desk_scale(vec!["disk".into(), "square".into()])).unwrap()
}

fn config() -> TrackConfig {
    TrackConfig {
        candidates: 48,
        vote_samples: 10,
        init_positives: 20,
        init_negatives: 60,
        init_iters: 5,
        init_batch: 32,
        regression_samples: 100,
        adapt_batch: 32,
        adapt_iters: 3,
        ..TrackConfig::default()
    }
}

fn identity(dim: usize) -> RegressorSet {
    RegressorSet {
        weights: std::array::from_fn(|_| vec![0.0; dim]),
        bias: [0.0; 4],
        lambda: 1.0,
    }
}

fn record(b: BBox, f_c: bool, f_t: f64) -> SampleRecord {
    SampleRecord {
        bbox: b,
        features: vec![0.0; 3],
        f_c,
        f_c_probs: vec![],
        f_t,
        sample_type: SampleType::classify(f_c, f_t, 0.5),
        score: if f_c { f_t } else { 0.0 },
    }
}

#[test]
fn candidate_records_obey_partition_and_score_law() {
    let seq = sequence(3);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (state, _) = initialize(&model(), &seq.frames[0], seq.gt[0], &config(), &mut rng).unwrap();
    let records = score_candidates(&state, &seq.frames[1], &mut rng).unwrap();
    assert_eq!(records.len(), 48);
    assert_eq!(type_counts(&records).iter().sum::<usize>(), 48);
    for r in &records {
        assert_eq!(r.sample_type, SampleType::classify(r.f_c, r.f_t, 0.5));
        assert_eq!(r.score, if r.f_c { 1.0 } else { 0.0 } * r.f_t);
        assert!((0.0..=1.0).contains(&r.f_t));
        assert_eq!(r.f_c_probs.len(), 3);
    }
}

#[test]
fn zero_spread_candidates_sit_on_last_estimate() {
    let seq = sequence(3);
    let cfg = TrackConfig {
        position_factor: 0.0,
        scale_std: 0.0,
        ..config()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (state, _) = initialize(&model(), &seq.frames[0], seq.gt[0], &cfg, &mut rng).unwrap();
    let records = score_candidates(&state, &seq.frames[0], &mut rng).unwrap();
    assert!(records.iter().all(|r| r.bbox == seq.gt[0]));
}

#[test]
fn estimate_examples() {
    let reg = identity(3);
    let a = BBox::new(10.0, 10.0, 8.0, 6.0).unwrap();
    let b = BBox::new(30.0, 20.0, 12.0, 10.0).unwrap();
    assert_eq!(estimate_target(&[record(a, true, 0.9)], &reg, 5).unwrap(), Some(a));
    assert_eq!(estimate_target(&vec![record(b, true, 0.7); 4], &reg, 5).unwrap(), Some(b));
    // only Type I counts; f_c = 0 samples never contribute
    let mixed = [record(a, true, 0.8), record(b, false, 1.0), record(b, true, 0.2)];
    assert_eq!(estimate_target(&mixed, &reg, 5).unwrap(), Some(a));
    assert_eq!(estimate_target(&[record(a, false, 0.9)], &reg, 5).unwrap(), None);
    // N_top keeps the highest scores
    let top = [record(b, true, 0.6), record(a, true, 0.95)];
    assert_eq!(estimate_target(&top, &reg, 1).unwrap(), Some(a));
    let even = estimate_target(&[record(a, true, 0.6), record(b, true, 0.6)], &reg, 5).unwrap().unwrap();
    assert!((even.x - 20.0).abs() < 1e-12 && (even.w - 10.0).abs() < 1e-12);
}

#[test]
fn initialization_raises_target_probability() {
    let seq = sequence(2);
    let cfg = TrackConfig {
        init_positives: 60,
        init_iters: 30,
        init_lr: 0.01,
        ..config()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (_, report) = initialize(&model(), &seq.frames[0], seq.gt[0], &cfg, &mut rng).unwrap();
    assert!(report.fg_after >= report.fg_before, "{report:?}");
    assert_eq!(report.votes.iter().sum::<usize>(), 10);
}

#[test]
fn override_and_no_netc_pick_the_branch() {
    let seq = sequence(2);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = TrackConfig {
        branch_override: Some("square".into()),
        ..config()
    };
    let (s, _) = initialize(&model(), &seq.frames[0], seq.gt[0], &cfg, &mut rng).unwrap();
    assert_eq!(s.active.name, "square");
    let cfg = TrackConfig { no_netc: true, ..config() };
    let (s, _) = initialize(&model(), &seq.frames[0], seq.gt[0], &cfg, &mut rng).unwrap();
    assert_eq!(s.active.index, 0);
    let cfg = TrackConfig {
        branch_override: Some("nope".into()),
        ..config()
    };
    assert!(initialize(&model(), &seq.frames[0], seq.gt[0], &cfg, &mut rng).is_err());
}

#[test]
fn below_threshold_adapt_changes_nothing() {
    let seq = sequence(2);
    let cfg = TrackConfig {
        as_threshold: 1.0,
        ..config()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut state, _) = initialize(&model(), &seq.frames[0], seq.gt[0], &cfg, &mut rng).unwrap();
    let before = state.model.clone();
    let mut records = score_candidates(&state, &seq.frames[1], &mut rng).unwrap();
    let out = adapt(&mut state, &mut records, &mut rng).unwrap();
    assert_eq!(out.rounds, 0);
    assert_eq!(out.stop, StopReason::BelowThreshold);
    assert_eq!(state.model, before);
}

#[test]
fn tracking_keeps_trunk_and_other_branches_fixed() {
    let seq = sequence(6);
    let m = model();
    let cfg = TrackConfig {
        as_threshold: 0.0,
        ..config()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut state, _) = initialize(&m, &seq.frames[0], seq.gt[0], &cfg, &mut rng).unwrap();
    let active = state.active.index;
    for f in &seq.frames[1..] {
        let r = track_frame(&mut state, f, &mut rng).unwrap();
        assert!(r.estimate.w > 0.0 && r.estimate.h > 0.0);
        assert!(state.pool_len() <= cfg.pool_capacity);
    }
    assert_eq!(state.model.net_s_checksum(), m.net_s_checksum());
    for i in 0..m.num_classes() {
        if i != active {
            assert_eq!(state.model.branch_checksum(i), m.branch_checksum(i));
        }
    }
}

#[test]
fn adaptation_traces_end_by_a_documented_rule() {
    let seq = sequence(8);
    let cfg = TrackConfig {
        as_threshold: 0.05,
        ..config()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let run = track_sequence(&model(), &seq.frames, seq.gt[0], &cfg, &mut rng).unwrap();
    assert_eq!(run.frames.len(), 7);
    for f in &run.frames {
        let t = &f.as_ratio_trace;
        assert_eq!(t.len(), f.adaptation_rounds + 1);
        assert_eq!(f.n_type.iter().sum::<usize>(), cfg.candidates);
        assert!(t[..t.len() - 1].windows(2).all(|w| w[1] < w[0]), "{t:?}");
        let last = *t.last().unwrap();
        match f.stop {
            StopReason::BelowThreshold => assert!(last <= cfg.as_threshold),
            StopReason::NotDecreasing => assert!(t.len() >= 2 && last >= t[t.len() - 2]),
            StopReason::MaxRounds => assert_eq!(f.adaptation_rounds, cfg.max_rounds),
            StopReason::SkippedEmptyPool => assert_eq!(f.adaptation_rounds, 0),
            StopReason::Disabled => panic!("adaptation was enabled"),
        }
    }
}

#[test]
fn same_seed_same_run_and_short_input_rejected() {
    let seq = sequence(4);
    let run = |seed| {
        track_sequence(&model(), &seq.frames, seq.gt[0], &config(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    };
    assert_eq!(run(2), run(2));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    assert!(track_sequence(&model(), &seq.frames[..1], seq.gt[0], &config(), &mut rng).is_err());
}

#[test]
fn no_adapt_reports_disabled() {
    let seq = sequence(3);
    let cfg = TrackConfig { no_adapt: true, ..config() };
    let run = track_sequence(&model(), &seq.frames, seq.gt[0], &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    for f in &run.frames {
        assert_eq!(f.stop, StopReason::Disabled);
        assert_eq!(f.as_ratio_trace.len(), 1);
    }
}

proptest! {
    #[test]
    fn types_partition_any_scores(f_c in any::<bool>(), f_t in 0.0..=1.0f64, theta in 0.0..=1.0f64) {
        let t = SampleType::classify(f_c, f_t, theta);
        let expect = [
            f_c && f_t >= theta,
            f_c && f_t < theta,
            !f_c && f_t >= theta,
            !f_c && f_t < theta,
        ];
        prop_assert_eq!(expect.iter().filter(|&&e| e).count(), 1);
        prop_assert!(expect[t.index()]);
        prop_assert_eq!(t.is_ambiguous(), t.index() == 1 || t.index() == 2);
    }

    #[test]
    fn estimate_is_convex_combination(
        boxes in prop::collection::vec((0.0..100.0f64, 0.0..100.0f64, 4.0..40.0f64, 4.0..40.0f64, 0.5..1.0f64), 1..10)
    ) {
        let recs: Vec<SampleRecord> = boxes
            .iter()
            .map(|&(x, y, w, h, s)| record(BBox::new(x, y, w, h).unwrap(), true, s))
            .collect();
        let e = estimate_target(&recs, &identity(3), 5).unwrap().unwrap();
        prop_assert!(e.w > 0.0 && e.h > 0.0);
        let min_w = recs.iter().map(|r| r.bbox.w).fold(f64::INFINITY, f64::min);
        let max_w = recs.iter().map(|r| r.bbox.w).fold(0.0, f64::max);
        prop_assert!(e.w >= min_w - 1e-9 && e.w <= max_w + 1e-9);
        prop_assert!(as_ratio(&recs) == 0.0);
    }
}
