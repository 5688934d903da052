use std::fs;

use proptest::prelude::*;
use semtrack::data::synth::{target_mask, Background};
use semtrack::data::{
    format_boxes, generate_synthetic, load_sequence, parse_boxes, read_boxes, write_results, write_sequence, Motion,
    Shape, SynthSpec, GT_FILE,
};
use semtrack::eval::{overlap_series, AttributeTag};
use semtrack::regions::{iou, BBox};
use semtrack::Error;

fn spec(shape: Shape) -> SynthSpec {
    SynthSpec {
        name: "seq".into(),
        shape,
        category: None,
        width: 64,
        height: 48,
        frames: 6,
        color: [0.2, 0.7, 0.3],
        start: [30.0, 22.0],
        size: [16.0, 14.0],
        motion: Motion::Linear { vx: 1.0, vy: -0.5 },
        scale_drift: 0.02,
        brightness_ramp: 0.3,
        background: Background::default(),
        distractors: vec![],
        occluder: None,
        seed: 11,
    }
}

#[test]
fn write_then_load_round_trips() {
    let seq = generate_synthetic(&spec(Shape::Cross)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_sequence(&seq, dir.path()).unwrap();
    let back = load_sequence(dir.path()).unwrap();
    assert_eq!(back.frames, seq.frames);
    assert_eq!(back.category.as_deref(), Some("cross"));
    assert_eq!(back.tags, vec![AttributeTag::IV, AttributeTag::SV]);
    for (a, b) in back.gt.iter().zip(&seq.gt) {
        for (u, v) in a.to_corner().iter().zip(b.to_corner()) {
            assert!((u - v).abs() < 1e-9);
        }
    }
}

#[test]
fn tab_and_comma_files_parse_identically() {
    let p = std::path::Path::new("gt");
    let comma = parse_boxes("1,2,30,40\n5.5,6,7,8\n", p).unwrap();
    let tab = parse_boxes("1\t2\t30\t40\n5.5\t6\t7\t8\n\n", p).unwrap();
    assert_eq!(comma, tab);
    assert_eq!(comma[0], BBox::from_corner(1.0, 2.0, 30.0, 40.0).unwrap());
}

#[test]
fn malformed_lines_name_the_line() {
    let p = std::path::Path::new("gt.txt");
    match parse_boxes("1,2,3,4\n1,2,x,4\n", p) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("expected a parse error, got {other:?}"),
    }
    assert!(parse_boxes("1,2,3\n", p).is_err());
    assert!(parse_boxes("1,2,0,4\n", p).is_err());
    assert!(parse_boxes("1,2,3,4\n\n1,2,3,4\n", p).is_err());
}

#[test]
fn missing_ground_truth_is_an_error() {
    let seq = generate_synthetic(&spec(Shape::Disk)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_sequence(&seq, dir.path()).unwrap();
    fs::remove_file(dir.path().join(GT_FILE)).unwrap();
    assert!(matches!(load_sequence(dir.path()), Err(Error::Io { .. })));
}

#[test]
fn frame_count_mismatch_is_rejected() {
    let seq = generate_synthetic(&spec(Shape::Disk)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_sequence(&seq, dir.path()).unwrap();
    fs::write(dir.path().join(GT_FILE), format_boxes(&seq.gt[..4])).unwrap();
    assert!(matches!(load_sequence(dir.path()), Err(Error::Parse { .. })));
}

#[test]
fn results_feed_the_evaluator() {
    let seq = generate_synthetic(&spec(Shape::Square)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out/seq.txt");
    write_results("seq", &seq.gt, &path).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), seq.frames.len());
    let back = read_boxes(&path).unwrap();
    assert_eq!(overlap_series(&back, &seq.gt).unwrap(), vec![1.0; seq.gt.len()]);
    assert!(write_results("seq", &[], &path).is_err());
}

/// Tight box around the rendered mask.
fn tight_box(mask: &[bool], width: usize) -> Option<BBox> {
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        let (x, y) = (i % width, i / width);
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x + 1);
        y1 = y1.max(y + 1);
    }
    (x0 != usize::MAX).then(|| BBox::from_corner(x0 as f64, y0 as f64, (x1 - x0) as f64, (y1 - y0) as f64).unwrap())
}

fn shape_strategy() -> impl Strategy<Value = Shape> {
    prop::sample::select(Shape::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rendered_target_matches_ground_truth(
        shape in shape_strategy(),
        w in 6.0..30.0f64,
        h in 6.0..30.0f64,
        cx in 20.0..44.0f64,
        cy in 18.0..30.0f64,
        vx in -1.0..1.0f64,
    ) {
        let s = SynthSpec {
            start: [cx, cy],
            size: [w, h],
            motion: Motion::Linear { vx, vy: 0.0 },
            scale_drift: 0.0,
            frames: 3,
            shape,
            ..spec(shape)
        };
        prop_assume!(s.validate().is_ok());
        let seq = generate_synthetic(&s).unwrap();
        for k in 0..s.frames {
            let gt = seq.gt[k];
            let mask = target_mask(&s, k);
            let inside = mask
                .iter()
                .enumerate()
                .filter(|(i, &m)| {
                    let (x, y) = ((i % s.width) as f64 + 0.5, (i / s.width) as f64 + 0.5);
                    m && x > gt.left() && x < gt.right() && y > gt.top() && y < gt.bottom()
                })
                .count() as f64;
            let frame = BBox::from_corner(0.0, 0.0, s.width as f64, s.height as f64).unwrap();
            let visible = gt.intersection(&frame);
            prop_assert!(inside >= 0.5 * visible, "{shape:?} frame {k}: {inside} of {visible}");
            if visible == gt.area() {
                let tight = tight_box(&mask, s.width).unwrap();
                prop_assert!(iou(&tight, &gt) >= 0.95, "{shape:?}: tight {tight:?} gt {gt:?}");
            }
        }
    }

    #[test]
    fn box_text_round_trips(
        boxes in prop::collection::vec((-50.0..200.0f64, -50.0..200.0f64, 4.0..90.0f64, 4.0..90.0f64), 1..20)
    ) {
        let boxes: Vec<BBox> = boxes.into_iter().map(|(l, t, w, h)| BBox::from_corner(l, t, w, h).unwrap()).collect();
        let back = parse_boxes(&format_boxes(&boxes), std::path::Path::new("x")).unwrap();
        for (a, b) in back.iter().zip(&boxes) {
            for (u, v) in a.to_corner().iter().zip(b.to_corner()) {
                prop_assert!((u - v).abs() < 1e-9);
            }
        }
    }
}
