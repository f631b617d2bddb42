use piste::reconstruction::*;
use piste::synthetic::*;
use piste::tracking::{footpoint, BBox, TrackTable};
use piste::{Error, Frame, Point2};

fn scene(camera: Vec<CameraStep>, frames: usize, velocity: [f64; 2]) -> SyntheticScene {
    SyntheticScene::new(SceneConfig {
        width: 400,
        height: 300,
        frames,
        seed: 21,
        canvas: CanvasConfig {
            markers: 60,
            ..CanvasConfig::default()
        },
        camera,
        view: None,
        athlete: AthleteConfig {
            start: [100.0, 250.0],
            velocity,
            box_size: [24.0, 50.0],
        },
    })
    .unwrap()
}

fn run_with_truth_boxes(s: &SyntheticScene, frames: usize, seed: u64) -> Engine {
    let table = TrackTable::new(s.truth().boxes.iter().copied().enumerate().collect()).unwrap();
    let mut e = Engine::start_with_track(&s.render(0), table, EngineConfig::with_seed(seed)).unwrap();
    for t in 1..frames {
        e.step(&s.render(t)).unwrap();
    }
    e
}

#[test]
fn start_seeds_the_trajectory_with_the_footpoint() {
    let f = Frame::from_fn(200, 200, |x, y| [(x ^ y) as u8, 0, 0]).unwrap();
    let e = Engine::start_manual(&f, BBox::new(10.0, 20.0, 30.0, 40.0), EngineConfig::default()).unwrap();
    assert_eq!(e.trajectory().points, vec![Point2::new(25.0, 60.0)]);
    assert_eq!(e.trajectory().flags, vec![PointFlag::Measured]);
}

#[test]
fn uniform_first_frame_starts_empty_and_bridges() {
    let gray = Frame::from_fn(200, 200, |_, _| [128, 128, 128]).unwrap();
    let b = BBox::new(10.0, 20.0, 30.0, 40.0);
    let mut e = Engine::start_manual(&gray, b, EngineConfig::default()).unwrap();
    assert!(e.features().is_empty());
    e.step_with_box(&gray, b).unwrap();
    let d = e.diagnostics().last().unwrap();
    assert!(d.bridged);
    assert_eq!(e.trajectory().len(), 2);
}

#[test]
fn invalid_initial_box_is_reported() {
    let f = Frame::from_fn(200, 200, |_, _| [1, 2, 3]).unwrap();
    let err = Engine::start(&f, BBox::new(190.0, 10.0, 30.0, 30.0), EngineConfig::default()).err().unwrap();
    assert_eq!(err.category(), "invalid_box");
}

#[test]
fn static_camera_reproduces_raw_footpoints() {
    let s = scene(vec![], 11, [3.0, 0.0]);
    let e = run_with_truth_boxes(&s, 11, 1);
    let raw: Vec<Point2> = s.truth().boxes.iter().map(footpoint).collect();
    for (p, q) in e.trajectory().points.iter().zip(&raw) {
        assert!(p.distance(q) < 0.5, "{p:?} vs {q:?}");
    }
}

#[test]
fn panning_camera_follows_the_truth_chain() {
    let s = scene(vec![CameraStep::Translate { dx: 2.0, dy: 0.0 }], 40, [2.5, -1.0]);
    let e = run_with_truth_boxes(&s, 40, 3);
    let r = measure_error(e.trajectory(), s.truth()).unwrap();
    assert!(r.max < 2.0, "max error {}", r.max);
    assert!(e.diagnostics().iter().all(|d| !d.bridged));
}

#[test]
fn length_law_and_replay() {
    let s = scene(vec![CameraStep::Translate { dx: 1.0, dy: 0.5 }], 15, [1.0, 0.0]);
    let mut e = Engine::start(&s.render(0), s.truth().boxes[0], EngineConfig::with_seed(2)).unwrap();
    for t in 1..15 {
        e.step(&s.render(t)).unwrap();
        assert_eq!(e.trajectory().len(), t + 1);
        assert_eq!(e.trajectory().frame_index, t);
    }
    let replayed = replay(e.diagnostics()).unwrap();
    assert_eq!(replayed.len(), 15);
    assert_eq!(replayed[14].points, e.trajectory().points);
}

#[test]
fn prefixes_are_reproduced_bitwise() {
    let s = scene(vec![CameraStep::Translate { dx: 2.0, dy: 0.0 }], 20, [1.0, -0.5]);
    let short = run_with_truth_boxes(&s, 12, 9);
    let long = run_with_truth_boxes(&s, 20, 9);
    assert_eq!(short.diagnostics(), &long.diagnostics()[..12]);
    let replayed = replay(long.diagnostics()).unwrap();
    assert_eq!(replayed[11].points, short.trajectory().points);
}

#[test]
fn track_file_gaps_reuse_the_previous_box() {
    let s = scene(vec![], 6, [2.0, 0.0]);
    let entries: Vec<(usize, BBox)> = s
        .truth()
        .boxes
        .iter()
        .copied()
        .enumerate()
        .filter(|(t, _)| *t != 3)
        .collect();
    let table = TrackTable::new(entries).unwrap();
    let mut e = Engine::start_with_track(&s.render(0), table, EngineConfig::default()).unwrap();
    for t in 1..6 {
        e.step(&s.render(t)).unwrap();
    }
    assert_eq!(e.trajectory().flags[3], PointFlag::Interpolated);
    assert_eq!(e.diagnostics()[3].bbox, s.truth().boxes[2]);
    assert!(e.diagnostics()[3].tracker_lost);
}

#[test]
fn track_file_must_cover_frame_zero() {
    let s = scene(vec![], 3, [0.0, 0.0]);
    let table = TrackTable::new(vec![(1, s.truth().boxes[1])]).unwrap();
    assert!(matches!(
        Engine::start_with_track(&s.render(0), table, EngineConfig::default()),
        Err(Error::Config(_))
    ));
}

#[test]
fn frames_of_another_size_are_rejected() {
    let s = scene(vec![], 3, [0.0, 0.0]);
    let mut e = run_with_truth_boxes(&s, 2, 0);
    let small = Frame::from_fn(100, 100, |_, _| [0, 0, 0]).unwrap();
    assert!(matches!(e.step(&small), Err(Error::DimensionMismatch { .. })));
    assert_eq!(e.trajectory().len(), 2);
}

#[test]
fn self_comparison_and_missing_pairs() {
    let s = scene(vec![CameraStep::Translate { dx: 2.0, dy: 0.0 }], 8, [1.0, 0.0]);
    let e = run_with_truth_boxes(&s, 8, 4);
    let run = RunView {
        frames: &s,
        diagnostics: e.diagnostics(),
    };
    let reference = replay(e.diagnostics()).unwrap();
    let pairing = Pairing::from_pairs((0..8).filter(|&t| t != 5).map(|t| (t, t))).unwrap();
    let out = compare_runs(&EngineConfig::with_seed(4), run, run, &pairing).unwrap();
    assert_eq!(out.len(), 8);
    for o in &out {
        if o.ref_frame == 5 {
            assert_eq!(o.status, OverlayStatus::Unpaired);
            assert!(o.overlay.is_none());
            continue;
        }
        assert_eq!(o.status, OverlayStatus::Ok);
        let overlay = o.overlay.as_ref().unwrap();
        for (p, q) in overlay.points.iter().zip(&reference[o.ref_frame].points) {
            assert!(p.distance(q) < 0.5);
        }
    }
}
