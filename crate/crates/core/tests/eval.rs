mod common;

use common::*;
use freeocc::bench::synth::{generate_scene, SceneSpec};
use freeocc::eval::{align_and_evaluate, binary_iou, class_iou, EvalOptions};
use freeocc::gsmap::{init_map, transform_map, InitParams};
use freeocc::occproj::{GridSpec, OccupancyField, UNKNOWN_LABEL};
use freeocc::geometry::Vec3;
use freeocc::trajectory::{StampedPose, Trajectory};
use proptest::prelude::*;
use rand::Rng;

fn random_field(seed: u64, spec: GridSpec) -> OccupancyField {
    let mut r = rng(seed);
    let mut f = OccupancyField::empty(spec);
    for i in 0..spec.len() {
        f.occupancy[i] = r.random_range(0.0f32..1.0);
        f.labels[i] = if f.occupancy[i] >= 0.5 { r.random_range(1..4) } else { 0 };
    }
    f
}

fn spec() -> GridSpec {
    GridSpec::new(Vec3::zeros(), [6, 5, 4], 0.1).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn unknown_voxels_never_count(seed in any::<u64>()) {
        let pred = random_field(seed, spec());
        let mut gt = random_field(seed ^ 9, spec());
        let mut r = rng(seed ^ 17);
        for l in gt.labels.iter_mut() {
            if r.random_bool(0.3) {
                *l = UNKNOWN_LABEL;
            }
        }
        let mut other = pred.clone();
        for (i, &g) in gt.labels.iter().enumerate() {
            if g == UNKNOWN_LABEL {
                other.occupancy[i] = 1.0 - other.occupancy[i];
                other.labels[i] = r.random_range(0..4);
            }
        }
        prop_assert_eq!(binary_iou(&pred, &gt, 0.5).unwrap(), binary_iou(&other, &gt, 0.5).unwrap());
        if let (Ok(a), Ok(b)) = (class_iou(&pred, &gt, &[1, 2, 3]), class_iou(&other, &gt, &[1, 2, 3])) {
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn self_iou_is_one(seed in any::<u64>()) {
        let f = random_field(seed, spec());
        prop_assume!(f.occupancy.iter().any(|&o| o >= 0.5));
        prop_assert_eq!(binary_iou(&f, &f, 0.5).unwrap(), 1.0);
    }
}

#[test]
fn metrics_are_gauge_invariant_under_similarities() {
    let spec: SceneSpec = serde_json::from_str(
        r#"{"room": {"min": [0, 0, 0], "max": [2, 2, 2]},
            "boxes": [
              {"name": "a", "min": [0.4, 0.4, 0.0], "max": [0.9, 1.0, 0.5], "class_id": 1, "color": [0.8, 0.2, 0.2], "feature_id": 0},
              {"name": "b", "min": [1.1, 1.0, 0.0], "max": [1.6, 1.5, 0.7], "class_id": 2, "color": [0.2, 0.2, 0.8], "feature_id": 1}],
            "camera": {"target": [1, 1, 0.3], "radius": 0.9, "height": 0.8, "frames": 10, "width": 48, "image_height": 36, "fx": 45, "fy": 45}}"#,
    )
    .unwrap();
    let scene = generate_scene(&spec).unwrap();
    let map = init_map(&scene.frames.init_views(), 2, &InitParams { gamma: 1.5, kappa: 2.0, opacity: 0.5 }).unwrap();
    let traj = scene.frames.trajectory();
    let opts = EvalOptions { estimate_scale: true, texts: None, tau_occ: 0.5, class_subset: None };
    let base = align_and_evaluate(&map, &traj, &scene.ground_truth, &traj, &opts).unwrap();
    assert!(base.binary_counts.tp > 0);
    let mut r = rng(4);
    for _ in 0..5 {
        let q = random_similarity(&mut r, true);
        let moved_traj = Trajectory::new(
            traj.poses.iter().map(|p| StampedPose { timestamp: p.timestamp, pose: q.apply_to_pose(&p.pose) }).collect(),
        );
        let moved = align_and_evaluate(&transform_map(&map, &q), &moved_traj, &scene.ground_truth, &traj, &opts).unwrap();
        assert!((moved.iou - base.iou).abs() <= 1e-9);
        assert_eq!(moved.binary_counts, base.binary_counts);
    }
}
