use super::*;
use crate::img::mean_abs_diff;
use crate::lift::IntrinsicKind;
use crate::metrics::psnr;
use crate::render::render;
use crate::scene::{validate_scene, Camera};
use crate::synth::{make_views, make_views_with_holdout, SynthConfig};

fn small_cfg() -> SynthConfig {
    SynthConfig { image_size: 16, focal: 20.0, ..SynthConfig::default() }
}

#[test]
fn predict_produces_pixel_aligned_scene() {
    let pair = make_views(1, &small_cfg(), 2);
    let scene = OracleCanonicalPredictor::default()
        .predict(&pair.views, IntrinsicKind::GlobalToken)
        .unwrap();
    assert_eq!(scene.len(), 2 * 16 * 16);
    assert_eq!(scene.num_views, 2);
    assert_eq!(scene.view_shape, (16, 16));
    assert!(validate_scene(&scene).is_pass());

    // source_view/source_pixel bijective onto V x H x W
    let mut seen = vec![false; scene.len()];
    for (v, j) in scene.source_view.iter().zip(&scene.source_pixel) {
        let flat = (*v as usize - 1) * 256 + *j as usize;
        assert!(!seen[flat]);
        seen[flat] = true;
    }
    assert!(seen.into_iter().all(|s| s));
}

#[test]
fn predict_three_views() {
    let pair = make_views(2, &small_cfg(), 3);
    let scene = OracleCanonicalPredictor::default()
        .predict(&pair.views, IntrinsicKind::GlobalToken)
        .unwrap();
    assert_eq!(scene.len(), 3 * 16 * 16);
}

#[test]
fn predict_rejects_single_view() {
    let pair = make_views(3, &small_cfg(), 2);
    let err = OracleCanonicalPredictor::default()
        .predict(&pair.views[..1], IntrinsicKind::GlobalToken)
        .unwrap_err();
    assert!(matches!(err, PredictorError::TooFewViews(1)));
}

#[test]
fn predict_rejects_mismatched_shapes() {
    let a = make_views(4, &small_cfg(), 2);
    let b = make_views(4, &SynthConfig { image_size: 24, ..small_cfg() }, 2);
    let views = vec![a.views[0].clone(), b.views[1].clone()];
    assert!(matches!(
        OracleCanonicalPredictor::default().predict(&views, IntrinsicKind::GlobalToken),
        Err(PredictorError::ShapeMismatch { view: 1, .. })
    ));
}

#[test]
fn predict_requires_depth_and_pose() {
    let pair = make_views(5, &small_cfg(), 2);
    let mut views = pair.views.clone();
    views[1].depth = None;
    assert!(matches!(
        OracleCanonicalPredictor::default().predict(&views, IntrinsicKind::GlobalToken),
        Err(PredictorError::MissingDepth(1))
    ));

    let mut views = pair.views;
    views[1].pose = None;
    assert!(matches!(
        OracleCanonicalPredictor::default().predict(&views, IntrinsicKind::GlobalToken),
        Err(PredictorError::MissingPose(1))
    ));
}

#[test]
fn view_one_subset_is_local_unprojection() {
    let pair = make_views(6, &small_cfg(), 2);
    let scene = OracleCanonicalPredictor::default()
        .predict(&pair.views, IntrinsicKind::GlobalToken)
        .unwrap();
    let depth = pair.views[0].depth.as_ref().unwrap();
    for i in scene.view_indices(1) {
        let j = scene.source_pixel[i] as usize;
        let (r, c) = (j / 16, j % 16);
        let expect = crate::lift::unproject(
            crate::lift::pixel_coord(r, c),
            depth.get(r, c),
            &pair.intrinsics,
        )
        .unwrap();
        assert_eq!(scene.primitives[i].center, expect);
    }
}

#[test]
fn oracle_scene_is_coplanar_for_plane_input() {
    let pair = make_views(7, &small_cfg(), 2);
    let scene = OracleCanonicalPredictor::default()
        .predict(&pair.views, IntrinsicKind::GlobalToken)
        .unwrap();
    // World frame is view 1's frame, so the plane equation applies directly.
    for p in &scene.primitives {
        let off = pair.plane.normal.dot(&(p.center - pair.plane.anchor));
        assert!(off.abs() < 1e-5, "off-plane by {off}");
    }
}

#[test]
fn oracle_scene_rerenders_input_views() {
    let cfg = SynthConfig { tex_freq: (0.8, 2.0), ..SynthConfig::default() };
    let pair = make_views(8, &cfg, 2);
    let scene = OracleCanonicalPredictor::default()
        .predict(&pair.views, IntrinsicKind::GlobalToken)
        .unwrap();
    let gt_pose = canonical_view_pose(&pair.views, 1).unwrap();
    let out = render(&scene, &Camera::new(pair.intrinsics, gt_pose), [0.0; 3]);
    let p = psnr(&out.color, &pair.views[1].image).unwrap();
    assert!(p > 30.0, "self-consistency PSNR {p}");
}

#[test]
fn transform_fuse_matches_canonical_without_noise() {
    let pair = make_views(9, &small_cfg(), 2);
    let canonical = OracleCanonicalPredictor::default()
        .predict(&pair.views, IntrinsicKind::GlobalToken)
        .unwrap();
    let fused = TransformThenFusePredictor::default()
        .predict(&pair.views, IntrinsicKind::GlobalToken)
        .unwrap();
    assert_eq!(canonical.len(), fused.len());
    for (a, b) in canonical.primitives.iter().zip(&fused.primitives) {
        assert!((a.center - b.center).norm() < 1e-6);
    }
}

#[test]
fn pose_noise_displaces_second_view_with_depth_lever() {
    let pair = make_views(10, &small_cfg(), 2);
    let clean = TransformThenFusePredictor::default()
        .predict(&pair.views, IntrinsicKind::GlobalToken)
        .unwrap();
    let noisy = TransformThenFusePredictor {
        pose_noise: PoseNoise { rot_deg: 1.0, trans: 0.0, seed: 3 },
        ..TransformThenFusePredictor::default()
    }
    .predict(&pair.views, IntrinsicKind::GlobalToken)
    .unwrap();

    // View-1 primitives identical, view-2 displaced roughly by
    // depth * angle (small-angle lever arm about the canonical origin).
    let angle = 1.0f64.to_radians();
    for i in clean.view_indices(1) {
        assert_eq!(clean.primitives[i].center, noisy.primitives[i].center);
    }
    let mut max_rel = 0.0f64;
    for i in clean.view_indices(2) {
        let displaced = (clean.primitives[i].center - noisy.primitives[i].center).norm();
        assert!(displaced > 0.0);
        let lever = clean.primitives[i].center.norm() * angle;
        assert!(displaced <= lever * 1.001, "displacement {displaced} exceeds lever {lever}");
        max_rel = max_rel.max(displaced / lever);
    }
    // The bound is tight for centers orthogonal to the noise axis.
    assert!(max_rel > 0.5);
}

#[test]
fn noise_only_degrades_rendering() {
    let cfg = SynthConfig { tex_freq: (0.8, 2.0), ..SynthConfig::default() };
    for seed in 0..4u64 {
        let pair = make_views(seed, &cfg, 2);
        let target_pose = canonical_view_pose(&pair.views, 1).unwrap();
        let cam = Camera::new(pair.intrinsics, target_pose);
        let target = &pair.views[1].image;

        let clean = TransformThenFusePredictor::default()
            .predict(&pair.views, IntrinsicKind::GlobalToken)
            .unwrap();
        let noisy = TransformThenFusePredictor {
            pose_noise: PoseNoise { rot_deg: 1.0, trans: 0.01, seed },
            ..TransformThenFusePredictor::default()
        }
        .predict(&pair.views, IntrinsicKind::GlobalToken)
        .unwrap();

        let psnr_clean = psnr(&render(&clean, &cam, [0.0; 3]).color, target).unwrap();
        let psnr_noisy = psnr(&render(&noisy, &cam, [0.0; 3]).color, target).unwrap();
        assert!(
            psnr_noisy <= psnr_clean,
            "seed {seed}: noisy {psnr_noisy} vs clean {psnr_clean}"
        );
    }
}

#[test]
fn file_predictor_is_read_scene_passthrough() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("stored.ply");
    let pair = make_views(11, &small_cfg(), 2);
    let scene = OracleCanonicalPredictor::default()
        .predict(&pair.views, IntrinsicKind::GlobalToken)
        .unwrap();
    crate::scene::write_scene(&scene, &path).unwrap();

    let from_file = FilePredictor { path: path.clone() }
        .predict(&pair.views, IntrinsicKind::GlobalToken)
        .unwrap();
    let direct = crate::scene::read_scene(&path).unwrap();
    assert_eq!(from_file, direct);
}

#[test]
fn predictor_name_resolution() {
    assert!(predictor_by_name("oracle-canonical").is_ok());
    assert!(predictor_by_name("oracle-transform-fuse").is_ok());
    assert!(predictor_by_name("from-file:/tmp/x.ply").is_ok());
    assert!(matches!(
        predictor_by_name("from-file:"),
        Err(PredictorError::UnknownName(_))
    ));
    assert!(matches!(
        predictor_by_name("neural"),
        Err(PredictorError::UnknownName(_))
    ));
}

#[test]
fn holdout_view_renders_consistently() {
    let cfg = SynthConfig { tex_freq: (0.8, 2.0), ..SynthConfig::default() };
    let (pair, holdout) = make_views_with_holdout(12, &cfg);
    let scene = OracleCanonicalPredictor::default()
        .predict(&pair.views, IntrinsicKind::GlobalToken)
        .unwrap();
    let hold_pose = holdout.pose.clone().unwrap();
    let out = render(&scene, &Camera::new(pair.intrinsics, hold_pose), [0.0; 3]);
    let p = psnr(&out.color, &holdout.image).unwrap();
    assert!(p > 30.0, "holdout PSNR {p}");
    assert!(mean_abs_diff(&out.color, &holdout.image) < 0.03);
}
