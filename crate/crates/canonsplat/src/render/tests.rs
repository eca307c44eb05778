use super::*;
use crate::math::Vec6;
use crate::scene::{CameraIntrinsics, CameraPose, CanonicalScene, GaussianPrimitive};
use approx::assert_relative_eq;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cam(f: f64, cx: f64, cy: f64, size: usize) -> Camera {
    Camera::new(
        CameraIntrinsics::new(f, f, cx, cy, size, size).unwrap(),
        CameraPose::identity(),
    )
}

fn flat(center: Vec3, opacity: f64, scale: f64, rgb: [f64; 3]) -> GaussianPrimitive {
    GaussianPrimitive::flat_color(center, opacity, Vec3::new(scale, scale, scale), rgb).unwrap()
}

fn scene_of(prims: Vec<GaussianPrimitive>) -> CanonicalScene {
    CanonicalScene::from_primitives(prims, 0)
}

// ---- projection ----

#[test]
fn on_axis_point_projects_to_principal_point() {
    let cam = cam(64.0, 16.25, 17.75, 32);
    let g = flat(Vec3::new(0.0, 0.0, 1.0), 0.5, 0.1, [0.8, 0.2, 0.2]);
    let splat = project_gaussian(&g, &cam).unwrap();
    assert_relative_eq!(splat.mean2d.x, 16.25, epsilon = 1e-12);
    assert_relative_eq!(splat.mean2d.y, 17.75, epsilon = 1e-12);
    assert_relative_eq!(splat.depth, 1.0, epsilon = 1e-15);
}

#[test]
fn isotropic_on_axis_covariance() {
    let f = 50.0;
    let sigma = 0.02;
    let cam = cam(f, 16.0, 16.0, 32);
    let g = flat(Vec3::new(0.0, 0.0, 1.0), 0.5, sigma, [0.5, 0.5, 0.5]);
    let splat = project_gaussian(&g, &cam).unwrap();
    let expect = f * f * sigma * sigma + COV2D_EPS;
    assert_relative_eq!(splat.cov2d[(0, 0)], expect, epsilon = 1e-9);
    assert_relative_eq!(splat.cov2d[(1, 1)], expect, epsilon = 1e-9);
    assert_relative_eq!(splat.cov2d[(0, 1)], 0.0, epsilon = 1e-12);
}

#[test]
fn behind_camera_is_culled() {
    let cam = cam(50.0, 16.0, 16.0, 32);
    let g = flat(Vec3::new(0.0, 0.0, -1.0), 0.5, 0.1, [0.5, 0.5, 0.5]);
    assert!(matches!(project_gaussian(&g, &cam), Err(ProjectError::BehindCamera(_))));
}

// ---- forward rendering ----

#[test]
fn empty_scene_renders_background() {
    let cam = cam(50.0, 16.0, 16.0, 32);
    let scene = scene_of(vec![]);
    let out = render(&scene, &cam, [0.25, 0.5, 0.75]);
    for r in 0..32 {
        for c in 0..32 {
            assert_eq!(out.color.get(r, c), [0.25, 0.5, 0.75]);
            assert_eq!(out.alpha.get(r, c), 0.0);
        }
    }
}

#[test]
fn single_centered_splat_composites_linearly() {
    // Principal point at the center of pixel (15, 15).
    let cam = cam(50.0, 15.5, 15.5, 32);
    let opacity = 0.63;
    let g = flat(Vec3::new(0.0, 0.0, 1.0), opacity, 0.05, [0.9, 0.4, 0.1]);
    let out = render(&scene_of(vec![g]), &cam, [0.0, 0.0, 0.0]);
    let px = out.color.get(15, 15);
    assert_relative_eq!(px[0], opacity * 0.9, epsilon = 1e-12);
    assert_relative_eq!(px[1], opacity * 0.4, epsilon = 1e-12);
    assert_relative_eq!(px[2], opacity * 0.1, epsilon = 1e-12);
    assert_relative_eq!(out.alpha.get(15, 15), opacity, epsilon = 1e-12);
}

#[test]
fn single_splat_depth_equals_camera_z() {
    let cam = cam(50.0, 16.0, 16.0, 32);
    let z = 2.75;
    let g = flat(Vec3::new(0.0, 0.0, z), 0.8, 0.1, [0.5, 0.5, 0.5]);
    let out = render(&scene_of(vec![g]), &cam, [0.0; 3]);
    for r in 0..32 {
        for c in 0..32 {
            if out.alpha.get(r, c) > 0.01 {
                assert_relative_eq!(out.depth.get(r, c), z, epsilon = 1e-4);
            }
        }
    }
}

fn random_scene(rng: &mut ChaCha8Rng, n: usize) -> CanonicalScene {
    let prims = (0..n)
        .map(|_| {
            let center = Vec3::new(
                rng.random_range(-0.4..0.4),
                rng.random_range(-0.4..0.4),
                rng.random_range(1.2..3.0),
            );
            let q = crate::math::quat::normalize_wpos([
                rng.random_range(0.2..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ])
            .unwrap();
            let scale = Vec3::new(
                rng.random_range(0.03..0.15),
                rng.random_range(0.03..0.15),
                rng.random_range(0.03..0.15),
            );
            let sh: Vec<f64> = (0..3).map(|_| rng.random_range(-1.2..1.2)).collect();
            GaussianPrimitive::new(center, rng.random_range(0.2..0.8), q, scale, sh).unwrap()
        })
        .collect();
    scene_of(prims)
}

/// Scenes for finite-difference checks: footprints large enough that the
/// 1/255 contribution cutoff never triggers inside the image, keeping the
/// rendered loss smooth along the perturbation path.
fn random_gradcheck_scene(rng: &mut ChaCha8Rng, n: usize) -> CanonicalScene {
    let prims = (0..n)
        .map(|_| {
            let center = Vec3::new(
                rng.random_range(-0.4..0.4),
                rng.random_range(-0.4..0.4),
                rng.random_range(1.2..3.0),
            );
            let q = crate::math::quat::normalize_wpos([
                rng.random_range(0.2..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ])
            .unwrap();
            let scale = Vec3::new(
                rng.random_range(0.6..2.5),
                rng.random_range(0.6..2.5),
                rng.random_range(0.6..2.5),
            );
            let sh: Vec<f64> = (0..3).map(|_| rng.random_range(-1.2..1.2)).collect();
            GaussianPrimitive::new(center, rng.random_range(0.2..0.5), q, scale, sh).unwrap()
        })
        .collect();
    scene_of(prims)
}

#[test]
fn transmittance_telescoping_via_two_backgrounds() {
    // color(bg=1) - color(bg=0) equals the final transmittance T per
    // channel, so alpha + T must be 1.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cam = cam(45.0, 16.0, 16.0, 32);
    let scene = random_scene(&mut rng, 8);
    let dark = render(&scene, &cam, [0.0; 3]);
    let lit = render(&scene, &cam, [1.0; 3]);
    for r in 0..32 {
        for c in 0..32 {
            let t = lit.color.get(r, c)[0] - dark.color.get(r, c)[0];
            assert!((dark.alpha.get(r, c) + t - 1.0).abs() < 1e-6);
        }
    }
}

#[test]
fn permutation_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cam = cam(45.0, 16.0, 16.0, 32);
    let scene = random_scene(&mut rng, 12);
    let mut shuffled = scene.clone();
    shuffled.primitives.reverse();
    shuffled.source_pixel.reverse();
    let a = render(&scene, &cam, [0.1, 0.2, 0.3]);
    let b = render(&shuffled, &cam, [0.1, 0.2, 0.3]);
    for (x, y) in a.color.data().iter().zip(b.color.data()) {
        assert!((x - y).abs() < 1e-6);
    }
}

#[test]
fn rigid_equivariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let scene = random_scene(&mut rng, 10);
    let t = CameraPose::new(
        crate::math::se3::exp_so3(&Vec3::new(0.1, -0.2, 0.05)),
        Vec3::new(0.2, -0.1, 0.3),
    )
    .unwrap();
    let p = CameraPose::new(
        crate::math::se3::exp_so3(&Vec3::new(-0.05, 0.1, 0.2)),
        Vec3::new(0.05, 0.02, 0.1),
    )
    .unwrap();
    let k = CameraIntrinsics::new(45.0, 45.0, 16.0, 16.0, 32, 32).unwrap();

    let moved_cam = Camera::new(k, p.compose(&t));
    let direct = render(&scene, &moved_cam, [0.2; 3]);

    let transformed = crate::scene::transform_scene(&scene, &t);
    let fixed_cam = Camera::new(k, p);
    let via_scene = render(&transformed, &fixed_cam, [0.2; 3]);

    assert!(crate::img::mean_abs_diff(&direct.color, &via_scene.color) < 1e-4);
}

// ---- gradients ----

fn loss_and_upstream(scene: &CanonicalScene, cam: &Camera, weights: &Image) -> f64 {
    let out = render(scene, cam, [0.0; 3]);
    out.color
        .data()
        .iter()
        .zip(weights.data())
        .map(|(c, w)| c * w)
        .sum()
}

#[test]
fn zero_upstream_gives_zero_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cam = cam(45.0, 16.0, 16.0, 32);
    let scene = random_scene(&mut rng, 5);
    let upstream = Image::new(32, 32);
    let (_, grads) = render_with_param_gradients(&scene, &cam, [0.0; 3], &upstream);
    for g in &grads {
        assert_eq!(g.center, Vec3::zeros());
        assert_eq!(g.opacity, 0.0);
        assert_eq!(g.rotation, [0.0; 4]);
        assert_eq!(g.scale, Vec3::zeros());
        assert!(g.sh.iter().all(|v| *v == 0.0));
    }
    let (_, xi) = render_with_pose_gradient(&scene, &cam, [0.0; 3], &upstream);
    assert_eq!(xi, Vec6::zeros());
}

#[test]
fn opacity_gradient_of_centered_splat_is_color() {
    let cam = cam(50.0, 15.5, 15.5, 32);
    let g = flat(Vec3::new(0.0, 0.0, 1.0), 0.63, 0.05, [0.9, 0.4, 0.1]);
    let scene = scene_of(vec![g]);
    let mut upstream = Image::new(32, 32);
    upstream.set(15, 15, [1.0, 0.0, 0.0]);
    let (_, grads) = render_with_param_gradients(&scene, &cam, [0.0; 3], &upstream);
    // Single term: d(color * alpha)/d(opacity) = color at exp(0) = 1.
    assert_relative_eq!(grads[0].opacity, 0.9, epsilon = 1e-12);
}

fn relative_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

#[test]
fn param_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let cam = cam(45.0, 16.0, 16.0, 32);
    for _ in 0..5 {
        let scene = random_gradcheck_scene(&mut rng, 5);
        let upstream = Image::from_fn(32, 32, |r, c| {
            [
                ((r + c) as f64 * 0.3).sin(),
                ((r * 2 + c) as f64 * 0.2).cos(),
                0.5,
            ]
        });
        let (_, grads) = render_with_param_gradients(&scene, &cam, [0.0; 3], &upstream);
        let h = 1e-4;
        for (pi, g) in grads.iter().enumerate() {
            let check = |set: &dyn Fn(&mut CanonicalScene, f64), analytic: f64| {
                let mut plus = scene.clone();
                set(&mut plus, h);
                let mut minus = scene.clone();
                set(&mut minus, -h);
                let fd = (loss_and_upstream(&plus, &cam, &upstream)
                    - loss_and_upstream(&minus, &cam, &upstream))
                    / (2.0 * h);
                if fd.abs() > 1e-7 || analytic.abs() > 1e-7 {
                    assert!(
                        relative_err(analytic, fd) < 1e-3,
                        "prim {pi}: analytic {analytic} vs fd {fd}"
                    );
                }
            };
            for k in 0..3 {
                check(&|s, d| s.primitives[pi].center[k] += d, g.center[k]);
                check(&|s, d| s.primitives[pi].scale[k] += d, g.scale[k]);
                check(&|s, d| s.primitives[pi].sh[k] += d, g.sh[k]);
            }
            check(&|s, d| s.primitives[pi].opacity += d, g.opacity);
            for k in 0..4 {
                check(&|s, d| s.primitives[pi].rotation[k] += d, g.rotation[k]);
            }
        }
    }
}

#[test]
fn pose_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let k = CameraIntrinsics::new(45.0, 45.0, 16.0, 16.0, 32, 32).unwrap();
    for trial in 0..5 {
        let scene = random_gradcheck_scene(&mut rng, 5);
        let pose = CameraPose::new(
            crate::math::se3::exp_so3(&Vec3::new(
                rng.random_range(-0.1..0.1),
                rng.random_range(-0.1..0.1),
                rng.random_range(-0.1..0.1),
            )),
            Vec3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), 0.0),
        )
        .unwrap();
        let cam = Camera::new(k, pose);
        let upstream = Image::from_fn(32, 32, |r, c| {
            [((r * c) as f64 * 0.1).sin(), 0.3, ((r + 2 * c) as f64 * 0.15).cos()]
        });
        let (_, xi) = render_with_pose_gradient(&scene, &cam, [0.0; 3], &upstream);
        let h = 1e-5;
        for i in 0..6 {
            let mut step = Vec6::zeros();
            step[i] = h;
            let plus = Camera::new(k, cam.pose.retract_left(&step));
            step[i] = -h;
            let minus = Camera::new(k, cam.pose.retract_left(&step));
            let fd = (loss_and_upstream(&scene, &plus, &upstream)
                - loss_and_upstream(&scene, &minus, &upstream))
                / (2.0 * h);
            if fd.abs() > 1e-6 || xi[i].abs() > 1e-6 {
                assert!(
                    relative_err(xi[i], fd) < 1e-3,
                    "trial {trial} coord {i}: analytic {} vs fd {fd}",
                    xi[i]
                );
            }
        }
    }
}

#[test]
fn on_axis_pose_jacobian_matches_hand_derivation() {
    // At the optical axis the 2x6 screen Jacobian has the closed form
    // d mean2d / d rho = (f/z) * [I2 | 0], d u / d phi_y = f, d v / d phi_x = -f.
    let f = 50.0;
    let z = 2.0;
    let cam = cam(f, 16.0, 16.0, 32);
    let g = flat(Vec3::new(0.0, 0.0, z), 0.5, 0.05, [0.5, 0.5, 0.5]);
    let h = 1e-6;
    let expected = [
        (0, 0, f / z),  // du/d rho_x
        (1, 1, f / z),  // dv/d rho_y
        (0, 4, f),      // du/d phi_y
        (1, 3, -f),     // dv/d phi_x
    ];
    for (row, coord, want) in expected {
        let mut step = Vec6::zeros();
        step[coord] = h;
        let plus = Camera::new(cam.intrinsics, cam.pose.retract_left(&step));
        step[coord] = -h;
        let minus = Camera::new(cam.intrinsics, cam.pose.retract_left(&step));
        let m_plus = project_gaussian(&g, &plus).unwrap().mean2d;
        let m_minus = project_gaussian(&g, &minus).unwrap().mean2d;
        let fd = (m_plus[row] - m_minus[row]) / (2.0 * h);
        assert_relative_eq!(fd, want, epsilon = 1e-4);
    }
}
