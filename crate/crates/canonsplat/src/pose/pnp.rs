//! Coarse pose from pixel/center correspondences: Grunert P3P minimal
//! solves inside RANSAC (sample of 4: three points solve, the fourth
//! disambiguates), followed by a Gauss-Newton reprojection refit on all
//! inliers.

use nalgebra::Matrix2x3;
use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{PnPConfig, PnpError};
use crate::lift::pixel_coord;
use crate::math::{poly, skew, Mat3, Vec2, Vec3, Vec6};
use crate::scene::{CameraIntrinsics, CameraPose, CanonicalScene};

/// A 2D pixel / 3D canonical-point correspondence.
#[derive(Debug, Clone, Copy)]
pub struct Correspondence {
    pub pixel: Vec2,
    pub point: Vec3,
}

/// Coarse pose estimate plus its consensus size.
#[derive(Debug, Clone)]
pub struct PnpEstimate {
    pub pose: CameraPose,
    pub inliers: usize,
}

/// Extracts the query view's pixel-aligned correspondences: pixel `p_j`
/// paired with the canonical center of the primitive lifted from it.
pub fn scene_correspondences(scene: &CanonicalScene, query_view: u32) -> Vec<Correspondence> {
    let width = scene.view_shape.1 as usize;
    scene
        .view_indices(query_view)
        .into_iter()
        .map(|i| {
            let j = scene.source_pixel[i] as usize;
            Correspondence {
                pixel: pixel_coord(j / width, j % width),
                point: scene.primitives[i].center,
            }
        })
        .collect()
}

/// Recovers the canonical-to-camera pose of `query_view` from the scene's
/// own pixel-aligned Gaussian centers.
pub fn coarse_pose_pnp(
    scene: &CanonicalScene,
    query_view: u32,
    intrinsics: &CameraIntrinsics,
    cfg: &PnPConfig,
) -> Result<PnpEstimate, PnpError> {
    let corrs = scene_correspondences(scene, query_view);
    solve_pnp_ransac(&corrs, intrinsics, cfg)
}

/// RANSAC + refit over explicit correspondences.
pub fn solve_pnp_ransac(
    corrs: &[Correspondence],
    intrinsics: &CameraIntrinsics,
    cfg: &PnPConfig,
) -> Result<PnpEstimate, PnpError> {
    let n = corrs.len();
    if n < 6 {
        return Err(PnpError::InsufficientCorrespondences { got: n, need: 6 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let bearings: Vec<Vec3> = corrs.iter().map(|c| bearing(&c.pixel, intrinsics)).collect();
    let threshold2 = cfg.reprojection_threshold * cfg.reprojection_threshold;

    let mut best: Option<(usize, CameraPose)> = None;
    for _ in 0..cfg.ransac_iterations {
        let idx = sample_indices(&mut rng, n, cfg.sample_size.min(n)).into_vec();
        let (i0, i1, i2, check) = (idx[0], idx[1], idx[2], idx[3]);
        let world = [corrs[i0].point, corrs[i1].point, corrs[i2].point];
        if collinear(&world) {
            continue;
        }
        let f = [bearings[i0], bearings[i1], bearings[i2]];
        let mut best_cand: Option<(f64, CameraPose)> = None;
        for pose in p3p_grunert(&world, &f) {
            let err = reprojection_error2(&pose, &corrs[check], intrinsics);
            if best_cand.as_ref().is_none_or(|(e, _)| err < *e) {
                best_cand = Some((err, pose));
            }
        }
        let Some((check_err, pose)) = best_cand else {
            continue;
        };
        if check_err > threshold2 {
            continue;
        }
        let inliers = corrs
            .iter()
            .filter(|c| reprojection_error2(&pose, c, intrinsics) < threshold2)
            .count();
        if best.as_ref().is_none_or(|(bi, _)| inliers > *bi) {
            best = Some((inliers, pose));
        }
    }

    let Some((inlier_count, pose)) = best else {
        return Err(PnpError::DegenerateGeometry);
    };
    if inlier_count < cfg.min_inliers {
        return Err(PnpError::DegenerateGeometry);
    }

    let inlier_set: Vec<Correspondence> = corrs
        .iter()
        .filter(|c| reprojection_error2(&pose, c, intrinsics) < threshold2)
        .copied()
        .collect();
    let refined = refit_reprojection(&pose, &inlier_set, intrinsics);
    let final_inliers = corrs
        .iter()
        .filter(|c| reprojection_error2(&refined, c, intrinsics) < threshold2)
        .count();
    // Keep whichever fit explains more correspondences.
    if final_inliers >= inlier_count {
        Ok(PnpEstimate { pose: refined, inliers: final_inliers })
    } else {
        Ok(PnpEstimate { pose, inliers: inlier_count })
    }
}

fn bearing(pixel: &Vec2, k: &CameraIntrinsics) -> Vec3 {
    Vec3::new((pixel.x - k.cx) / k.fx, (pixel.y - k.cy) / k.fy, 1.0).normalize()
}

fn collinear(p: &[Vec3; 3]) -> bool {
    let u = p[1] - p[0];
    let v = p[2] - p[0];
    u.cross(&v).norm() <= 1e-9 * u.norm().max(1e-12) * v.norm().max(1e-12)
}

fn reprojection_error2(pose: &CameraPose, c: &Correspondence, k: &CameraIntrinsics) -> f64 {
    let p = pose.apply(&c.point);
    if p.z <= 1e-9 {
        return f64::INFINITY;
    }
    let u = k.fx * p.x / p.z + k.cx;
    let v = k.fy * p.y / p.z + k.cy;
    (u - c.pixel.x).powi(2) + (v - c.pixel.y).powi(2)
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

/// Grunert's P3P: distances from the quartic in `v = s3/s1`, then absolute
/// orientation from the three recovered camera-frame points. Returns up to
/// four world-to-camera candidates.
fn p3p_grunert(world: &[Vec3; 3], f: &[Vec3; 3]) -> Vec<CameraPose> {
    let a2 = (world[1] - world[2]).norm_squared();
    let b2 = (world[0] - world[2]).norm_squared();
    let c2 = (world[0] - world[1]).norm_squared();
    if a2 <= 0.0 || b2 <= 0.0 || c2 <= 0.0 {
        return Vec::new();
    }
    let cos_a = f[1].dot(&f[2]);
    let cos_b = f[0].dot(&f[2]);
    let cos_g = f[0].dot(&f[1]);

    let p = (a2 - c2) / b2;
    let rc = c2 / b2;

    // u(v) = n(v) / d(v); substituting into the remaining constraint gives
    // n^2 - 2 cos_g n d + d^2 (1 - rc g) = 0 with g(v) = 1 + v^2 - 2 v cos_b.
    let n = [p + 1.0, -2.0 * p * cos_b, p - 1.0];
    let d = [2.0 * cos_g, -2.0 * cos_a];

    let nn = poly_mul(&n, &n);
    let nd = poly_mul(&n, &d);
    let dd = poly_mul(&d, &d);
    // e = 1 - rc * g
    let e = [1.0 - rc, 2.0 * rc * cos_b, -rc];
    let dde = poly_mul(&dd, &e);

    let mut quartic = [0.0; 5];
    for (i, &v) in nn.iter().enumerate() {
        quartic[i] += v;
    }
    for (i, &v) in nd.iter().enumerate() {
        quartic[i] -= 2.0 * cos_g * v;
    }
    for (i, &v) in dde.iter().enumerate() {
        quartic[i] += v;
    }

    let mut poses = Vec::new();
    for v in poly::real_roots(&quartic) {
        if !(v > 1e-9) {
            continue;
        }
        let gv = 1.0 + v * v - 2.0 * v * cos_b;
        if gv <= 1e-12 {
            continue;
        }
        let s1 = (b2 / gv).sqrt();
        let dv = d[0] + d[1] * v;
        if dv.abs() < 1e-12 {
            continue;
        }
        let u = (n[0] + n[1] * v + n[2] * v * v) / dv;
        if !(u > 1e-9) {
            continue;
        }
        let (s2, s3) = (u * s1, v * s1);
        let cam = [f[0] * s1, f[1] * s2, f[2] * s3];
        if let Some(pose) = absolute_orientation(world, &cam) {
            poses.push(pose);
        }
    }
    poses
}

/// Rigid world-to-camera fit of three point pairs (Kabsch).
fn absolute_orientation(world: &[Vec3; 3], cam: &[Vec3; 3]) -> Option<CameraPose> {
    let wc = (world[0] + world[1] + world[2]) / 3.0;
    let cc = (cam[0] + cam[1] + cam[2]) / 3.0;
    let mut h = Mat3::zeros();
    for i in 0..3 {
        h += (cam[i] - cc) * (world[i] - wc).transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u?;
    let vt = svd.v_t?;
    let mut r = u * vt;
    if r.determinant() < 0.0 {
        let mut flip = Mat3::identity();
        flip[(2, 2)] = -1.0;
        r = u * flip * vt;
    }
    let t = cc - r * wc;
    CameraPose::new(r, t).ok()
}

/// Gauss-Newton on the SE(3) tangent minimizing total squared reprojection
/// error over the inliers.
fn refit_reprojection(
    init: &CameraPose,
    corrs: &[Correspondence],
    k: &CameraIntrinsics,
) -> CameraPose {
    let mut pose = init.clone();
    for _ in 0..20 {
        let mut jtj = nalgebra::Matrix6::<f64>::zeros();
        let mut jtr = Vec6::zeros();
        let mut used = 0usize;
        for c in corrs {
            let p = pose.apply(&c.point);
            if p.z <= 1e-9 {
                continue;
            }
            used += 1;
            let r = Vec2::new(
                k.fx * p.x / p.z + k.cx - c.pixel.x,
                k.fy * p.y / p.z + k.cy - c.pixel.y,
            );
            let j_proj: Matrix2x3<f64> = crate::render::projection_jacobian(&p, k.fx, k.fy);
            let mut j = nalgebra::Matrix2x6::<f64>::zeros();
            let dp_rot = -skew(&p);
            for col in 0..3 {
                j[(0, col)] = j_proj[(0, col)];
                j[(1, col)] = j_proj[(1, col)];
                for row in 0..2 {
                    let mut acc = 0.0;
                    for m in 0..3 {
                        acc += j_proj[(row, m)] * dp_rot[(m, col)];
                    }
                    j[(row, col + 3)] = acc;
                }
            }
            jtj += j.transpose() * j;
            jtr += j.transpose() * r;
        }
        if used < 3 {
            break;
        }
        // Tiny Tikhonov term keeps the normal equations solvable.
        for i in 0..6 {
            jtj[(i, i)] += 1e-12;
        }
        let Some(delta) = jtj.lu().solve(&(-jtr)) else {
            break;
        };
        pose = pose.retract_left(&delta);
        if delta.norm() < 1e-14 {
            break;
        }
    }
    pose
}
