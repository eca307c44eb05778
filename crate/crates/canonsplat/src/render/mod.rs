//! Differentiable forward splatting of a canonical scene.
//!
//! Software tiled rasterizer (16x16 tiles) with exact per-tile depth sort,
//! EWA-style covariance projection, and front-to-back alpha compositing.
//! Backward passes provide analytic gradients with respect to Gaussian
//! parameters and with respect to the camera pose (SE(3) tangent, left
//! increment); see [`render_with_param_gradients`] and
//! [`render_with_pose_gradient`].
//!
//! All passes are deterministic: tiles are processed independently and
//! reduced in tile order, so outputs are bit-stable.

mod backward;

pub use backward::{render_with_param_gradients, render_with_pose_gradient, PrimitiveGradients};

use rayon::prelude::*;
use thiserror::Error;

use crate::img::{Image, ScalarGrid};
use crate::math::{quat, sh, Mat2, Mat3, Vec2, Vec3};
use crate::scene::{Camera, CanonicalScene, GaussianPrimitive};

/// Near-plane depth below which Gaussians are culled.
pub const NEAR_PLANE: f64 = 0.01;
/// Anti-aliasing floor added to the diagonal of every 2D covariance (px^2).
pub const COV2D_EPS: f64 = 0.3;
/// Per-splat contributions below this alpha are skipped.
pub const ALPHA_CUTOFF: f64 = 1.0 / 255.0;
/// Compositing terminates once transmittance falls below this.
pub const TRANSMITTANCE_EPS: f64 = 1e-4;
/// Tile edge length in pixels.
pub const TILE_SIZE: usize = 16;

#[derive(Debug, Error)]
pub enum ProjectError {
    #[error("gaussian is behind camera (z = {0} <= {NEAR_PLANE})")]
    BehindCamera(f64),
}

/// A Gaussian projected to screen space.
#[derive(Debug, Clone)]
pub struct Splat2D {
    pub mean2d: Vec2,
    pub cov2d: Mat2,
    /// Camera-space z of the center.
    pub depth: f64,
    /// SH evaluated along the view ray, clamped to [0,1].
    pub color: [f64; 3],
    pub opacity: f64,
}

/// Rendered color/alpha/depth maps.
#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub color: Image,
    /// Accumulated opacity in [0,1].
    pub alpha: ScalarGrid,
    /// Alpha-weighted expected depth (0 where nothing was hit).
    pub depth: ScalarGrid,
}

struct ProjectedCore {
    t_cam: Vec3,
    mean2d: Vec2,
    cov2d: Mat2,
    rotation_unit: [f64; 4],
    scale2: Vec3,
}

/// Pinhole projection and EWA covariance `J W Sigma W^T J^T + eps I`.
/// Returns `None` for centers behind the near plane.
fn project_core(g: &GaussianPrimitive, cam: &Camera) -> Option<ProjectedCore> {
    let t_cam = cam.pose.apply(&g.center);
    if t_cam.z <= NEAR_PLANE {
        return None;
    }
    let k = &cam.intrinsics;
    let mean2d = Vec2::new(k.fx * t_cam.x / t_cam.z + k.cx, k.fy * t_cam.y / t_cam.z + k.cy);

    let norm = g.rotation.iter().map(|c| c * c).sum::<f64>().sqrt();
    let rotation_unit = [
        g.rotation[0] / norm,
        g.rotation[1] / norm,
        g.rotation[2] / norm,
        g.rotation[3] / norm,
    ];
    let scale2 = g.scale.component_mul(&g.scale);

    let w = cam.pose.rotation();
    let r = quat::to_matrix(rotation_unit);
    let sigma_cam = w * (r * Mat3::from_diagonal(&scale2) * r.transpose()) * w.transpose();
    let j = projection_jacobian(&t_cam, k.fx, k.fy);
    let cov2d = j * sigma_cam * j.transpose() + Mat2::identity() * COV2D_EPS;

    Some(ProjectedCore { t_cam, mean2d, cov2d, rotation_unit, scale2 })
}

/// Projects one Gaussian through the camera into a screen-space splat.
pub fn project_gaussian(g: &GaussianPrimitive, cam: &Camera) -> Result<Splat2D, ProjectError> {
    let core = match project_core(g, cam) {
        Some(core) => core,
        None => return Err(ProjectError::BehindCamera(cam.pose.apply(&g.center).z)),
    };
    let (color, _) = splat_color(g, cam);
    Ok(Splat2D {
        mean2d: core.mean2d,
        cov2d: core.cov2d,
        depth: core.t_cam.z,
        color,
        opacity: g.opacity,
    })
}

/// `d mean2d / d t_cam` at the camera-space center.
pub fn projection_jacobian(t_cam: &Vec3, fx: f64, fy: f64) -> nalgebra::Matrix2x3<f64> {
    let inv_z = 1.0 / t_cam.z;
    let inv_z2 = inv_z * inv_z;
    nalgebra::Matrix2x3::new(
        fx * inv_z,
        0.0,
        -fx * t_cam.x * inv_z2,
        0.0,
        fy * inv_z,
        -fy * t_cam.y * inv_z2,
    )
}

/// Evaluates `0.5 + sum c Y` along the camera->center ray, clamped to
/// [0,1]. Also returns a per-channel flag telling whether the clamp was
/// inactive, which gates the SH gradient.
pub(crate) fn splat_color(g: &GaussianPrimitive, cam: &Camera) -> ([f64; 3], [bool; 3]) {
    let degree = g.sh_degree();
    let n = g.sh_coeffs_per_channel();
    let mut basis = [0.0; 16];
    if degree == 0 {
        basis[0] = sh::SH_C0;
    } else {
        let dir = g.center - cam.pose.center();
        let norm = dir.norm();
        let dir = if norm > 1e-12 { dir / norm } else { Vec3::new(0.0, 0.0, 1.0) };
        sh::eval_basis(&dir, degree, &mut basis[..n]);
    }
    let mut color = [0.0; 3];
    let mut interior = [false; 3];
    for ch in 0..3 {
        let mut v = 0.5;
        for i in 0..n {
            v += g.sh[ch * n + i] * basis[i];
        }
        interior[ch] = (0.0..=1.0).contains(&v);
        color[ch] = v.clamp(0.0, 1.0);
    }
    (color, interior)
}

/// Splat with precomputed compositing state, ready for tile traversal.
#[derive(Debug, Clone)]
pub(crate) struct PreparedSplat {
    pub prim: usize,
    pub mean2d: Vec2,
    /// Inverse 2D covariance, (a, b, c) of [[a, b], [b, c]].
    pub conic: [f64; 3],
    pub depth: f64,
    pub color: [f64; 3],
    pub color_interior: [bool; 3],
    pub opacity: f64,
    pub t_cam: Vec3,
    pub rotation_unit: [f64; 4],
    pub scale2: Vec3,
}

pub(crate) struct Prepared {
    pub splats: Vec<PreparedSplat>,
    /// Per tile: indices into `splats`, sorted front-to-back.
    pub bins: Vec<Vec<u32>>,
    pub tiles_x: usize,
    pub tiles_y: usize,
}

pub(crate) fn prepare(scene: &CanonicalScene, cam: &Camera) -> Prepared {
    let (width, height) = (cam.intrinsics.width, cam.intrinsics.height);
    let tiles_x = width.div_ceil(TILE_SIZE);
    let tiles_y = height.div_ceil(TILE_SIZE);
    let mut splats = Vec::new();
    let mut bins = vec![Vec::new(); tiles_x * tiles_y];

    for (idx, g) in scene.primitives.iter().enumerate() {
        let Some(core) = project_core(g, cam) else {
            continue;
        };
        if g.opacity <= ALPHA_CUTOFF {
            continue; // such a splat never clears the contribution cutoff
        }
        let (a, b, c) = (core.cov2d[(0, 0)], core.cov2d[(0, 1)], core.cov2d[(1, 1)]);
        let det = a * c - b * b;
        if det <= 0.0 {
            continue; // cannot happen with the eps floor, but stay safe
        }
        let conic = [c / det, -b / det, a / det];

        let mid = 0.5 * (a + c);
        let lambda_max = mid + (mid * mid - det).max(0.0).sqrt();
        // Extent at which alpha exactly reaches the cutoff: every pixel
        // outside this radius is skipped by the cutoff, so moving tile
        // boundaries cannot change the render.
        let radius = (2.0 * (g.opacity / ALPHA_CUTOFF).ln() * lambda_max).sqrt() + 1e-9;

        let tile_f = TILE_SIZE as f64;
        let x0 = ((core.mean2d.x - radius) / tile_f).floor().max(0.0) as usize;
        let y0 = ((core.mean2d.y - radius) / tile_f).floor().max(0.0) as usize;
        let x1 = (((core.mean2d.x + radius) / tile_f).floor() as isize).min(tiles_x as isize - 1);
        let y1 = (((core.mean2d.y + radius) / tile_f).floor() as isize).min(tiles_y as isize - 1);
        if x1 < x0 as isize
            || y1 < y0 as isize
            || core.mean2d.x + radius < 0.0
            || core.mean2d.y + radius < 0.0
        {
            continue;
        }

        let (color, color_interior) = splat_color(g, cam);
        let splat_idx = splats.len() as u32;
        splats.push(PreparedSplat {
            prim: idx,
            mean2d: core.mean2d,
            conic,
            depth: core.t_cam.z,
            color,
            color_interior,
            opacity: g.opacity,
            t_cam: core.t_cam,
            rotation_unit: core.rotation_unit,
            scale2: core.scale2,
        });
        for ty in y0..=(y1 as usize) {
            for tx in x0..=(x1 as usize) {
                bins[ty * tiles_x + tx].push(splat_idx);
            }
        }
    }

    for bin in &mut bins {
        bin.sort_by(|&i, &j| {
            let (si, sj) = (&splats[i as usize], &splats[j as usize]);
            si.depth
                .partial_cmp(&sj.depth)
                .unwrap()
                .then(si.prim.cmp(&sj.prim))
        });
    }

    Prepared { splats, bins, tiles_x, tiles_y }
}

pub(crate) struct TilePixels {
    pub color: Vec<[f64; 3]>,
    pub alpha: Vec<f64>,
    pub depth: Vec<f64>,
}

/// Composites one tile front-to-back. Pixel order within the tile is
/// row-major over the tile's intersection with the image.
pub(crate) fn composite_tile(
    prep: &Prepared,
    tile: usize,
    width: usize,
    height: usize,
    background: [f64; 3],
) -> TilePixels {
    let (tx, ty) = (tile % prep.tiles_x, tile / prep.tiles_x);
    let x_range = tx * TILE_SIZE..((tx + 1) * TILE_SIZE).min(width);
    let y_range = ty * TILE_SIZE..((ty + 1) * TILE_SIZE).min(height);
    let n = x_range.len() * y_range.len();
    let mut out = TilePixels {
        color: vec![[0.0; 3]; n],
        alpha: vec![0.0; n],
        depth: vec![0.0; n],
    };
    let bin = &prep.bins[tile];

    let mut i = 0;
    for py in y_range {
        for px in x_range.clone() {
            let pos = Vec2::new(px as f64 + 0.5, py as f64 + 0.5);
            let mut t = 1.0;
            let mut rgb = [0.0; 3];
            let mut depth_acc = 0.0;
            let mut alpha_acc = 0.0;
            for &si in bin {
                let s = &prep.splats[si as usize];
                let d = pos - s.mean2d;
                let power = -0.5
                    * (s.conic[0] * d.x * d.x
                        + 2.0 * s.conic[1] * d.x * d.y
                        + s.conic[2] * d.y * d.y);
                let alpha_i = s.opacity * power.exp();
                if alpha_i < ALPHA_CUTOFF {
                    continue;
                }
                let w = alpha_i * t;
                for ch in 0..3 {
                    rgb[ch] += w * s.color[ch];
                }
                depth_acc += w * s.depth;
                alpha_acc += w;
                t *= 1.0 - alpha_i;
                if t < TRANSMITTANCE_EPS {
                    break;
                }
            }
            for ch in 0..3 {
                rgb[ch] += t * background[ch];
            }
            out.color[i] = rgb;
            out.alpha[i] = alpha_acc;
            out.depth[i] = if alpha_acc > 1e-12 { depth_acc / alpha_acc } else { 0.0 };
            i += 1;
        }
    }
    out
}

pub(crate) fn blit_from(
    prep: &Prepared,
    tiles: Vec<TilePixels>,
    width: usize,
    height: usize,
) -> RenderOutput {
    let mut color = Image::new(height, width);
    let mut alpha = ScalarGrid::new(height, width);
    let mut depth = ScalarGrid::new(height, width);
    for (tile, pixels) in tiles.into_iter().enumerate() {
        let (tx, ty) = (tile % prep.tiles_x, tile / prep.tiles_x);
        let x_range = tx * TILE_SIZE..((tx + 1) * TILE_SIZE).min(width);
        let y_range = ty * TILE_SIZE..((ty + 1) * TILE_SIZE).min(height);
        let mut i = 0;
        for py in y_range {
            for px in x_range.clone() {
                color.set(py, px, pixels.color[i]);
                alpha.set(py, px, pixels.alpha[i]);
                depth.set(py, px, pixels.depth[i]);
                i += 1;
            }
        }
    }
    RenderOutput { color, alpha, depth }
}

/// Renders the scene from a camera over a constant background color.
pub fn render(scene: &CanonicalScene, cam: &Camera, background: [f64; 3]) -> RenderOutput {
    let (width, height) = (cam.intrinsics.width, cam.intrinsics.height);
    let prep = prepare(scene, cam);
    let tiles: Vec<TilePixels> = (0..prep.bins.len())
        .into_par_iter()
        .map(|tile| composite_tile(&prep, tile, width, height, background))
        .collect();
    blit_from(&prep, tiles, width, height)
}

#[cfg(test)]
mod tests;
