//! Analytic backward passes through compositing, Gaussian evaluation,
//! covariance construction, and projection.
//!
//! Gradients are taken with respect to the primitives' stored fields; the
//! rotation gradient is defined through internal quaternion normalization
//! (it is tangent to the unit sphere). SH gradients above degree 0 are not
//! propagated. The pose gradient is the derivative with respect to the
//! left-multiplied SE(3) increment `exp(xi) * pose`, `xi = [rho, phi]`.

use rayon::prelude::*;

use super::{
    blit_from, prepare, projection_jacobian, Prepared, PreparedSplat, RenderOutput, ALPHA_CUTOFF,
    TILE_SIZE, TRANSMITTANCE_EPS,
};
use crate::img::Image;
use crate::math::{quat, sh, Mat2, Mat3, Vec2, Vec3, Vec6};
use crate::scene::{Camera, CanonicalScene};

/// Loss gradients for one primitive, in the primitive's field layout.
#[derive(Debug, Clone)]
pub struct PrimitiveGradients {
    pub center: Vec3,
    pub opacity: f64,
    pub rotation: [f64; 4],
    pub scale: Vec3,
    /// Same layout as `GaussianPrimitive::sh`; only DC entries are filled.
    pub sh: Vec<f64>,
}

impl PrimitiveGradients {
    fn zeros(sh_len: usize) -> Self {
        Self {
            center: Vec3::zeros(),
            opacity: 0.0,
            rotation: [0.0; 4],
            scale: Vec3::zeros(),
            sh: vec![0.0; sh_len],
        }
    }
}

/// Screen-space gradients accumulated per splat during the pixel walk.
#[derive(Debug, Clone, Copy, Default)]
struct SplatGrad2D {
    mean2d: [f64; 2],
    /// d loss / d conic (a, b, c); b counts both off-diagonal entries.
    conic: [f64; 3],
    opacity: f64,
    color: [f64; 3],
}

struct Contribution {
    bin_pos: usize,
    alpha: f64,
    t_before: f64,
    d: Vec2,
}

/// Composites one tile while accumulating per-splat 2D gradients.
fn backward_tile(
    prep: &Prepared,
    tile: usize,
    width: usize,
    height: usize,
    background: [f64; 3],
    upstream: &Image,
) -> (super::TilePixels, Vec<SplatGrad2D>) {
    let (tx, ty) = (tile % prep.tiles_x, tile / prep.tiles_x);
    let x_range = tx * TILE_SIZE..((tx + 1) * TILE_SIZE).min(width);
    let y_range = ty * TILE_SIZE..((ty + 1) * TILE_SIZE).min(height);
    let bin = &prep.bins[tile];
    let n = x_range.len() * y_range.len();
    let mut pixels = super::TilePixels {
        color: vec![[0.0; 3]; n],
        alpha: vec![0.0; n],
        depth: vec![0.0; n],
    };
    let mut grads = vec![SplatGrad2D::default(); bin.len()];
    let mut contributions: Vec<Contribution> = Vec::with_capacity(bin.len().min(256));

    let mut i = 0;
    for py in y_range {
        for px in x_range.clone() {
            let pos = Vec2::new(px as f64 + 0.5, py as f64 + 0.5);
            contributions.clear();
            let mut t = 1.0;
            let mut rgb = [0.0; 3];
            let mut depth_acc = 0.0;
            let mut alpha_acc = 0.0;
            for (bin_pos, &si) in bin.iter().enumerate() {
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
                contributions.push(Contribution { bin_pos, alpha: alpha_i, t_before: t, d });
                t *= 1.0 - alpha_i;
                if t < TRANSMITTANCE_EPS {
                    break;
                }
            }
            for ch in 0..3 {
                rgb[ch] += t * background[ch];
            }
            pixels.color[i] = rgb;
            pixels.alpha[i] = alpha_acc;
            pixels.depth[i] = if alpha_acc > 1e-12 { depth_acc / alpha_acc } else { 0.0 };
            i += 1;

            let up = upstream.get(py, px);
            if up == [0.0; 3] {
                continue;
            }
            // Suffix accumulator: for contribution i this holds
            // sum_{j>i} c_j w_j + bg * t_final, per channel.
            let mut suffix = [t * background[0], t * background[1], t * background[2]];
            for contrib in contributions.iter().rev() {
                let s = &prep.splats[bin[contrib.bin_pos] as usize];
                let g = &mut grads[contrib.bin_pos];
                let w = contrib.alpha * contrib.t_before;
                let one_minus = (1.0 - contrib.alpha).max(1e-12);
                let mut dl_dalpha = 0.0;
                for ch in 0..3 {
                    g.color[ch] += up[ch] * w;
                    dl_dalpha += up[ch] * (s.color[ch] * contrib.t_before - suffix[ch] / one_minus);
                    suffix[ch] += s.color[ch] * w;
                }
                // alpha = opacity * exp(power)
                g.opacity += dl_dalpha * contrib.alpha / s.opacity;
                let dl_dpower = dl_dalpha * contrib.alpha;
                let (dx, dy) = (contrib.d.x, contrib.d.y);
                // power = -(a dx^2 + 2 b dx dy + c dy^2)/2 with d = pos - mean2d
                g.mean2d[0] += dl_dpower * (s.conic[0] * dx + s.conic[1] * dy);
                g.mean2d[1] += dl_dpower * (s.conic[1] * dx + s.conic[2] * dy);
                g.conic[0] += dl_dpower * (-0.5 * dx * dx);
                g.conic[1] += dl_dpower * (-dx * dy);
                g.conic[2] += dl_dpower * (-0.5 * dy * dy);
            }
        }
    }
    (pixels, grads)
}

/// Runs the shared tile walk and reduces per-tile 2D gradients in tile
/// order, keeping results bit-stable.
fn backward_2d(
    prep: &Prepared,
    width: usize,
    height: usize,
    background: [f64; 3],
    upstream: &Image,
) -> (RenderOutput, Vec<SplatGrad2D>) {
    let results: Vec<(super::TilePixels, Vec<SplatGrad2D>)> = (0..prep.bins.len())
        .into_par_iter()
        .map(|tile| backward_tile(prep, tile, width, height, background, upstream))
        .collect();

    let mut global = vec![SplatGrad2D::default(); prep.splats.len()];
    let mut tiles = Vec::with_capacity(results.len());
    for (tile, (pixels, local)) in results.into_iter().enumerate() {
        for (bin_pos, g) in local.into_iter().enumerate() {
            let si = prep.bins[tile][bin_pos] as usize;
            let acc = &mut global[si];
            acc.mean2d[0] += g.mean2d[0];
            acc.mean2d[1] += g.mean2d[1];
            for k in 0..3 {
                acc.conic[k] += g.conic[k];
                acc.color[k] += g.color[k];
            }
            acc.opacity += g.opacity;
        }
        tiles.push(pixels);
    }
    (blit_from(prep, tiles, width, height), global)
}

/// Backprop from screen-space gradients to the camera-space center and the
/// camera-frame covariance. Returns `(grad_t_cam, grad_sigma_cam)`.
fn backward_projection(s: &PreparedSplat, cam: &Camera, g: &SplatGrad2D) -> (Vec3, Mat3) {
    let k = &cam.intrinsics;
    let j = projection_jacobian(&s.t_cam, k.fx, k.fy);

    // conic = cov2d^-1, as a symmetric matrix gradient
    let conic_grad = Mat2::new(g.conic[0], g.conic[1] * 0.5, g.conic[1] * 0.5, g.conic[2]);
    let conic = Mat2::new(s.conic[0], s.conic[1], s.conic[1], s.conic[2]);
    let cov_grad = -(conic * conic_grad * conic);

    let sigma_cam_grad = j.transpose() * cov_grad * j;

    // mean2d path plus the covariance's dependence on t_cam through J
    let mean_grad = Vec2::new(g.mean2d[0], g.mean2d[1]);
    let mut t_grad = j.transpose() * mean_grad;

    let w = cam.pose.rotation();
    let sigma_cam = w * sigma_world(s) * w.transpose();
    let j_grad = 2.0 * cov_grad * j * sigma_cam;
    let (x, y, z) = (s.t_cam.x, s.t_cam.y, s.t_cam.z);
    let inv_z2 = 1.0 / (z * z);
    let inv_z3 = inv_z2 / z;
    t_grad.x += j_grad[(0, 2)] * (-k.fx * inv_z2);
    t_grad.y += j_grad[(1, 2)] * (-k.fy * inv_z2);
    t_grad.z += j_grad[(0, 0)] * (-k.fx * inv_z2)
        + j_grad[(1, 1)] * (-k.fy * inv_z2)
        + j_grad[(0, 2)] * (2.0 * k.fx * x * inv_z3)
        + j_grad[(1, 2)] * (2.0 * k.fy * y * inv_z3);

    (t_grad, sigma_cam_grad)
}

fn sigma_world(s: &PreparedSplat) -> Mat3 {
    let r = quat::to_matrix(s.rotation_unit);
    let m = Mat3::from_diagonal(&s.scale2);
    r * m * r.transpose()
}

/// d R / d q for a unit quaternion (w, x, y, z).
fn rotation_quat_jacobians(q: [f64; 4]) -> [Mat3; 4] {
    let [w, x, y, z] = q;
    [
        2.0 * Mat3::new(0.0, -z, y, z, 0.0, -x, -y, x, 0.0),
        2.0 * Mat3::new(0.0, y, z, y, -2.0 * x, -w, z, w, -2.0 * x),
        2.0 * Mat3::new(-2.0 * y, x, w, x, 0.0, z, -w, z, -2.0 * y),
        2.0 * Mat3::new(-2.0 * z, -w, x, w, -2.0 * z, y, x, y, 0.0),
    ]
}

/// Renders and returns `d loss / d field` for every primitive, where the
/// upstream image holds `d loss / d rendered color`.
pub fn render_with_param_gradients(
    scene: &CanonicalScene,
    cam: &Camera,
    background: [f64; 3],
    upstream: &Image,
) -> (RenderOutput, Vec<PrimitiveGradients>) {
    let (width, height) = (cam.intrinsics.width, cam.intrinsics.height);
    assert_eq!(upstream.shape(), (height, width), "upstream shape mismatch");
    let prep = prepare(scene, cam);
    let (output, grads2d) = backward_2d(&prep, width, height, background, upstream);

    let mut out: Vec<PrimitiveGradients> = scene
        .primitives
        .iter()
        .map(|p| PrimitiveGradients::zeros(p.sh.len()))
        .collect();

    let w = cam.pose.rotation();
    for (s, g2d) in prep.splats.iter().zip(&grads2d) {
        let prim = &scene.primitives[s.prim];
        let grad = &mut out[s.prim];
        let (t_grad, sigma_cam_grad) = backward_projection(s, cam, g2d);

        grad.center += w.transpose() * t_grad;
        grad.opacity += g2d.opacity;

        let sigma_world_grad = w.transpose() * sigma_cam_grad * w;
        let r = quat::to_matrix(s.rotation_unit);
        let m = Mat3::from_diagonal(&s.scale2);
        let r_grad = 2.0 * sigma_world_grad * r * m;
        let rt_sigma_r = r.transpose() * sigma_world_grad * r;
        for k in 0..3 {
            grad.scale[k] += 2.0 * prim.scale[k] * rt_sigma_r[(k, k)];
        }

        let jr = rotation_quat_jacobians(s.rotation_unit);
        let mut q_grad = [0.0; 4];
        for k in 0..4 {
            q_grad[k] = (r_grad.component_mul(&jr[k])).sum();
        }
        // Through normalization: project onto the unit-sphere tangent.
        let dot: f64 = (0..4).map(|k| q_grad[k] * s.rotation_unit[k]).sum();
        for k in 0..4 {
            grad.rotation[k] += q_grad[k] - dot * s.rotation_unit[k];
        }

        let n = prim.sh_coeffs_per_channel();
        for ch in 0..3 {
            if s.color_interior[ch] {
                grad.sh[ch * n] += g2d.color[ch] * sh::SH_C0;
            }
        }
    }
    (output, out)
}

/// Renders and returns `d loss / d xi` for the left-multiplied camera
/// increment `exp(xi) * pose`, computed analytically from the camera
/// Jacobian of each splat.
pub fn render_with_pose_gradient(
    scene: &CanonicalScene,
    cam: &Camera,
    background: [f64; 3],
    upstream: &Image,
) -> (RenderOutput, Vec6) {
    let (width, height) = (cam.intrinsics.width, cam.intrinsics.height);
    assert_eq!(upstream.shape(), (height, width), "upstream shape mismatch");
    let prep = prepare(scene, cam);
    let (output, grads2d) = backward_2d(&prep, width, height, background, upstream);

    let w = cam.pose.rotation();
    let mut xi = Vec6::zeros();
    for (s, g2d) in prep.splats.iter().zip(&grads2d) {
        let (t_grad, sigma_cam_grad) = backward_projection(s, cam, g2d);

        // t_cam = exp(phi^) (W mu + t) + V rho  =>  d t_cam = rho + phi x t_cam
        xi[0] += t_grad.x;
        xi[1] += t_grad.y;
        xi[2] += t_grad.z;
        let rot_part = s.t_cam.cross(&t_grad);

        // W' = exp(phi^) W acting on sigma_cam = W sigma_world W^T
        let w_grad = 2.0 * sigma_cam_grad * w * sigma_world(s);
        let b = w * w_grad.transpose();
        let w_rot = Vec3::new(
            b[(1, 2)] - b[(2, 1)],
            b[(2, 0)] - b[(0, 2)],
            b[(0, 1)] - b[(1, 0)],
        );
        xi[3] += rot_part.x + w_rot.x;
        xi[4] += rot_part.y + w_rot.y;
        xi[5] += rot_part.z + w_rot.z;
    }
    (output, xi)
}
