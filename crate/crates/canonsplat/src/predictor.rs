//! The views-to-Gaussians mapping as a pluggable interface, with oracle
//! implementations standing in for the neural predictor: a canonical-space
//! oracle (lift every view straight into view 1's frame) and the
//! transform-then-fuse baseline (lift locally, then transform by possibly
//! perturbed poses and concatenate).

use std::path::PathBuf;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::lift::{lift_view, IntrinsicKind, LiftError, RawCenter, RawGaussianGrid, RawGaussianParams};
use crate::math::{logit, quat, sh, Vec3};
use crate::scene::{
    transform_scene, CameraPose, CanonicalScene, PlyError, SceneError, ViewBundle,
};

#[derive(Debug, Error)]
pub enum PredictorError {
    #[error("need at least 2 views, got {0}")]
    TooFewViews(usize),
    #[error("view {view} has shape {got_h}x{got_w}, expected {want_h}x{want_w}")]
    ShapeMismatch { view: usize, got_h: usize, got_w: usize, want_h: usize, want_w: usize },
    #[error("view {0} has no oracle depth map")]
    MissingDepth(usize),
    #[error("view {0} has no pose")]
    MissingPose(usize),
    #[error("unknown predictor '{0}' (expected oracle-canonical, oracle-transform-fuse, or from-file:<path>)")]
    UnknownName(String),
    #[error(transparent)]
    Ply(#[from] PlyError),
    #[error(transparent)]
    Lift(#[from] LiftError),
    #[error(transparent)]
    Scene(#[from] SceneError),
}

/// Maps unposed views (plus intrinsics) to a pixel-aligned canonical scene.
///
/// Implementations must produce `V*H*W` primitives whose view-1 subset is
/// expressed in view 1's own camera frame, with `source_view` and
/// `source_pixel` bijective onto views x pixels.
pub trait GaussianPredictor: Send + Sync {
    fn predict(
        &self,
        views: &[ViewBundle],
        intrinsic_mode: IntrinsicKind,
    ) -> Result<CanonicalScene, PredictorError>;
}

fn check_views(views: &[ViewBundle]) -> Result<(usize, usize), PredictorError> {
    if views.len() < 2 {
        return Err(PredictorError::TooFewViews(views.len()));
    }
    let (h, w) = views[0].shape();
    for (i, v) in views.iter().enumerate().skip(1) {
        let (vh, vw) = v.shape();
        if (vh, vw) != (h, w) {
            return Err(PredictorError::ShapeMismatch {
                view: i,
                got_h: vh,
                got_w: vw,
                want_h: h,
                want_w: w,
            });
        }
    }
    Ok((h, w))
}

/// Transform mapping view `v`'s camera frame into the canonical frame
/// (view 1's camera frame): `pose_1 ∘ pose_v^-1`.
fn pose_to_canonical(views: &[ViewBundle], v: usize) -> Result<CameraPose, PredictorError> {
    if v == 0 {
        return Ok(CameraPose::identity());
    }
    let anchor = views[0].pose.as_ref().ok_or(PredictorError::MissingPose(0))?;
    let pose_v = views[v].pose.as_ref().ok_or(PredictorError::MissingPose(v))?;
    Ok(anchor.compose(&pose_v.inverse()))
}

/// Ground-truth world-to-camera pose of view `v` expressed in the canonical
/// frame; the value pose estimation is judged against.
pub fn canonical_view_pose(views: &[ViewBundle], v: usize) -> Result<CameraPose, PredictorError> {
    Ok(pose_to_canonical(views, v)?.inverse())
}

fn oracle_raw_grid(
    view: &ViewBundle,
    opacity: f64,
    scale_factor: f64,
) -> Result<RawGaussianGrid, LiftError> {
    let fx = view.intrinsics.fx;
    let raw_opacity = logit(opacity);
    let depth = view.depth.as_ref().ok_or(LiftError::MissingDepth)?;
    RawGaussianGrid::from_view_depth(view, |r, c| {
        let rgb = view.image.get(r, c);
        let d = depth.get(r, c);
        RawGaussianParams {
            raw_center: RawCenter::Depth(d),
            raw_opacity,
            raw_rotation: [1.0, 0.0, 0.0, 0.0],
            raw_scale: [(scale_factor * d / fx).ln(); 3],
            raw_sh: vec![
                (rgb[0] - 0.5) / sh::SH_C0,
                (rgb[1] - 0.5) / sh::SH_C0,
                (rgb[2] - 0.5) / sh::SH_C0,
            ],
        }
    })
}

fn assemble(
    per_view: Vec<Vec<crate::scene::GaussianPrimitive>>,
    h: usize,
    w: usize,
) -> CanonicalScene {
    let v = per_view.len() as u32;
    let mut primitives = Vec::with_capacity(per_view.len() * h * w);
    let mut source_view = Vec::with_capacity(per_view.len() * h * w);
    let mut source_pixel = Vec::with_capacity(per_view.len() * h * w);
    for (vi, prims) in per_view.into_iter().enumerate() {
        for (j, p) in prims.into_iter().enumerate() {
            primitives.push(p);
            source_view.push(vi as u32 + 1);
            source_pixel.push(j as u32);
        }
    }
    CanonicalScene::new(primitives, source_view, source_pixel, v, (h as u32, w as u32), 0)
        .expect("parallel arrays built together")
}

/// Oracle that lifts every view directly into the canonical frame using
/// its ground-truth depth and pose. Colors come from the source image as
/// degree-0 SH; opacity and footprint are fixed configuration.
#[derive(Debug, Clone)]
pub struct OracleCanonicalPredictor {
    pub opacity: f64,
    /// Isotropic scale is `scale_factor * depth / fx` per primitive, an
    /// (approximately) screen-constant footprint.
    pub scale_factor: f64,
}

impl Default for OracleCanonicalPredictor {
    fn default() -> Self {
        Self { opacity: 0.9, scale_factor: 1.0 }
    }
}

impl GaussianPredictor for OracleCanonicalPredictor {
    fn predict(
        &self,
        views: &[ViewBundle],
        _intrinsic_mode: IntrinsicKind,
    ) -> Result<CanonicalScene, PredictorError> {
        let (h, w) = check_views(views)?;
        let mut per_view = Vec::with_capacity(views.len());
        for (vi, view) in views.iter().enumerate() {
            if view.depth.is_none() {
                return Err(PredictorError::MissingDepth(vi));
            }
            let grid = oracle_raw_grid(view, self.opacity, self.scale_factor)?;
            let pose = pose_to_canonical(views, vi)?;
            per_view.push(lift_view(view, &pose, &grid)?);
        }
        Ok(assemble(per_view, h, w))
    }
}

/// Exact-magnitude pose perturbation applied to the transform step of the
/// baseline pipeline: a rotation of `rot_deg` about a random axis in the
/// canonical x-y plane and a translation of length `trans` in a random
/// direction, seeded per view. Keeping the axis orthogonal to the optical
/// axis guarantees the rotation actually displaces scene content (its
/// lever arm grows with depth) instead of spinning about the view ray.
#[derive(Debug, Clone, Copy)]
pub struct PoseNoise {
    pub rot_deg: f64,
    pub trans: f64,
    pub seed: u64,
}

impl PoseNoise {
    pub fn none() -> Self {
        Self { rot_deg: 0.0, trans: 0.0, seed: 0 }
    }

    fn perturb(&self, pose: &CameraPose, view: usize) -> CameraPose {
        if self.rot_deg == 0.0 && self.trans == 0.0 {
            return pose.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed.wrapping_add(view as u64 * 0x9e37));
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let axis = Vec3::new(angle.cos(), angle.sin(), 0.0);
        let dir = loop {
            let v = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            if v.norm() > 1e-3 {
                break v.normalize();
            }
        };
        let q = quat::from_axis_angle(&axis, self.rot_deg.to_radians());
        let noise = CameraPose::from_quat_trans(q, dir * self.trans)
            .expect("unit quaternion builds valid pose");
        noise.compose(pose)
    }
}

/// Baseline of the pose-required pipeline: lift each view in its own local
/// frame, transform by the (possibly perturbed) pose, and concatenate.
/// With exact poses and zero noise it coincides with the canonical oracle.
#[derive(Debug, Clone)]
pub struct TransformThenFusePredictor {
    pub opacity: f64,
    pub scale_factor: f64,
    pub pose_noise: PoseNoise,
}

impl Default for TransformThenFusePredictor {
    fn default() -> Self {
        Self { opacity: 0.9, scale_factor: 1.0, pose_noise: PoseNoise::none() }
    }
}

impl GaussianPredictor for TransformThenFusePredictor {
    fn predict(
        &self,
        views: &[ViewBundle],
        _intrinsic_mode: IntrinsicKind,
    ) -> Result<CanonicalScene, PredictorError> {
        let (h, w) = check_views(views)?;
        let mut per_view = Vec::with_capacity(views.len());
        for (vi, view) in views.iter().enumerate() {
            if view.depth.is_none() {
                return Err(PredictorError::MissingDepth(vi));
            }
            let grid = oracle_raw_grid(view, self.opacity, self.scale_factor)?;
            let local = lift_view(view, &CameraPose::identity(), &grid)?;
            let mut pose = pose_to_canonical(views, vi)?;
            if vi > 0 {
                pose = self.pose_noise.perturb(&pose, vi);
            }
            let local_scene = CanonicalScene::from_primitives(local, 0);
            per_view.push(transform_scene(&local_scene, &pose).primitives);
        }
        Ok(assemble(per_view, h, w))
    }
}

/// Predictor that ignores the views' content and replays a stored scene.
#[derive(Debug, Clone)]
pub struct FilePredictor {
    pub path: PathBuf,
}

impl GaussianPredictor for FilePredictor {
    fn predict(
        &self,
        views: &[ViewBundle],
        _intrinsic_mode: IntrinsicKind,
    ) -> Result<CanonicalScene, PredictorError> {
        check_views(views)?;
        Ok(crate::scene::read_scene(&self.path)?)
    }
}

/// Resolves a CLI predictor name: `oracle-canonical`,
/// `oracle-transform-fuse`, or `from-file:<path>`.
pub fn predictor_by_name(name: &str) -> Result<Box<dyn GaussianPredictor>, PredictorError> {
    match name {
        "oracle-canonical" => Ok(Box::new(OracleCanonicalPredictor::default())),
        "oracle-transform-fuse" => Ok(Box::new(TransformThenFusePredictor::default())),
        other => match other.strip_prefix("from-file:") {
            Some(path) if !path.is_empty() => {
                Ok(Box::new(FilePredictor { path: PathBuf::from(path) }))
            }
            _ => Err(PredictorError::UnknownName(other.to_string())),
        },
    }
}

#[cfg(test)]
mod tests;
