//! Pixel-aligned Gaussian construction: raw-parameter activation,
//! unprojection into the canonical frame, and the three intrinsic-embedding
//! feature computations.
//!
//! Pixel (row, col) uses the pixel-center convention: its continuous image
//! coordinate is (col + 0.5, row + 0.5).

use thiserror::Error;

use crate::math::{quat, sh, sigmoid, Vec2, Vec3};
use crate::scene::{CameraIntrinsics, CameraPose, GaussianPrimitive, SceneError, ViewBundle};

#[derive(Debug, Error)]
pub enum LiftError {
    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("raw parameters contain non-finite values")]
    NonFinite,
    #[error("raw rotation has zero norm")]
    ZeroRotation,
    #[error("depth-parameterized center requires unprojection (use lift_view)")]
    DepthCenterNeedsContext,
    #[error("view has no depth map but raw centers are depth-parameterized")]
    MissingDepth,
    #[error("raw grid shape {got_h}x{got_w} does not match view {want_h}x{want_w}")]
    ShapeMismatch { got_h: usize, got_w: usize, want_h: usize, want_w: usize },
    #[error(transparent)]
    Scene(#[from] SceneError),
}

/// Center parameterization of a raw Gaussian: either a depth along the
/// pixel ray (the lift route) or a direct point in the view's local frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RawCenter {
    Depth(f64),
    Point(Vec3),
}

/// Head outputs before activation.
#[derive(Debug, Clone, PartialEq)]
pub struct RawGaussianParams {
    pub raw_center: RawCenter,
    pub raw_opacity: f64,
    pub raw_rotation: [f64; 4],
    pub raw_scale: [f64; 3],
    pub raw_sh: Vec<f64>,
}

impl RawGaussianParams {
    fn check_finite(&self) -> Result<(), LiftError> {
        let center_ok = match self.raw_center {
            RawCenter::Depth(d) => d.is_finite(),
            RawCenter::Point(p) => p.iter().all(|v| v.is_finite()),
        };
        let ok = center_ok
            && self.raw_opacity.is_finite()
            && self.raw_rotation.iter().all(|v| v.is_finite())
            && self.raw_scale.iter().all(|v| v.is_finite())
            && self.raw_sh.iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(LiftError::NonFinite)
        }
    }
}

/// Applies the activation scheme: sigmoid opacity, exp scale, normalized
/// w-positive rotation, pass-through SH. The raw center must be a direct
/// point; depth-parameterized centers go through [`lift_view`].
pub fn activate(raw: &RawGaussianParams) -> Result<GaussianPrimitive, LiftError> {
    raw.check_finite()?;
    let center = match raw.raw_center {
        RawCenter::Point(p) => p,
        RawCenter::Depth(_) => return Err(LiftError::DepthCenterNeedsContext),
    };
    activate_at(raw, center)
}

fn activate_at(raw: &RawGaussianParams, center: Vec3) -> Result<GaussianPrimitive, LiftError> {
    let rotation = quat::normalize_wpos(raw.raw_rotation).ok_or(LiftError::ZeroRotation)?;
    let prim = GaussianPrimitive::new(
        center,
        sigmoid(raw.raw_opacity),
        rotation,
        Vec3::new(raw.raw_scale[0].exp(), raw.raw_scale[1].exp(), raw.raw_scale[2].exp()),
        raw.raw_sh.clone(),
    )?;
    Ok(prim)
}

/// Back-projects a continuous pixel coordinate at a given depth:
/// `depth * K^-1 (u, v, 1)`.
pub fn unproject(pixel: Vec2, depth: f64, k: &CameraIntrinsics) -> Result<Vec3, LiftError> {
    if !(depth > 0.0) {
        return Err(LiftError::NonPositiveDepth(depth));
    }
    Ok(Vec3::new(
        depth * (pixel.x - k.cx) / k.fx,
        depth * (pixel.y - k.cy) / k.fy,
        depth,
    ))
}

/// Pinhole forward map `(u, v) = (fx x/z + cx, fy y/z + cy)`.
pub fn project(point: &Vec3, k: &CameraIntrinsics) -> Vec2 {
    Vec2::new(
        k.fx * point.x / point.z + k.cx,
        k.fy * point.y / point.z + k.cy,
    )
}

/// Continuous image coordinate of pixel (row, col) under the pixel-center
/// convention.
pub fn pixel_coord(row: usize, col: usize) -> Vec2 {
    Vec2::new(col as f64 + 0.5, row as f64 + 0.5)
}

/// Row-major grid of raw Gaussian parameters, one per pixel.
#[derive(Debug, Clone)]
pub struct RawGaussianGrid {
    height: usize,
    width: usize,
    params: Vec<RawGaussianParams>,
}

impl RawGaussianGrid {
    pub fn from_vec(height: usize, width: usize, params: Vec<RawGaussianParams>) -> Self {
        assert_eq!(params.len(), height * width);
        Self { height, width, params }
    }

    /// Depth-parameterized grid sourced from the view's oracle depth map.
    pub fn from_view_depth(
        view: &ViewBundle,
        mut rest: impl FnMut(usize, usize) -> RawGaussianParams,
    ) -> Result<Self, LiftError> {
        let depth = view.depth.as_ref().ok_or(LiftError::MissingDepth)?;
        let (h, w) = view.shape();
        let mut params = Vec::with_capacity(h * w);
        for r in 0..h {
            for c in 0..w {
                let mut p = rest(r, c);
                p.raw_center = RawCenter::Depth(depth.get(r, c));
                params.push(p);
            }
        }
        Ok(Self { height: h, width: w, params })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn get(&self, row: usize, col: usize) -> &RawGaussianParams {
        &self.params[row * self.width + col]
    }
}

/// Lifts one view into the canonical frame: one primitive per pixel, in
/// row-major pixel order. Depth-parameterized centers are unprojected with
/// the view intrinsics; direct points are taken as local-frame coordinates.
/// Centers are then mapped by `pose_to_canonical`; an exact-identity pose
/// leaves local coordinates untouched.
pub fn lift_view(
    view: &ViewBundle,
    pose_to_canonical: &CameraPose,
    raw: &RawGaussianGrid,
) -> Result<Vec<GaussianPrimitive>, LiftError> {
    let (h, w) = view.shape();
    if raw.shape() != (h, w) {
        let (gh, gw) = raw.shape();
        return Err(LiftError::ShapeMismatch { got_h: gh, got_w: gw, want_h: h, want_w: w });
    }
    let is_identity = *pose_to_canonical == CameraPose::identity();
    let rq = pose_to_canonical.rotation_quat();

    let mut out = Vec::with_capacity(h * w);
    for row in 0..h {
        for col in 0..w {
            let rp = raw.get(row, col);
            rp.check_finite()?;
            let local = match rp.raw_center {
                RawCenter::Depth(d) => unproject(pixel_coord(row, col), d, &view.intrinsics)?,
                RawCenter::Point(p) => p,
            };
            let mut prim = activate_at(rp, local)?;
            if !is_identity {
                prim.center = pose_to_canonical.apply(&prim.center);
                prim.rotation = quat::normalize_wpos(quat::mul(rq, prim.rotation))
                    .expect("unit product stays unit");
            }
            out.push(prim);
        }
    }
    Ok(out)
}

/// Intrinsic-embedding feature kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntrinsicKind {
    GlobalAdd,
    GlobalToken,
    DenseRay,
}

/// Input features for one intrinsic-embedding strategy.
#[derive(Debug, Clone, PartialEq)]
pub enum IntrinsicFeature {
    /// Normalized `[fx/W, fy/H, cx/W, cy/H]`, broadcast-added to features.
    GlobalAdd([f64; 4]),
    /// Same 4-vector, used as an extra token.
    GlobalToken([f64; 4]),
    /// Per-pixel SH features of the unit camera rays: H x W x (L+1)^2.
    DenseRay { height: usize, width: usize, channels: usize, data: Vec<f64> },
}

impl IntrinsicFeature {
    pub fn kind(&self) -> IntrinsicKind {
        match self {
            IntrinsicFeature::GlobalAdd(_) => IntrinsicKind::GlobalAdd,
            IntrinsicFeature::GlobalToken(_) => IntrinsicKind::GlobalToken,
            IntrinsicFeature::DenseRay { .. } => IntrinsicKind::DenseRay,
        }
    }
}

/// Size-normalized global intrinsic vector `(fx/W, fy/H, cx/W, cy/H)`.
pub fn intrinsic_feature_global(k: &CameraIntrinsics) -> [f64; 4] {
    [
        k.fx / k.width as f64,
        k.fy / k.height as f64,
        k.cx / k.width as f64,
        k.cy / k.height as f64,
    ]
}

/// Default SH degree of the dense ray embedding (16 feature channels).
pub const DENSE_RAY_DEFAULT_DEGREE: usize = 3;

/// Per-pixel camera rays `K^-1 p_j`, unit-normalized and expanded in the
/// real SH basis up to `degree`. Feature layout is row-major with
/// `(degree+1)^2` channels per pixel.
pub fn dense_ray_embedding(k: &CameraIntrinsics, degree: usize) -> IntrinsicFeature {
    assert!(degree <= sh::MAX_DEGREE, "dense embedding degree must be <= 3");
    let channels = sh::basis_len(degree);
    let mut data = vec![0.0; k.height * k.width * channels];
    for row in 0..k.height {
        for col in 0..k.width {
            let p = pixel_coord(row, col);
            let ray = Vec3::new((p.x - k.cx) / k.fx, (p.y - k.cy) / k.fy, 1.0).normalize();
            let off = (row * k.width + col) * channels;
            sh::eval_basis(&ray, degree, &mut data[off..off + channels]);
        }
    }
    IntrinsicFeature::DenseRay { height: k.height, width: k.width, channels, data }
}

/// Builds the feature for a requested embedding kind.
pub fn intrinsic_feature(k: &CameraIntrinsics, kind: IntrinsicKind) -> IntrinsicFeature {
    match kind {
        IntrinsicKind::GlobalAdd => IntrinsicFeature::GlobalAdd(intrinsic_feature_global(k)),
        IntrinsicKind::GlobalToken => IntrinsicFeature::GlobalToken(intrinsic_feature_global(k)),
        IntrinsicKind::DenseRay => dense_ray_embedding(k, DENSE_RAY_DEFAULT_DEGREE),
    }
}
