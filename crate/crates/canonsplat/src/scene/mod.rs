//! Core scene model: Gaussian primitives, cameras, and the canonical-space
//! scene container, with validation and rigid transformation.
//!
//! The canonical frame is the camera frame of the first input view, so the
//! first view's pose is exactly the identity. Poses are world-to-camera.
//! Quaternions are stored `[w, x, y, z]` with `w >= 0`.

mod ply;

pub use ply::{read_scene, schema_property_names, write_scene, PlyError};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::img::{Image, ScalarGrid};
use crate::math::{quat, se3, sh, Mat3, Vec3, Vec6};

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("opacity {0} outside [0,1]")]
    OpacityRange(f64),
    #[error("quaternion norm {0} not within 1e-6 of 1")]
    QuaternionNorm(f64),
    #[error("scale component {0} is not positive")]
    ScalePositive(f64),
    #[error("sh length {got} is not 3*(L+1)^2 for any L <= 3")]
    ShLength { got: usize },
    #[error("non-finite value in field {0}")]
    NonFinite(&'static str),
    #[error("rotation matrix is not orthonormal (|R^T R - I| = {0:.3e})")]
    NotOrthonormal(f64),
    #[error("rotation matrix determinant {0} is not +1")]
    NotProperRotation(f64),
    #[error("focal length must be positive, got {0}")]
    FocalRange(f64),
    #[error("principal point ({0}, {1}) outside image {2}x{3}")]
    PrincipalPoint(f64, f64, usize, usize),
    #[error("per-primitive metadata length {got} does not match primitive count {expected}")]
    MetadataLength { got: usize, expected: usize },
    #[error("image values outside [0,1]")]
    ImageRange,
    #[error("depth must be strictly positive and finite")]
    DepthRange,
    #[error("depth shape {0}x{1} does not match image {2}x{3}")]
    DepthShape(usize, usize, usize, usize),
}

/// One splat: center, opacity, rotation, scale, and SH color coefficients.
///
/// SH coefficients are channel-major: `sh[ch * n + i]` where
/// `n = (degree+1)^2` and `i = 0` is the DC term.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrimitive {
    pub center: Vec3,
    pub opacity: f64,
    pub rotation: [f64; 4],
    pub scale: Vec3,
    pub sh: Vec<f64>,
}

impl GaussianPrimitive {
    pub fn new(
        center: Vec3,
        opacity: f64,
        rotation: [f64; 4],
        scale: Vec3,
        sh: Vec<f64>,
    ) -> Result<Self, SceneError> {
        if !center.iter().all(|v| v.is_finite()) {
            return Err(SceneError::NonFinite("center"));
        }
        if !(0.0..=1.0).contains(&opacity) {
            return Err(SceneError::OpacityRange(opacity));
        }
        let norm = rotation.iter().map(|c| c * c).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(SceneError::QuaternionNorm(norm));
        }
        let mut rotation = rotation;
        if rotation[0] < 0.0 {
            for c in &mut rotation {
                *c = -*c;
            }
        }
        if !scale.iter().all(|v| *v > 0.0 && v.is_finite()) {
            return Err(SceneError::ScalePositive(scale.min()));
        }
        if sh_degree_for_len(sh.len()).is_none() {
            return Err(SceneError::ShLength { got: sh.len() });
        }
        Ok(Self { center, opacity, rotation, scale, sh })
    }

    /// Builds a degree-0 primitive whose rendered base color is `rgb`.
    pub fn flat_color(center: Vec3, opacity: f64, scale: Vec3, rgb: [f64; 3]) -> Result<Self, SceneError> {
        let sh = rgb.iter().map(|c| (c - 0.5) / sh::SH_C0).collect();
        Self::new(center, opacity, [1.0, 0.0, 0.0, 0.0], scale, sh)
    }

    pub fn sh_degree(&self) -> usize {
        sh_degree_for_len(self.sh.len()).expect("validated at construction")
    }

    /// Number of SH coefficients per color channel.
    pub fn sh_coeffs_per_channel(&self) -> usize {
        self.sh.len() / 3
    }
}

/// SH degree L such that `len == 3*(L+1)^2`, if one exists with L <= 3.
pub fn sh_degree_for_len(len: usize) -> Option<usize> {
    (0..=sh::MAX_DEGREE).find(|l| 3 * sh::basis_len(*l) == len)
}

/// Pinhole intrinsics `k = [fx, fy, cx, cy]` plus the pixel grid size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, SceneError> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(SceneError::FocalRange(fx.min(fy)));
        }
        if !(cx > 0.0 && cx < width as f64 && cy > 0.0 && cy < height as f64) {
            return Err(SceneError::PrincipalPoint(cx, cy, width, height));
        }
        Ok(Self { fx, fy, cx, cy, width, height })
    }

    /// Heuristic intrinsics when none are provided: focal `(H + W) / 2`,
    /// principal point at the image center.
    pub fn default_for(width: usize, height: usize) -> Self {
        let f = (height + width) as f64 / 2.0;
        Self {
            fx: f,
            fy: f,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
        }
    }
}

/// World-to-camera rigid pose `[R | t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraPose {
    rotation: Mat3,
    translation: Vec3,
}

impl CameraPose {
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self, SceneError> {
        let dev = (rotation.transpose() * rotation - Mat3::identity()).norm();
        if dev > 1e-6 {
            return Err(SceneError::NotOrthonormal(dev));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > 1e-6 {
            return Err(SceneError::NotProperRotation(det));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(SceneError::NonFinite("translation"));
        }
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self { rotation: Mat3::identity(), translation: Vec3::zeros() }
    }

    pub fn from_quat_trans(q: [f64; 4], t: Vec3) -> Result<Self, SceneError> {
        let q = quat::normalize_wpos(q).ok_or(SceneError::QuaternionNorm(0.0))?;
        Ok(Self { rotation: quat::to_matrix(q), translation: t })
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn rotation_quat(&self) -> [f64; 4] {
        quat::from_matrix(&self.rotation)
    }

    /// Applies the pose as a point map `x -> R x + t`.
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// Composition `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &CameraPose) -> CameraPose {
        CameraPose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> CameraPose {
        let rt = self.rotation.transpose();
        CameraPose { rotation: rt, translation: -(rt * self.translation) }
    }

    /// Pose of `self` expressed in `anchor`'s camera frame: `self ∘ anchor⁻¹`.
    ///
    /// With `anchor` being view 1's pose, this is the canonical-frame camera
    /// pose of the view owning `self`.
    pub fn relative_to(&self, anchor: &CameraPose) -> CameraPose {
        self.compose(&anchor.inverse())
    }

    /// Left retraction `exp(xi) ∘ self` with `xi = [rho, phi]`.
    pub fn retract_left(&self, xi: &Vec6) -> CameraPose {
        let (dr, dt) = se3::exp(xi);
        CameraPose {
            rotation: dr * self.rotation,
            translation: dr * self.translation + dt,
        }
    }

    /// Camera center in world coordinates, `-R^T t`.
    pub fn center(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }
}

/// Intrinsics plus an SE(3) pose relative to the canonical frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub intrinsics: CameraIntrinsics,
    pub pose: CameraPose,
}

impl Camera {
    pub fn new(intrinsics: CameraIntrinsics, pose: CameraPose) -> Self {
        Self { intrinsics, pose }
    }
}

/// Union of per-view pixel-aligned primitives in the first view's frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalScene {
    pub primitives: Vec<GaussianPrimitive>,
    /// 1-based index of the view each primitive came from.
    pub source_view: Vec<u32>,
    /// Row-major pixel index within the source view.
    pub source_pixel: Vec<u32>,
    pub num_views: u32,
    /// (H, W) of every source view.
    pub view_shape: (u32, u32),
    pub sh_degree: usize,
}

impl CanonicalScene {
    pub fn new(
        primitives: Vec<GaussianPrimitive>,
        source_view: Vec<u32>,
        source_pixel: Vec<u32>,
        num_views: u32,
        view_shape: (u32, u32),
        sh_degree: usize,
    ) -> Result<Self, SceneError> {
        if source_view.len() != primitives.len() || source_pixel.len() != primitives.len() {
            return Err(SceneError::MetadataLength {
                got: source_view.len().min(source_pixel.len()),
                expected: primitives.len(),
            });
        }
        Ok(Self { primitives, source_view, source_pixel, num_views, view_shape, sh_degree })
    }

    /// Scene with synthesized single-view provenance, used for primitives
    /// loaded from storage that carries no view metadata.
    pub fn from_primitives(primitives: Vec<GaussianPrimitive>, sh_degree: usize) -> Self {
        let n = primitives.len();
        Self {
            primitives,
            source_view: vec![1; n],
            source_pixel: (0..n as u32).collect(),
            num_views: 1,
            view_shape: (1, n as u32),
            sh_degree,
        }
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    /// Indices of the primitives lifted from a given 1-based view.
    pub fn view_indices(&self, view: u32) -> Vec<usize> {
        self.source_view
            .iter()
            .enumerate()
            .filter_map(|(i, &v)| (v == view).then_some(i))
            .collect()
    }
}

/// Per-view input: image grid, intrinsics, and oracle-only depth/pose.
#[derive(Debug, Clone)]
pub struct ViewBundle {
    pub image: Image,
    pub intrinsics: CameraIntrinsics,
    pub depth: Option<ScalarGrid>,
    pub pose: Option<CameraPose>,
}

impl ViewBundle {
    pub fn new(
        image: Image,
        intrinsics: CameraIntrinsics,
        depth: Option<ScalarGrid>,
        pose: Option<CameraPose>,
    ) -> Result<Self, SceneError> {
        if !image.data().iter().all(|v| (0.0..=1.0).contains(v)) {
            return Err(SceneError::ImageRange);
        }
        if let Some(d) = &depth {
            if d.shape() != image.shape() {
                let (dh, dw) = d.shape();
                let (ih, iw) = image.shape();
                return Err(SceneError::DepthShape(dh, dw, ih, iw));
            }
            if !d.data().iter().all(|v| *v > 0.0 && v.is_finite()) {
                return Err(SceneError::DepthRange);
            }
        }
        Ok(Self { image, intrinsics, depth, pose })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.image.shape()
    }
}

/// Names of the invariants `validate_scene` checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InvariantKind {
    OpacityRange,
    QuaternionNorm,
    ScalePositive,
    ShCount,
    CenterFinite,
    SourceViewRange,
    PrimitiveCount,
}

impl std::fmt::Display for InvariantKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            InvariantKind::OpacityRange => "opacity range",
            InvariantKind::QuaternionNorm => "quaternion norm",
            InvariantKind::ScalePositive => "scale positive",
            InvariantKind::ShCount => "sh coefficient count",
            InvariantKind::CenterFinite => "center finite",
            InvariantKind::SourceViewRange => "source view range",
            InvariantKind::PrimitiveCount => "primitive count",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone)]
pub struct Violation {
    /// Primitive index, or `None` for scene-level violations.
    pub index: Option<usize>,
    pub kind: InvariantKind,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_pass(&self) -> bool {
        self.violations.is_empty()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_pass() {
            return f.write_str("pass");
        }
        for v in &self.violations {
            match v.index {
                Some(i) => writeln!(f, "primitive {}: {} ({})", i, v.kind, v.detail)?,
                None => writeln!(f, "scene: {} ({})", v.kind, v.detail)?,
            }
        }
        Ok(())
    }
}

/// Checks every scene invariant and reports all violations.
pub fn validate_scene(scene: &CanonicalScene) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut push = |index, kind, detail: String| {
        report.violations.push(Violation { index, kind, detail });
    };

    let expected_sh = 3 * sh::basis_len(scene.sh_degree);
    for (i, p) in scene.primitives.iter().enumerate() {
        if !(0.0..=1.0).contains(&p.opacity) {
            push(Some(i), InvariantKind::OpacityRange, format!("opacity {}", p.opacity));
        }
        let norm = p.rotation.iter().map(|c| c * c).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            push(Some(i), InvariantKind::QuaternionNorm, format!("norm {norm}"));
        }
        if !p.scale.iter().all(|v| *v > 0.0 && v.is_finite()) {
            push(Some(i), InvariantKind::ScalePositive, format!("scale {:?}", p.scale));
        }
        if p.sh.len() != expected_sh {
            push(
                Some(i),
                InvariantKind::ShCount,
                format!("got {}, expected {} for degree {}", p.sh.len(), expected_sh, scene.sh_degree),
            );
        }
        if !p.center.iter().all(|v| v.is_finite()) {
            push(Some(i), InvariantKind::CenterFinite, format!("center {:?}", p.center));
        }
    }
    for (i, &v) in scene.source_view.iter().enumerate() {
        if v < 1 || v > scene.num_views {
            push(Some(i), InvariantKind::SourceViewRange, format!("view {v} of {}", scene.num_views));
        }
    }
    let expected_count = scene.num_views as usize
        * scene.view_shape.0 as usize
        * scene.view_shape.1 as usize;
    if scene.len() != expected_count {
        push(
            None,
            InvariantKind::PrimitiveCount,
            format!("got {}, expected V*H*W = {}", scene.len(), expected_count),
        );
    }
    report
}

/// Rigidly transforms every primitive: centers by `x -> R x + t`, rotations
/// left-composed with `quat(R)`, SH coefficients rotated per band. Scales,
/// opacities, and provenance metadata are untouched.
pub fn transform_scene(scene: &CanonicalScene, pose: &CameraPose) -> CanonicalScene {
    let rq = pose.rotation_quat();
    let bands = if scene.sh_degree > 0 {
        sh::band_rotations(pose.rotation(), scene.sh_degree)
    } else {
        Vec::new()
    };
    let n_coeffs = sh::basis_len(scene.sh_degree);

    let primitives = scene
        .primitives
        .iter()
        .map(|p| {
            let mut sh_out = p.sh.clone();
            if scene.sh_degree > 0 {
                for ch in 0..3 {
                    let base = ch * n_coeffs;
                    for l in 1..=scene.sh_degree {
                        let dim = 2 * l + 1;
                        let off = base + l * l;
                        let mut rotated = vec![0.0; dim];
                        for m in 0..dim {
                            let mut acc = 0.0;
                            for k in 0..dim {
                                acc += bands[l][m * dim + k] * p.sh[off + k];
                            }
                            rotated[m] = acc;
                        }
                        sh_out[off..off + dim].copy_from_slice(&rotated);
                    }
                }
            }
            let rotation = quat::normalize_wpos(quat::mul(rq, p.rotation))
                .expect("unit quaternion product stays unit");
            GaussianPrimitive {
                center: pose.apply(&p.center),
                opacity: p.opacity,
                rotation,
                scale: p.scale,
                sh: sh_out,
            }
        })
        .collect();

    CanonicalScene {
        primitives,
        source_view: scene.source_view.clone(),
        source_pixel: scene.source_pixel.clone(),
        num_views: scene.num_views,
        view_shape: scene.view_shape,
        sh_degree: scene.sh_degree,
    }
}

#[cfg(test)]
mod tests;
