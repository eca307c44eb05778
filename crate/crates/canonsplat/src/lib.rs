//! Pose-free canonical-space 3D Gaussian splatting toolkit.
//!
//! The scene representation anchors the first input view's camera frame as
//! a canonical space: a pluggable predictor maps unposed views to
//! pixel-aligned Gaussians in that frame, a differentiable software
//! rasterizer renders them (with analytic parameter and camera-pose
//! gradients), and a two-stage PnP + photometric pipeline recovers relative
//! camera poses from the reconstruction. Evaluation utilities cover image
//! metrics, pose-error AUC, evaluation-time target-pose alignment, and the
//! overlap-ratio protocol for building evaluation sets from dense match
//! maps.
//!
//! See the `examples/` directory for one runnable walkthrough per
//! capability; the `canonsplat` binary exposes the same workflows for
//! batch use.

pub mod img;
pub mod math;
pub mod scene;

pub mod lift;
pub mod metrics;
pub mod render;

pub mod evalset;
pub mod pose;
pub mod predictor;
pub mod synth;

pub mod cli;
