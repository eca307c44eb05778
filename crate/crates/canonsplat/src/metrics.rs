//! Image losses for training/refinement (MSE, structural SSIM, pluggable
//! perceptual term) and evaluation metrics (PSNR, SSIM, pose error, pose
//! AUC).

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::img::Image;
use crate::math::se3;
use crate::scene::CameraPose;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("image shapes differ: {0}x{1} vs {2}x{3}")]
    ShapeMismatch(usize, usize, usize, usize),
    #[error("image {0}x{1} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")]
    ImageTooSmall(usize, usize),
    #[error("perceptual score requested but no scorer is plugged in")]
    ScorerAbsent,
    #[error("pose AUC needs a non-empty error list")]
    EmptyErrors,
    #[error("AUC thresholds must be positive, got {0}")]
    BadThreshold(f64),
}

fn check_shapes(a: &Image, b: &Image) -> Result<(), MetricsError> {
    if a.shape() != b.shape() {
        let (ah, aw) = a.shape();
        let (bh, bw) = b.shape();
        return Err(MetricsError::ShapeMismatch(ah, aw, bh, bw));
    }
    Ok(())
}

/// Mean squared difference over all pixels and channels.
pub fn mse(a: &Image, b: &Image) -> Result<f64, MetricsError> {
    check_shapes(a, b)?;
    let n = a.data().len() as f64;
    Ok(a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n)
}

/// PSNR cap applied when MSE vanishes.
pub const PSNR_CAP_DB: f64 = 99.0;

/// `10 log10(1 / mse)` in dB, capped at 99 dB for mse < 1e-10.
pub fn psnr(a: &Image, b: &Image) -> Result<f64, MetricsError> {
    let m = mse(a, b)?;
    if m < 1e-10 {
        return Ok(PSNR_CAP_DB);
    }
    Ok(10.0 * (1.0 / m).log10())
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;
const SSIM_C3: f64 = SSIM_C2 / 2.0;

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Windowed first/second moments of one channel pair, on the valid grid
/// (windows fully inside the image). Computed with separable convolution.
struct WindowStats {
    rows: usize,
    cols: usize,
    mu_x: Vec<f64>,
    mu_y: Vec<f64>,
    var_x: Vec<f64>,
    var_y: Vec<f64>,
    cov_xy: Vec<f64>,
}

fn convolve_valid(
    plane: &[f64],
    h: usize,
    w: usize,
    kernel: &[f64; SSIM_WINDOW],
) -> (Vec<f64>, usize, usize) {
    let out_w = w - SSIM_WINDOW + 1;
    let out_h = h - SSIM_WINDOW + 1;
    // rows
    let mut tmp = vec![0.0; h * out_w];
    for r in 0..h {
        for c in 0..out_w {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                acc += kv * plane[r * w + c + k];
            }
            tmp[r * out_w + c] = acc;
        }
    }
    // cols
    let mut out = vec![0.0; out_h * out_w];
    for r in 0..out_h {
        for c in 0..out_w {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                acc += kv * tmp[(r + k) * out_w + c];
            }
            out[r * out_w + c] = acc;
        }
    }
    (out, out_h, out_w)
}

fn window_stats(a: &Image, b: &Image, channel: usize) -> WindowStats {
    let (h, w) = a.shape();
    let kernel = gaussian_kernel();
    let mut x = vec![0.0; h * w];
    let mut y = vec![0.0; h * w];
    let mut xx = vec![0.0; h * w];
    let mut yy = vec![0.0; h * w];
    let mut xy = vec![0.0; h * w];
    for i in 0..h * w {
        let xv = a.data()[i * 3 + channel];
        let yv = b.data()[i * 3 + channel];
        x[i] = xv;
        y[i] = yv;
        xx[i] = xv * xv;
        yy[i] = yv * yv;
        xy[i] = xv * yv;
    }
    let (mu_x, rows, cols) = convolve_valid(&x, h, w, &kernel);
    let (mu_y, _, _) = convolve_valid(&y, h, w, &kernel);
    let (m_xx, _, _) = convolve_valid(&xx, h, w, &kernel);
    let (m_yy, _, _) = convolve_valid(&yy, h, w, &kernel);
    let (m_xy, _, _) = convolve_valid(&xy, h, w, &kernel);
    let n = rows * cols;
    let mut var_x = vec![0.0; n];
    let mut var_y = vec![0.0; n];
    let mut cov_xy = vec![0.0; n];
    for i in 0..n {
        var_x[i] = m_xx[i] - mu_x[i] * mu_x[i];
        var_y[i] = m_yy[i] - mu_y[i] * mu_y[i];
        cov_xy[i] = m_xy[i] - mu_x[i] * mu_y[i];
    }
    WindowStats { rows, cols, mu_x, mu_y, var_x, var_y, cov_xy }
}

fn ssim_guard(a: &Image, b: &Image) -> Result<(), MetricsError> {
    check_shapes(a, b)?;
    let (h, w) = a.shape();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(MetricsError::ImageTooSmall(h, w));
    }
    Ok(())
}

/// Full SSIM with an 11x11 Gaussian window (sigma 1.5), channel-averaged.
pub fn ssim(a: &Image, b: &Image) -> Result<f64, MetricsError> {
    ssim_guard(a, b)?;
    let mut total = 0.0;
    let mut count = 0usize;
    for ch in 0..3 {
        let st = window_stats(a, b, ch);
        for i in 0..st.rows * st.cols {
            let (mx, my) = (st.mu_x[i], st.mu_y[i]);
            let num = (2.0 * mx * my + SSIM_C1) * (2.0 * st.cov_xy[i] + SSIM_C2);
            let den = (mx * mx + my * my + SSIM_C1) * (st.var_x[i] + st.var_y[i] + SSIM_C2);
            total += num / den;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Mean of the structure factor `s = (cov + C3) / (sigma_x sigma_y + C3)`,
/// invariant to per-window mean and variance offsets.
pub fn ssim_structural(a: &Image, b: &Image) -> Result<f64, MetricsError> {
    ssim_guard(a, b)?;
    let mut total = 0.0;
    let mut count = 0usize;
    for ch in 0..3 {
        let st = window_stats(a, b, ch);
        for i in 0..st.rows * st.cols {
            let sx = st.var_x[i].max(0.0).sqrt();
            let sy = st.var_y[i].max(0.0).sqrt();
            total += (st.cov_xy[i] + SSIM_C3) / (sx * sy + SSIM_C3);
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Pluggable perceptual scorer (LPIPS-like). Implementations that cannot
/// provide a gradient are evaluation-only.
pub trait PerceptualScorer: Send + Sync {
    fn score(&self, render: &Image, target: &Image) -> f64;

    /// Score plus `d score / d render`, when the scorer supports it.
    fn score_with_gradient(&self, render: &Image, target: &Image) -> Option<(f64, Image)> {
        let _ = (render, target);
        None
    }
}

/// Weights of the reconstruction loss terms.
///
/// Defaults are the training combination: MSE weight 1 and perceptual
/// weight 0.05 (the perceptual term participates only when a scorer is
/// plugged in); the structural-SSIM weight defaults to 0 and is raised to
/// 0.2 for pose refinement.
#[derive(Clone)]
pub struct LossConfig {
    pub mse_weight: f64,
    pub perceptual_weight: f64,
    pub ssim_structural_weight: f64,
    pub scorer: Option<Arc<dyn PerceptualScorer>>,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            mse_weight: 1.0,
            perceptual_weight: 0.05,
            ssim_structural_weight: 0.0,
            scorer: None,
        }
    }
}

impl std::fmt::Debug for LossConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LossConfig")
            .field("mse_weight", &self.mse_weight)
            .field("perceptual_weight", &self.perceptual_weight)
            .field("ssim_structural_weight", &self.ssim_structural_weight)
            .field("scorer", &self.scorer.as_ref().map(|_| "<plugged>"))
            .finish()
    }
}

impl LossConfig {
    /// Loss used by pose refinement: MSE plus the structural SSIM term.
    pub fn refinement_default() -> Self {
        Self { ssim_structural_weight: 0.2, ..Self::default() }
    }

    /// Explicit perceptual score; errors when no scorer is plugged in.
    pub fn perceptual_score(&self, render: &Image, target: &Image) -> Result<f64, MetricsError> {
        let scorer = self.scorer.as_ref().ok_or(MetricsError::ScorerAbsent)?;
        Ok(scorer.score(render, target))
    }
}

/// Weighted loss plus its analytic gradient with respect to `render`.
///
/// The gradient covers the MSE and structural terms; a plugged scorer
/// contributes its own gradient when it provides one and is otherwise
/// evaluation-only. A missing scorer silently drops the perceptual term.
pub fn reconstruction_loss(
    render: &Image,
    target: &Image,
    cfg: &LossConfig,
) -> Result<(f64, Image), MetricsError> {
    check_shapes(render, target)?;
    let (h, w) = render.shape();
    let mut grad = Image::new(h, w);
    let mut loss = 0.0;

    if cfg.mse_weight != 0.0 {
        let n = render.data().len() as f64;
        let m = mse(render, target)?;
        loss += cfg.mse_weight * m;
        for (g, (x, y)) in grad
            .data_mut()
            .iter_mut()
            .zip(render.data().iter().zip(target.data()))
        {
            *g += cfg.mse_weight * 2.0 * (x - y) / n;
        }
    }

    if cfg.ssim_structural_weight != 0.0 {
        let (s_mean, s_grad) = structural_with_gradient(render, target)?;
        loss += cfg.ssim_structural_weight * (1.0 - s_mean);
        for (g, sg) in grad.data_mut().iter_mut().zip(s_grad.data()) {
            *g -= cfg.ssim_structural_weight * sg;
        }
    }

    if cfg.perceptual_weight != 0.0 {
        if let Some(scorer) = &cfg.scorer {
            match scorer.score_with_gradient(render, target) {
                Some((score, s_grad)) => {
                    loss += cfg.perceptual_weight * score;
                    for (g, sg) in grad.data_mut().iter_mut().zip(s_grad.data()) {
                        *g += cfg.perceptual_weight * sg;
                    }
                }
                None => loss += cfg.perceptual_weight * scorer.score(render, target),
            }
        }
    }

    Ok((loss, grad))
}

/// Mean structural score and `d mean_s / d render`.
fn structural_with_gradient(render: &Image, target: &Image) -> Result<(f64, Image), MetricsError> {
    ssim_guard(render, target)?;
    let (h, w) = render.shape();
    let kernel = gaussian_kernel();
    let mut grad = Image::new(h, w);
    let mut total = 0.0;
    let mut count = 0usize;
    for ch in 0..3 {
        let st = window_stats(render, target, ch);
        count += st.rows * st.cols;
        for wr in 0..st.rows {
            for wc in 0..st.cols {
                let i = wr * st.cols + wc;
                let sx = st.var_x[i].max(0.0).sqrt().max(1e-12);
                let sy = st.var_y[i].max(0.0).sqrt();
                let num = st.cov_xy[i] + SSIM_C3;
                let den = sx * sy + SSIM_C3;
                total += num / den;

                let inv_den = 1.0 / den;
                let coef_y = inv_den; // multiplies (y_k - mu_y)
                let coef_x = num * sy / (sx * den * den); // multiplies (x_k - mu_x)
                for ki in 0..SSIM_WINDOW {
                    for kj in 0..SSIM_WINDOW {
                        let g = kernel[ki] * kernel[kj];
                        let (pr, pc) = (wr + ki, wc + kj);
                        let xv = render.get(pr, pc)[ch];
                        let yv = target.get(pr, pc)[ch];
                        let d = g * (coef_y * (yv - st.mu_y[i]) - coef_x * (xv - st.mu_x[i]));
                        let mut px = grad.get(pr, pc);
                        px[ch] += d;
                        grad.set(pr, pc, px);
                    }
                }
            }
        }
    }
    let n = count as f64;
    for g in grad.data_mut() {
        *g /= n;
    }
    Ok((total / n, grad))
}

/// Rotation / translation-direction errors between two poses, in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseError {
    pub rotation_deg: f64,
    pub translation_dir_deg: f64,
    /// `max(rotation_deg, translation_dir_deg)`.
    pub combined_deg: f64,
}

/// Rotation angle of `R_est R_gt^T` and the angle between translation
/// directions. The translation error is defined as 0 when the ground-truth
/// translation is (near) zero, and as 180 when only the estimate is.
pub fn pose_error(est: &CameraPose, gt: &CameraPose) -> PoseError {
    let r_rel = est.rotation() * gt.rotation().transpose();
    let rotation_deg = se3::rotation_angle(&r_rel).to_degrees();

    let (te, tg) = (est.translation(), gt.translation());
    let translation_dir_deg = if tg.norm() < 1e-8 {
        0.0
    } else if te.norm() < 1e-8 {
        180.0
    } else {
        let cos = (te.dot(tg) / (te.norm() * tg.norm())).clamp(-1.0, 1.0);
        cos.acos().to_degrees()
    };
    PoseError {
        rotation_deg,
        translation_dir_deg,
        combined_deg: rotation_deg.max(translation_dir_deg),
    }
}

/// Thresholds used in the pose-AUC tables.
pub const DEFAULT_AUC_THRESHOLDS_DEG: [f64; 3] = [5.0, 10.0, 20.0];

/// Area under the cumulative pose-error curve, one value per threshold:
/// `(1/tau) * integral_0^tau F(e) de` with `F` the empirical CDF, computed
/// by exact piecewise integration (errors beyond `tau` contribute nothing).
pub fn pose_auc(errors: &[f64], thresholds: &[f64]) -> Result<Vec<f64>, MetricsError> {
    if errors.is_empty() {
        return Err(MetricsError::EmptyErrors);
    }
    if let Some(&bad) = thresholds.iter().find(|t| !(**t > 0.0)) {
        return Err(MetricsError::BadThreshold(bad));
    }
    let n = errors.len() as f64;
    Ok(thresholds
        .iter()
        .map(|&tau| {
            errors
                .iter()
                .map(|&e| (tau - e.max(0.0)).max(0.0))
                .sum::<f64>()
                / (n * tau)
        })
        .collect())
}

/// One evaluation record, serialized as a JSON line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricRecord {
    pub scene_id: String,
    pub psnr: f64,
    pub ssim: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lpips: Option<f64>,
    pub rot_deg: f64,
    pub trans_deg: f64,
    pub overlap_bin: String,
}
