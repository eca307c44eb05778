//! SE(3) exponential map for left-multiplied pose increments.
//!
//! Tangent vectors are ordered `[translation, rotation]` (rho, phi).

use super::{skew, Mat3, Vec3, Vec6};

/// Rodrigues' formula: rotation matrix of an axis-angle vector.
pub fn exp_so3(phi: &Vec3) -> Mat3 {
    let theta2 = phi.norm_squared();
    let k = skew(phi);
    if theta2 < 1e-16 {
        // 2nd-order Taylor keeps orthogonality to machine precision here
        return Mat3::identity() + k + 0.5 * (k * k);
    }
    let theta = theta2.sqrt();
    Mat3::identity() + (theta.sin() / theta) * k + ((1.0 - theta.cos()) / theta2) * (k * k)
}

/// SE(3) exponential: returns `(R, t)` of `exp(xi^)` with `xi = [rho, phi]`.
pub fn exp(xi: &Vec6) -> (Mat3, Vec3) {
    let rho = Vec3::new(xi[0], xi[1], xi[2]);
    let phi = Vec3::new(xi[3], xi[4], xi[5]);
    let r = exp_so3(&phi);
    let theta2 = phi.norm_squared();
    let k = skew(&phi);
    let v = if theta2 < 1e-16 {
        Mat3::identity() + 0.5 * k + (k * k) / 6.0
    } else {
        let theta = theta2.sqrt();
        Mat3::identity()
            + ((1.0 - theta.cos()) / theta2) * k
            + ((theta - theta.sin()) / (theta2 * theta)) * (k * k)
    };
    (r, v * rho)
}

/// Rotation angle of a rotation matrix, in radians.
pub fn rotation_angle(r: &Mat3) -> f64 {
    let c = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    c.acos()
}
