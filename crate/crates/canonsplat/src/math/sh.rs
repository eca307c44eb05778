//! Real spherical harmonics up to degree 3: basis evaluation and the
//! per-band rotation matrices used when rigidly transforming SH colors.
//!
//! Basis ordering within band `l` runs m = -l..l, matching common splatting
//! implementations (degree 1 is proportional to (y, z, x)).

use super::{Mat3, Vec3};

pub const MAX_DEGREE: usize = 3;

/// Y_0^0 of the real SH basis.
pub const SH_C0: f64 = 0.282_094_791_773_878_14;
/// Degree-1 coefficient of the real SH basis.
pub const SH_C1: f64 = 0.488_602_511_902_919_92;

const C2: [f64; 3] = [
    1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    0.546_274_215_296_039_6,
];
const C3: [f64; 6] = [
    0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    1.445_305_721_320_277,
    0.590_043_589_926_643_5,
];

/// Number of basis functions for a maximum degree `l`.
pub fn basis_len(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

/// Evaluates the real SH basis at a unit direction, filling `out`
/// (length `(degree+1)^2`).
pub fn eval_basis(dir: &Vec3, degree: usize, out: &mut [f64]) {
    debug_assert!(degree <= MAX_DEGREE);
    debug_assert_eq!(out.len(), basis_len(degree));
    let (x, y, z) = (dir.x, dir.y, dir.z);

    out[0] = SH_C0;
    if degree == 0 {
        return;
    }
    out[1] = SH_C1 * y;
    out[2] = SH_C1 * z;
    out[3] = SH_C1 * x;
    if degree == 1 {
        return;
    }
    let (x2, y2, z2) = (x * x, y * y, z * z);
    out[4] = C2[0] * x * y;
    out[5] = C2[0] * y * z;
    out[6] = C2[1] * (3.0 * z2 - 1.0);
    out[7] = C2[0] * x * z;
    out[8] = C2[2] * (x2 - y2);
    if degree == 2 {
        return;
    }
    out[9] = C3[0] * y * (3.0 * x2 - y2);
    out[10] = C3[1] * x * y * z;
    out[11] = C3[2] * y * (5.0 * z2 - 1.0);
    out[12] = C3[3] * z * (5.0 * z2 - 3.0);
    out[13] = C3[2] * x * (5.0 * z2 - 1.0);
    out[14] = C3[4] * z * (x2 - y2);
    out[15] = C3[5] * x * (x2 - 3.0 * y2);
}

/// Per-band rotation matrices `M_l` with `Y_l(R d) = M_l Y_l(d)`,
/// computed by the Ivanic-Ruedenberg recurrence.
///
/// Returns one dense row-major `(2l+1) x (2l+1)` matrix per band
/// `l = 0..=degree`.
pub fn band_rotations(r: &Mat3, degree: usize) -> Vec<Vec<f64>> {
    debug_assert!(degree <= MAX_DEGREE);
    let mut bands: Vec<Vec<f64>> = Vec::with_capacity(degree + 1);
    bands.push(vec![1.0]);
    if degree == 0 {
        return bands;
    }

    // Band 1 transforms like the permuted coordinates (y, z, x).
    let perm = [1usize, 2, 0];
    let mut m1 = vec![0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            m1[i * 3 + j] = r[(perm[i], perm[j])];
        }
    }
    bands.push(m1);

    for l in 2..=degree {
        let prev = &bands[l - 1];
        let r1 = &bands[1];
        let dim = 2 * l + 1;
        let mut cur = vec![0.0; dim * dim];
        let li = l as i64;
        for m in -li..=li {
            for n in -li..=li {
                let (u, v, w) = uvw_coefficients(li, m, n);
                let mut val = 0.0;
                if u != 0.0 {
                    val += u * func_u(r1, prev, li, m, n);
                }
                if v != 0.0 {
                    val += v * func_v(r1, prev, li, m, n);
                }
                if w != 0.0 {
                    val += w * func_w(r1, prev, li, m, n);
                }
                cur[((m + li) as usize) * dim + (n + li) as usize] = val;
            }
        }
        bands.push(cur);
    }
    bands
}

fn r1_at(r1: &[f64], i: i64, j: i64) -> f64 {
    r1[((i + 1) as usize) * 3 + (j + 1) as usize]
}

fn prev_at(prev: &[f64], l: i64, a: i64, b: i64) -> f64 {
    let dim = (2 * (l - 1) + 1) as usize;
    prev[((a + l - 1) as usize) * dim + (b + l - 1) as usize]
}

fn func_p(r1: &[f64], prev: &[f64], l: i64, i: i64, a: i64, b: i64) -> f64 {
    if b == l {
        r1_at(r1, i, 1) * prev_at(prev, l, a, l - 1) - r1_at(r1, i, -1) * prev_at(prev, l, a, 1 - l)
    } else if b == -l {
        r1_at(r1, i, 1) * prev_at(prev, l, a, 1 - l) + r1_at(r1, i, -1) * prev_at(prev, l, a, l - 1)
    } else {
        r1_at(r1, i, 0) * prev_at(prev, l, a, b)
    }
}

fn func_u(r1: &[f64], prev: &[f64], l: i64, m: i64, n: i64) -> f64 {
    func_p(r1, prev, l, 0, m, n)
}

fn func_v(r1: &[f64], prev: &[f64], l: i64, m: i64, n: i64) -> f64 {
    if m == 0 {
        func_p(r1, prev, l, 1, 1, n) + func_p(r1, prev, l, -1, -1, n)
    } else if m > 0 {
        let d: f64 = if m == 1 { 1.0 } else { 0.0 };
        func_p(r1, prev, l, 1, m - 1, n) * (1.0 + d).sqrt()
            - func_p(r1, prev, l, -1, 1 - m, n) * (1.0 - d)
    } else {
        let d: f64 = if m == -1 { 1.0 } else { 0.0 };
        func_p(r1, prev, l, 1, m + 1, n) * (1.0 - d)
            + func_p(r1, prev, l, -1, -m - 1, n) * (1.0 + d).sqrt()
    }
}

fn func_w(r1: &[f64], prev: &[f64], l: i64, m: i64, n: i64) -> f64 {
    if m == 0 {
        0.0
    } else if m > 0 {
        func_p(r1, prev, l, 1, m + 1, n) + func_p(r1, prev, l, -1, -m - 1, n)
    } else {
        func_p(r1, prev, l, 1, m - 1, n) - func_p(r1, prev, l, -1, 1 - m, n)
    }
}

fn uvw_coefficients(l: i64, m: i64, n: i64) -> (f64, f64, f64) {
    let (lf, mf) = (l as f64, m as f64);
    let denom = if n.abs() < l {
        (lf + n as f64) * (lf - n as f64)
    } else {
        2.0 * lf * (2.0 * lf - 1.0)
    };
    let d0 = if m == 0 { 1.0 } else { 0.0 };
    let am = m.abs() as f64;
    let u = ((lf + mf) * (lf - mf) / denom).sqrt();
    let v = 0.5 * ((1.0 + d0) * (lf + am - 1.0) * (lf + am) / denom).sqrt() * (1.0 - 2.0 * d0);
    let w = -0.5 * ((lf - am - 1.0) * (lf - am) / denom).sqrt() * (1.0 - d0);
    (u, v, w)
}
