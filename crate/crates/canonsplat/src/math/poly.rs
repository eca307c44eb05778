//! Real roots of low-degree polynomials via companion-matrix eigenvalues.

use nalgebra::DMatrix;

/// Real roots of `c[0] + c[1] x + ... + c[n] x^n`.
///
/// Leading coefficients that are negligible relative to the largest
/// coefficient are dropped before building the companion matrix.
pub fn real_roots(coeffs: &[f64]) -> Vec<f64> {
    let max_mag = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    if max_mag == 0.0 {
        return Vec::new();
    }
    let mut deg = coeffs.len() - 1;
    while deg > 0 && coeffs[deg].abs() < 1e-12 * max_mag {
        deg -= 1;
    }
    if deg == 0 {
        return Vec::new();
    }
    if deg == 1 {
        return vec![-coeffs[0] / coeffs[1]];
    }

    let lead = coeffs[deg];
    let mut comp = DMatrix::<f64>::zeros(deg, deg);
    for i in 0..deg {
        comp[(0, i)] = -coeffs[deg - 1 - i] / lead;
    }
    for i in 1..deg {
        comp[(i, i - 1)] = 1.0;
    }

    let eig = comp.complex_eigenvalues();
    let mut roots: Vec<f64> = eig
        .iter()
        .filter(|e| e.im.abs() < 1e-8 * (1.0 + e.re.abs()))
        .map(|e| e.re)
        .collect();
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    roots
}
