//! Closed-form eigenvalues of symmetric 3x3 matrices.
//!
//! Uses the trigonometric solution of the characteristic cubic, which is
//! branch-free apart from the exact-diagonal shortcut. The `acos` argument
//! is clamped to [-1, 1] to absorb round-off.

/// Eigenvalues of a symmetric 3x3 matrix in descending order.
///
/// Only the upper triangle (`a[0][1]`, `a[0][2]`, `a[1][2]`) of the
/// off-diagonal is read; the matrix is assumed symmetric.
pub fn sym3_eigenvalues(a: &[[f64; 3]; 3]) -> [f64; 3] {
    let p1 = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
    if p1 == 0.0 {
        let mut diag = [a[0][0], a[1][1], a[2][2]];
        diag.sort_by(|x, y| y.total_cmp(x));
        return diag;
    }

    let q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
    let d0 = a[0][0] - q;
    let d1 = a[1][1] - q;
    let d2 = a[2][2] - q;
    let p2 = d0 * d0 + d1 * d1 + d2 * d2 + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    if p == 0.0 {
        // A is a multiple of the identity up to round-off.
        return [q, q, q];
    }

    // B = (A - q I) / p, r = det(B) / 2 lies in [-1, 1] for symmetric A.
    let b00 = d0 / p;
    let b11 = d1 / p;
    let b22 = d2 / p;
    let b01 = a[0][1] / p;
    let b02 = a[0][2] / p;
    let b12 = a[1][2] / p;
    let det_b = b00 * (b11 * b22 - b12 * b12) - b01 * (b01 * b22 - b12 * b02)
        + b02 * (b01 * b12 - b11 * b02);
    let r = (det_b / 2.0).clamp(-1.0, 1.0);

    let phi = r.acos() / 3.0;
    let two_pi_third = 2.0 * std::f64::consts::PI / 3.0;
    let eig1 = q + 2.0 * p * phi.cos();
    let eig3 = q + 2.0 * p * (phi + two_pi_third).cos();
    let eig2 = 3.0 * q - eig1 - eig3;
    [eig1, eig2, eig3]
}
