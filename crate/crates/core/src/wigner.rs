//! Spin-1 Wigner rotation matrices and the azimuth-averaged mixing matrix.
//!
//! Rows and columns are ordered m = -1, 0, +1. Elements follow
//! D_{m',m}(alpha, beta, gamma) = exp(-i m' alpha) d_{m',m}(beta) exp(-i m gamma).

use nalgebra::Matrix3;

use crate::spin::C64;

/// Reduced rotation matrix d^1(beta).
pub fn wigner_small_d1(beta: f64) -> Matrix3<f64> {
    let (s, c) = beta.sin_cos();
    let r = s * std::f64::consts::FRAC_1_SQRT_2;
    let p = 0.5 * (1.0 + c);
    let q = 0.5 * (1.0 - c);
    // rows m' = -1, 0, +1
    Matrix3::new(
        p, r, q, //
        -r, c, r, //
        q, -r, p,
    )
}

/// D^1(0, beta, 0).
pub fn wigner_d1(beta: f64) -> Matrix3<C64> {
    wigner_small_d1(beta).map(|x| C64::new(x, 0.0))
}

/// Full D^1(alpha, beta, gamma).
pub fn wigner_d1_euler(alpha: f64, beta: f64, gamma: f64) -> Matrix3<C64> {
    let d = wigner_small_d1(beta);
    Matrix3::from_fn(|row, col| {
        let mp = row as f64 - 1.0;
        let m = col as f64 - 1.0;
        C64::from_polar(d[(row, col)], -(mp * alpha + m * gamma))
    })
}

/// <|D^1_{m',m}(phi, theta, 0)|^2>_phi, the population mixing matrix that maps
/// zero-field overlaps |t^0_m|^2 onto field-tilted overlaps |t_m'|^2.
///
/// The azimuthal phases have unit modulus, so the average is the entrywise
/// square of d^1(theta). The result is doubly stochastic.
pub fn mixing_matrix(theta: f64) -> Matrix3<f64> {
    wigner_small_d1(theta).map(|x| x * x)
}
