//! Constant-velocity Kalman filter over `(cx, cy, aspect, height)` and their
//! rates, in grid units per frame.
//!
//! Noise scales with box height as in DeepSORT: position terms use
//! `std_weight_position · h`, velocity terms `std_weight_velocity · h`, and
//! aspect gets small fixed deviations.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::frame::GridBox;

pub type Vector8 = SVector<f64, 8>;
pub type Matrix8 = SMatrix<f64, 8, 8>;
pub type Vector4 = SVector<f64, 4>;
pub type Matrix4 = SMatrix<f64, 4, 4>;
pub type Matrix48 = SMatrix<f64, 4, 8>;

/// 95th percentile of χ² with 4 degrees of freedom.
pub const CHI2_95_4DOF: f64 = 9.4877;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseWeights {
    pub std_weight_position: f64,
    pub std_weight_velocity: f64,
}

impl Default for NoiseWeights {
    fn default() -> Self {
        Self {
            std_weight_position: 1.0 / 20.0,
            std_weight_velocity: 1.0 / 160.0,
        }
    }
}

pub fn box_to_measurement(b: &GridBox) -> Vector4 {
    let (cx, cy) = b.center();
    Vector4::new(cx, cy, b.w / b.h, b.h)
}

pub fn measurement_to_box(m: &Vector4) -> GridBox {
    let (cx, cy, a, h) = (m[0], m[1], m[2], m[3]);
    let w = a * h;
    GridBox::new(cx - w / 2.0, cy - h / 2.0, w, h)
}

pub fn state_to_box(mean: &Vector8) -> GridBox {
    measurement_to_box(&mean.fixed_rows::<4>(0).into_owned())
}

pub fn transition() -> Matrix8 {
    let mut f = Matrix8::identity();
    for i in 0..4 {
        f[(i, i + 4)] = 1.0;
    }
    f
}

pub fn observation() -> Matrix48 {
    Matrix48::identity()
}

/// Initial state for a fresh measurement: zero velocity, wide covariance.
pub fn initiate(z: &Vector4, w: &NoiseWeights) -> (Vector8, Matrix8) {
    let mut mean = Vector8::zeros();
    mean.fixed_rows_mut::<4>(0).copy_from(z);
    let h = z[3];
    let (p, v) = (w.std_weight_position * h, w.std_weight_velocity * h);
    let std = [
        2.0 * p,
        2.0 * p,
        1e-2,
        2.0 * p,
        10.0 * v,
        10.0 * v,
        1e-5,
        10.0 * v,
    ];
    (
        mean,
        Matrix8::from_diagonal(&Vector8::from_iterator(std.iter().map(|s| s * s))),
    )
}

pub fn process_noise(mean: &Vector8, w: &NoiseWeights) -> Matrix8 {
    let h = mean[3];
    let (p, v) = (w.std_weight_position * h, w.std_weight_velocity * h);
    let std = [p, p, 1e-2, p, v, v, 1e-5, v];
    Matrix8::from_diagonal(&Vector8::from_iterator(std.iter().map(|s| s * s)))
}

pub fn measurement_noise(mean: &Vector8, w: &NoiseWeights) -> Matrix4 {
    let p = w.std_weight_position * mean[3];
    Matrix4::from_diagonal(&Vector4::new(p * p, p * p, 1e-1 * 1e-1, p * p))
}

/// `x ← F x`, `P ← F P Fᵀ + Q`.
pub fn predict(mean: &Vector8, cov: &Matrix8, q: &Matrix8) -> (Vector8, Matrix8) {
    let f = transition();
    let p = f * cov * f.transpose() + q;
    (f * mean, symmetrize(p))
}

/// Innovation mean and covariance `H P Hᵀ + R`.
pub fn project(mean: &Vector8, cov: &Matrix8, r: &Matrix4) -> (Vector4, Matrix4) {
    let h = observation();
    (h * mean, symmetrize(h * cov * h.transpose() + r))
}

fn is_psd4(m: &Matrix4) -> bool {
    if !m.iter().all(|v| v.is_finite())
        || (m - m.transpose()).abs().max() > 1e-12 * (1.0 + m.abs().max())
    {
        return false;
    }
    let tol = -1e-12 * (1.0 + m.abs().max());
    m.symmetric_eigenvalues().iter().all(|&e| e >= tol)
}

fn invert_spd(s: &Matrix4) -> Result<Matrix4> {
    if let Some(ch) = s.cholesky() {
        return Ok(ch.inverse());
    }
    s.try_inverse()
        .ok_or_else(|| domain("innovation covariance is singular"))
}

/// Linear-Gaussian correction with measurement noise `r`.
pub fn update(
    mean: &Vector8,
    cov: &Matrix8,
    z: &Vector4,
    r: &Matrix4,
) -> Result<(Vector8, Matrix8)> {
    if !is_psd4(r) {
        return Err(domain(
            "measurement noise is not symmetric positive semi-definite",
        ));
    }
    let (zp, s) = project(mean, cov, r);
    let s_inv = invert_spd(&s)?;
    let k = cov * observation().transpose() * s_inv;
    let new_mean = mean + k * (z - zp);
    let new_cov = cov - k * s * k.transpose();
    Ok((new_mean, symmetrize(new_cov)))
}

/// Squared Mahalanobis distance of `z` from the projected state.
pub fn gating_distance(mean: &Vector8, cov: &Matrix8, r: &Matrix4, z: &Vector4) -> f64 {
    let (zp, s) = project(mean, cov, r);
    let d = z - zp;
    match invert_spd(&s) {
        Ok(inv) => (d.transpose() * inv * d)[(0, 0)],
        Err(_) => f64::INFINITY,
    }
}

fn symmetrize<const N: usize>(m: SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    (m + m.transpose()) * 0.5
}
