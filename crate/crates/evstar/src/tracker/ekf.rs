//! Manifold EKF predict and update.
//!
//! The state is (q, ω) on SO(3)×ℝ³ with a 6×6 covariance in the tangent
//! space (attitude block first). The constant-velocity transition is
//! `q(t+Δt) = exp(Δt·ω)·q(t)`; its explicit first-order Jacobian and the
//! discretized white-noise-on-velocity process covariance are
//!
//! ```text
//! F = [ I + (Δt·ω)×   Δt·I + (Δt²/2)·ω× ]    Q = φ_s · [ 0          (Δt²/2)·I ]
//!     [ 0             I                 ]        [ (Δt²/2)·I  Δt·I      ]
//! ```
//!
//! (small Δt³ terms dropped). Measurements are star pixel positions; the
//! 2×6 measurement Jacobian has an analytic attitude block and a zero
//! velocity block.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use super::TrackerError;
use crate::geometry::{boxplus, skew, CameraState};

pub type Matrix6 = nalgebra::Matrix6<f64>;
pub type Matrix2x6 = nalgebra::Matrix2x6<f64>;

/// Filter state: mean, covariance, and time of validity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerState {
    pub state: CameraState,
    /// 6×6 covariance, rad² / rad²·s⁻¹ / rad²·s⁻² blocks.
    pub p: Matrix6,
    pub t_us: u64,
}

impl TrackerState {
    pub fn new(state: CameraState, p: Matrix6, t_us: u64) -> Self {
        TrackerState { state, p, t_us }
    }

    /// Fresh state with a diagonal covariance: attitude σ² = `att_var`
    /// (rad²) and velocity σ² = `vel_var` (rad²/s²) on each axis.
    pub fn with_diagonal_covariance(
        state: CameraState,
        att_var: f64,
        vel_var: f64,
        t_us: u64,
    ) -> Self {
        let mut p = Matrix6::zeros();
        for i in 0..3 {
            p[(i, i)] = att_var;
            p[(i + 3, i + 3)] = vel_var;
        }
        TrackerState { state, p, t_us }
    }
}

/// Explicit transition Jacobian for a step of `dt` seconds at rate `omega`.
pub fn transition_jacobian(omega: &Vector3<f64>, dt: f64) -> Matrix6 {
    let mut f = Matrix6::identity();
    let k = skew(omega);
    f.fixed_view_mut::<3, 3>(0, 0).copy_from(&(Matrix3::identity() + k * dt));
    f.fixed_view_mut::<3, 3>(0, 3)
        .copy_from(&(Matrix3::identity() * dt + k * (dt * dt / 2.0)));
    f
}

/// Discretized process covariance for a step of `dt` seconds with velocity
/// spectral density `phi_s` (rad²/s³).
pub fn process_noise(dt: f64, phi_s: f64) -> Matrix6 {
    let mut q = Matrix6::zeros();
    let cross = phi_s * dt * dt / 2.0;
    let vel = phi_s * dt;
    for i in 0..3 {
        q[(i, i + 3)] = cross;
        q[(i + 3, i)] = cross;
        q[(i + 3, i + 3)] = vel;
    }
    q
}

/// Propagate mean and covariance to `t_new_us`.
///
/// The mean advances on the manifold (exact exponential); the covariance
/// uses the explicit F and Q above.
pub fn ekf_predict(
    ts: &TrackerState,
    t_new_us: u64,
    phi_s: f64,
) -> Result<TrackerState, TrackerError> {
    if t_new_us < ts.t_us {
        return Err(TrackerError::TimeReversal { from_us: ts.t_us, to_us: t_new_us });
    }
    if t_new_us == ts.t_us {
        return Ok(*ts);
    }
    let dt = (t_new_us - ts.t_us) as f64 * 1e-6;
    let mut delta = Vector6::zeros();
    delta.fixed_rows_mut::<3>(0).copy_from(&(ts.state.omega * dt));
    let state = boxplus(&ts.state, &delta);

    let f = transition_jacobian(&ts.state.omega, dt);
    let p = f * ts.p * f.transpose() + process_noise(dt, phi_s);
    Ok(TrackerState { state, p: (p + p.transpose()) / 2.0, t_us: t_new_us })
}

/// 2×6 measurement Jacobian of the projected star pixel position with
/// respect to the state tangent, at the current attitude.
///
/// Attitude block via the chain rule on x = f·X/Z with dŝ/dδθ = −ŝ×;
/// velocity block identically zero (pixel positions carry no rate
/// information).
pub fn measurement_jacobian(
    state: &CameraState,
    star: &Vector3<f64>,
    focal_px: f64,
) -> Result<Matrix2x6, TrackerError> {
    let s_cam = state.q.rotate(star);
    if s_cam.z <= 1e-9 {
        return Err(TrackerError::BehindCamera);
    }
    let d_cam = -skew(&s_cam);
    let (x_row, y_row, z_row) = (d_cam.row(0), d_cam.row(1), d_cam.row(2));
    let inv_z = 1.0 / s_cam.z;
    let dx = (x_row * inv_z - z_row * (s_cam.x * inv_z * inv_z)) * focal_px;
    let dy = (y_row * inv_z - z_row * (s_cam.y * inv_z * inv_z)) * focal_px;
    let mut h = Matrix2x6::zeros();
    h.fixed_view_mut::<1, 3>(0, 0).copy_from(&dx);
    h.fixed_view_mut::<1, 3>(1, 0).copy_from(&dy);
    Ok(h)
}

/// Predicted pixel position (relative to the principal point) of a star.
pub fn predict_measurement(
    state: &CameraState,
    star: &Vector3<f64>,
    focal_px: f64,
) -> Result<Vector2<f64>, TrackerError> {
    let s_cam = state.q.rotate(star);
    if s_cam.z <= 1e-9 {
        return Err(TrackerError::BehindCamera);
    }
    Ok(Vector2::new(focal_px * s_cam.x / s_cam.z, focal_px * s_cam.y / s_cam.z))
}

/// Measurement update with a gated star observation `z` (pixels relative to
/// the principal point).
pub fn ekf_update(
    ts: &TrackerState,
    z: &Vector2<f64>,
    star: &Vector3<f64>,
    focal_px: f64,
    r: &Matrix2<f64>,
) -> Result<TrackerState, TrackerError> {
    let h = measurement_jacobian(&ts.state, star, focal_px)?;
    let predicted = predict_measurement(&ts.state, star, focal_px)?;
    let innovation = z - predicted;

    let s = h * ts.p * h.transpose() + r;
    // Condition of the symmetric 2×2 innovation covariance.
    let tr = s[(0, 0)] + s[(1, 1)];
    let det = s[(0, 0)] * s[(1, 1)] - s[(0, 1)] * s[(1, 0)];
    let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
    let (l_max, l_min) = ((tr + disc) / 2.0, (tr - disc) / 2.0);
    if !(l_min > 0.0) || l_max / l_min > 1e12 {
        return Err(TrackerError::SingularInnovation);
    }
    let s_inv = Matrix2::new(s[(1, 1)], -s[(0, 1)], -s[(1, 0)], s[(0, 0)]) / det;

    let k = ts.p * h.transpose() * s_inv;
    let state = boxplus(&ts.state, &(k * innovation));
    let p = (Matrix6::identity() - k * h) * ts.p;
    Ok(TrackerState { state, p: (p + p.transpose()) / 2.0, t_us: ts.t_us })
}
