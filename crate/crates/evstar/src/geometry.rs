//! Rotation-manifold math, celestial coordinates, and the pinhole camera.
//!
//! # Conventions (held throughout the crate)
//!
//! - **Quaternions** are Hamilton convention, stored `(w, x, y, z)`, and always
//!   unit norm. A [`UnitQuat`] represents the **world-to-camera** rotation
//!   `q_wc` unless a binding is explicitly named otherwise: `q.rotate(s)` takes
//!   a direction expressed in the celestial frame to the camera frame.
//! - **Celestial frame**: X = cos(dec)·cos(ra), Y = cos(dec)·sin(ra),
//!   Z = sin(dec). Right ascension and declination in degrees at the API
//!   surface, radians internally.
//! - **Camera frame**: +z is the boresight, +x is image-right, +y is
//!   image-down (right-handed). At roll = 0 the image "up" direction (−y)
//!   points to celestial north and image-right points west; positive roll
//!   rotates camera coordinates about +z by the right-hand rule.
//! - **Angular velocity** `ω` (rad/s) is the rate used by the state
//!   transition `q(t+Δt) = exp(Δt·ω)·q(t)`: the rotation rate of the *scene*
//!   as seen in the camera frame. A fixed star at camera direction `ŝ` moves
//!   as `dŝ/dt = ω × ŝ`.
//! - **Pixel coordinates** are relative to the principal point, +x right,
//!   +y down, in units of pixels. Integer event coordinates are pixel centers.
//!
//! Small-angle series switchovers use a 1e-8 threshold so exp/log/Rodrigues
//! stay finite and mutually consistent near the identity.

use nalgebra::{Matrix3, Vector2, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Threshold below which exp/log/Rodrigues switch to truncated series.
const SMALL_ANGLE: f64 = 1e-8;

/// Arcseconds per radian.
pub const ARCSEC_PER_RAD: f64 = 3600.0 * 180.0 / std::f64::consts::PI;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GeometryError {
    /// The rotated star direction has non-positive boresight component.
    #[error("star is behind the camera")]
    BehindCamera,
}

/// Skew-symmetric (cross-product) matrix of `v`: `skew(v) * u == v.cross(u)`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

// ---------------------------------------------------------------------------
// Unit quaternion
// ---------------------------------------------------------------------------

/// A unit quaternion `(w, x, y, z)`, Hamilton convention.
///
/// Constructors normalize, so a `UnitQuat` is unit norm within 1e-9 after
/// every operation. See the module docs for the rotation conventions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitQuat {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl UnitQuat {
    pub const IDENTITY: UnitQuat = UnitQuat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    /// Build from raw components, normalizing. Panics on a zero quaternion.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        assert!(n > 0.0 && n.is_finite(), "cannot normalize quaternion with norm {n}");
        UnitQuat { w: w / n, x: x / n, y: y / n, z: z / n }
    }

    /// Rotation of `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let n = axis.norm();
        assert!(n > 0.0, "axis must be nonzero");
        exp_map(&(axis * (angle / n)))
    }

    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }

    /// Components in storage order.
    pub fn wxyz(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// Renormalize in place. Cheap; called after every composing operation.
    pub fn renormalize(&mut self) {
        let n = self.norm();
        self.w /= n;
        self.x /= n;
        self.y /= n;
        self.z /= n;
    }

    /// Conjugate; equals the inverse for a unit quaternion.
    pub fn inverse(&self) -> Self {
        UnitQuat { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    /// Hamilton product `self · rhs` (apply `rhs` first, then `self`).
    pub fn mul(&self, rhs: &UnitQuat) -> Self {
        let (w1, x1, y1, z1) = (self.w, self.x, self.y, self.z);
        let (w2, x2, y2, z2) = (rhs.w, rhs.x, rhs.y, rhs.z);
        let mut q = UnitQuat {
            w: w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            x: w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            y: w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            z: w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        };
        q.renormalize();
        q
    }

    /// Rotate a 3-vector: `(2w² − 1)·s + 2w·(q̆ × s) + 2·q̆·(q̆ᵀs)`
    /// where `q̆` is the vector part.
    pub fn rotate(&self, s: &Vector3<f64>) -> Vector3<f64> {
        let qv = Vector3::new(self.x, self.y, self.z);
        s * (2.0 * self.w * self.w - 1.0) + qv.cross(s) * (2.0 * self.w) + qv * (2.0 * qv.dot(s))
    }

    /// Equivalent rotation matrix (maps world coordinates to camera).
    pub fn to_rotation_matrix(&self) -> Matrix3<f64> {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    /// Quaternion from a rotation matrix (Shepperd's method: pick the most
    /// stable of the four extraction branches).
    pub fn from_rotation_matrix(m: &Matrix3<f64>) -> Self {
        let tr = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
        let (w, x, y, z);
        if tr > 0.0 {
            let s = (tr + 1.0).sqrt() * 2.0;
            w = 0.25 * s;
            x = (m[(2, 1)] - m[(1, 2)]) / s;
            y = (m[(0, 2)] - m[(2, 0)]) / s;
            z = (m[(1, 0)] - m[(0, 1)]) / s;
        } else if m[(0, 0)] > m[(1, 1)] && m[(0, 0)] > m[(2, 2)] {
            let s = (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt() * 2.0;
            w = (m[(2, 1)] - m[(1, 2)]) / s;
            x = 0.25 * s;
            y = (m[(0, 1)] + m[(1, 0)]) / s;
            z = (m[(0, 2)] + m[(2, 0)]) / s;
        } else if m[(1, 1)] > m[(2, 2)] {
            let s = (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt() * 2.0;
            w = (m[(0, 2)] - m[(2, 0)]) / s;
            x = (m[(0, 1)] + m[(1, 0)]) / s;
            y = 0.25 * s;
            z = (m[(1, 2)] + m[(2, 1)]) / s;
        } else {
            let s = (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt() * 2.0;
            w = (m[(1, 0)] - m[(0, 1)]) / s;
            x = (m[(0, 2)] + m[(2, 0)]) / s;
            y = (m[(1, 2)] + m[(2, 1)]) / s;
            z = 0.25 * s;
        }
        UnitQuat::new(w, x, y, z)
    }

    /// Geodesic angle (radians) between two rotations.
    pub fn angle_to(&self, other: &UnitQuat) -> f64 {
        boxminus(self, other).norm()
    }
}

// ---------------------------------------------------------------------------
// Exponential / logarithm maps and manifold operators
// ---------------------------------------------------------------------------

/// Exponential map: rotation vector (radians) to unit quaternion.
///
/// For |δθ| < 1e-8 the half-angle sine is replaced by its second-order series
/// to avoid the 0/0 in sin(θ/2)/θ.
pub fn exp_map(delta_theta: &Vector3<f64>) -> UnitQuat {
    let theta_sq = delta_theta.norm_squared();
    let theta = theta_sq.sqrt();
    let (w, k) = if theta < SMALL_ANGLE {
        (1.0 - theta_sq / 8.0, 0.5 - theta_sq / 48.0)
    } else {
        ((0.5 * theta).cos(), (0.5 * theta).sin() / theta)
    };
    let v = delta_theta * k;
    UnitQuat::new(w, v.x, v.y, v.z)
}

/// Logarithm map: minimal rotation vector of `q`, with |result| ≤ π.
///
/// The sign is fixed so the scalar part is non-negative before extraction.
pub fn log_map(q: &UnitQuat) -> Vector3<f64> {
    let (mut w, mut v) = (q.w, Vector3::new(q.x, q.y, q.z));
    if w < 0.0 {
        w = -w;
        v = -v;
    }
    let vn = v.norm();
    if vn < SMALL_ANGLE {
        // angle ≈ 2·|v|/w, direction v/|v|
        v * (2.0 / w)
    } else {
        v * (2.0 * vn.atan2(w) / vn)
    }
}

/// Compound-manifold state: attitude plus angular velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraState {
    /// World-to-camera attitude.
    pub q: UnitQuat,
    /// Angular velocity (rad/s, camera frame; see module docs for the sign).
    pub omega: Vector3<f64>,
}

impl CameraState {
    pub fn new(q: UnitQuat, omega: Vector3<f64>) -> Self {
        CameraState { q, omega }
    }

    pub fn identity() -> Self {
        CameraState { q: UnitQuat::IDENTITY, omega: Vector3::zeros() }
    }
}

/// Manifold addition: `q' = exp(δ[0..3])·q` (renormalized), `ω' = ω + δ[3..6]`.
pub fn boxplus(state: &CameraState, delta: &Vector6<f64>) -> CameraState {
    let dq = exp_map(&Vector3::new(delta[0], delta[1], delta[2]));
    CameraState {
        q: dq.mul(&state.q),
        omega: state.omega + Vector3::new(delta[3], delta[4], delta[5]),
    }
}

/// Manifold subtraction: the rotation vector taking `q2` to `q1`,
/// i.e. `log(q1 · q2⁻¹)`.
pub fn boxminus(q1: &UnitQuat, q2: &UnitQuat) -> Vector3<f64> {
    log_map(&q1.mul(&q2.inverse()))
}

/// Direction-cosine matrix of a rotation vector (Rodrigues' formula).
///
/// Orthonormal with determinant +1 within 1e-10; for |δθ| < 1e-8 the
/// first-order form `I + δθ×` is used.
pub fn rodrigues_dcm(delta_theta: &Vector3<f64>) -> Matrix3<f64> {
    let theta_sq = delta_theta.norm_squared();
    let theta = theta_sq.sqrt();
    let k = skew(delta_theta);
    if theta < SMALL_ANGLE {
        Matrix3::identity() + k
    } else {
        Matrix3::identity() + k * (theta.sin() / theta) + k * k * ((1.0 - theta.cos()) / theta_sq)
    }
}

// ---------------------------------------------------------------------------
// Camera model
// ---------------------------------------------------------------------------

/// Pinhole camera intrinsics. Distortion-free by design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    /// Focal length in pixels.
    pub focal_length_px: f64,
    /// Sensor width in pixels.
    pub width: u32,
    /// Sensor height in pixels.
    pub height: u32,
    /// Principal point in absolute pixel coordinates (defaults to the
    /// geometric image center).
    pub principal_point: Vector2<f64>,
}

impl CameraIntrinsics {
    pub fn new(focal_length_px: f64, width: u32, height: u32) -> Self {
        assert!(focal_length_px > 0.0, "focal length must be positive");
        CameraIntrinsics {
            focal_length_px,
            width,
            height,
            principal_point: Vector2::new(
                (width as f64 - 1.0) / 2.0,
                (height as f64 - 1.0) / 2.0,
            ),
        }
    }

    /// 1280×720 sensor behind a 35 mm lens with 4.86 µm pixels
    /// (≈ 28.6 arcsec per pixel, 10.2° × 5.7° field).
    pub fn evk4_35mm() -> Self {
        CameraIntrinsics::new(35.0e-3 / 4.86e-6, 1280, 720)
    }

    /// Instantaneous field of view of one pixel, in arcseconds.
    pub fn pixel_ifov_arcsec(&self) -> f64 {
        (1.0 / self.focal_length_px).atan() * ARCSEC_PER_RAD
    }

    /// Angular radius (radians) of the circumscribed field-of-view circle.
    pub fn half_diagonal_rad(&self) -> f64 {
        let half_diag_px = (self.width as f64).hypot(self.height as f64) / 2.0;
        (half_diag_px / self.focal_length_px).atan()
    }
}

/// Image-plane point in pixels relative to the principal point
/// (+x right, +y down).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelPoint {
    pub x: f64,
    pub y: f64,
}

impl PixelPoint {
    pub fn new(x: f64, y: f64) -> Self {
        PixelPoint { x, y }
    }

    pub fn to_vector(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    pub fn distance(&self, other: &PixelPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Project a unit star direction through the camera.
///
/// Returns the pixel point relative to the principal point, plus a flag that
/// is true when the absolute pixel position lies inside `[0,W) × [0,H)`.
/// Fails with [`GeometryError::BehindCamera`] when the rotated direction has
/// `Z ≤ 1e-9`.
pub fn project_star(
    q: &UnitQuat,
    star: &Vector3<f64>,
    intr: &CameraIntrinsics,
) -> Result<(PixelPoint, bool), GeometryError> {
    let s_cam = q.rotate(star);
    if s_cam.z <= 1e-9 {
        return Err(GeometryError::BehindCamera);
    }
    let p = PixelPoint::new(
        intr.focal_length_px * s_cam.x / s_cam.z,
        intr.focal_length_px * s_cam.y / s_cam.z,
    );
    let xa = p.x + intr.principal_point.x;
    let ya = p.y + intr.principal_point.y;
    let in_frame =
        xa >= 0.0 && xa < intr.width as f64 && ya >= 0.0 && ya < intr.height as f64;
    Ok((p, in_frame))
}

/// Image-plane velocity (px/s) of a star at `p` when the scene rotates with
/// angular velocity `ω` in the camera frame (`dŝ/dt = ω × ŝ`):
///
/// ```text
/// vx = −xy/f·ωx + (f + x²/f)·ωy − y·ωz
/// vy = (−f − y²/f)·ωx + xy/f·ωy + x·ωz
/// ```
///
/// This is the time derivative of [`project_star`] along the state transition
/// `q(t) = exp(t·ω)·q₀`. Note the ωz column: a positive roll rate carries a
/// star at (x, y) to (x − y·ωz·dt, y + x·ωz·dt).
pub fn star_image_velocity(p: &PixelPoint, focal_px: f64, omega: &Vector3<f64>) -> Vector2<f64> {
    assert!(focal_px > 0.0, "focal length must be positive");
    let (x, y, f) = (p.x, p.y, focal_px);
    Vector2::new(
        -x * y / f * omega.x + (f + x * x / f) * omega.y - y * omega.z,
        (-f - y * y / f) * omega.x + x * y / f * omega.y + x * omega.z,
    )
}

// ---------------------------------------------------------------------------
// Celestial coordinates
// ---------------------------------------------------------------------------

/// Camera attitude as right ascension, declination, and roll, in degrees.
///
/// `ra ∈ [0, 360)`, `dec ∈ [−90, 90]`, `roll ∈ [−180, 180)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CelestialAttitude {
    pub ra_deg: f64,
    pub dec_deg: f64,
    pub roll_deg: f64,
}

impl CelestialAttitude {
    pub fn new(ra_deg: f64, dec_deg: f64, roll_deg: f64) -> Self {
        CelestialAttitude { ra_deg, dec_deg, roll_deg }
    }
}

/// Unit direction of (ra, dec) in the celestial frame.
pub fn radec_to_unit(ra_deg: f64, dec_deg: f64) -> Vector3<f64> {
    let ra = ra_deg.to_radians();
    let dec = dec_deg.to_radians();
    Vector3::new(dec.cos() * ra.cos(), dec.cos() * ra.sin(), dec.sin())
}

/// (ra, dec) in degrees of a unit direction, ra wrapped to [0, 360).
pub fn unit_to_radec(v: &Vector3<f64>) -> (f64, f64) {
    let dec = v.z.clamp(-1.0, 1.0).asin().to_degrees();
    let mut ra = v.y.atan2(v.x).to_degrees();
    if ra < 0.0 {
        ra += 360.0;
    }
    (ra, dec)
}

/// World-to-camera quaternion of a celestial attitude.
///
/// The boresight points at (ra, dec); at roll = 0, image-up is celestial
/// north and image-right is west. Positive roll rotates camera coordinates
/// about the boresight by the right-hand rule.
pub fn celestial_to_quat(att: &CelestialAttitude) -> UnitQuat {
    let ra = att.ra_deg.to_radians();
    let dec = att.dec_deg.to_radians();
    let b = Vector3::new(dec.cos() * ra.cos(), dec.cos() * ra.sin(), dec.sin());
    // East and north tangent directions at (ra, dec).
    let east = Vector3::new(-ra.sin(), ra.cos(), 0.0);
    let north = Vector3::new(-dec.sin() * ra.cos(), -dec.sin() * ra.sin(), dec.cos());
    // Rows of R_wc are the camera axes expressed in the world frame:
    // x_cam = −east (image-right = west), y_cam = −north (image-down = south).
    let r0 = Matrix3::from_rows(&[(-east).transpose(), (-north).transpose(), b.transpose()]);
    let q0 = UnitQuat::from_rotation_matrix(&r0);
    let roll = exp_map(&Vector3::new(0.0, 0.0, att.roll_deg.to_radians()));
    roll.mul(&q0)
}

/// Inverse of [`celestial_to_quat`]. The boolean is a gimbal-degeneracy flag:
/// when |dec| > 89.999° the roll is not separable from ra and is reported
/// as 0.
pub fn quat_to_celestial(q: &UnitQuat) -> (CelestialAttitude, bool) {
    // Boresight in world coordinates = third row of R_wc = q⁻¹ applied to ẑ.
    let b = q.inverse().rotate(&Vector3::new(0.0, 0.0, 1.0));
    let (ra, dec) = unit_to_radec(&b);
    if dec.abs() > 89.999 {
        return (CelestialAttitude::new(ra, dec, 0.0), true);
    }
    let q0 = celestial_to_quat(&CelestialAttitude::new(ra, dec, 0.0));
    // Residual is a pure boresight rotation.
    let r = q.mul(&q0.inverse());
    let mut roll = 2.0 * r.z().atan2(r.w());
    // atan2 of a half-angle representation spans (−2π, 2π]; wrap to [−π, π).
    if roll >= std::f64::consts::PI {
        roll -= 2.0 * std::f64::consts::PI;
    } else if roll < -std::f64::consts::PI {
        roll += 2.0 * std::f64::consts::PI;
    }
    (CelestialAttitude::new(ra, dec, roll.to_degrees()), false)
}
