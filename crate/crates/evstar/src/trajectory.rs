//! Camera attitude trajectories: sampled attitude/rate histories and the
//! deterministic motion profiles used to exercise the tracker.
//!
//! A trajectory stores `(t, q, ω)` samples with spherical-linear attitude
//! interpolation and linear rate interpolation between samples. The stored
//! rate follows the state-transition convention `q(t+Δt) = exp(Δt·ω)·q(t)`,
//! so finite differences of the sampled attitudes reproduce ω.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{boxminus, celestial_to_quat, exp_map, CameraState, CelestialAttitude, UnitQuat};

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("trajectory needs at least two samples")]
    TooShort,
    #[error("trajectory timestamps must be strictly increasing at sample {0}")]
    NonMonotonic(usize),
}

/// One trajectory sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub t_us: u64,
    pub q: UnitQuat,
    pub omega: Vector3<f64>,
}

/// A sampled attitude history with interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    samples: Vec<TrajectorySample>,
}

impl Trajectory {
    pub fn new(samples: Vec<TrajectorySample>) -> Result<Self, TrajectoryError> {
        if samples.len() < 2 {
            return Err(TrajectoryError::TooShort);
        }
        for (i, w) in samples.windows(2).enumerate() {
            if w[1].t_us <= w[0].t_us {
                return Err(TrajectoryError::NonMonotonic(i + 1));
            }
        }
        Ok(Trajectory { samples })
    }

    pub fn samples(&self) -> &[TrajectorySample] {
        &self.samples
    }

    pub fn start_us(&self) -> u64 {
        self.samples[0].t_us
    }

    pub fn end_us(&self) -> u64 {
        self.samples[self.samples.len() - 1].t_us
    }

    pub fn duration_us(&self) -> u64 {
        self.end_us() - self.start_us()
    }

    /// Index of the sample at or before `t_us` (clamped to a valid segment).
    fn segment_index(&self, t_us: u64) -> usize {
        match self.samples.binary_search_by_key(&t_us, |s| s.t_us) {
            Ok(i) => i.min(self.samples.len() - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(self.samples.len() - 2),
        }
    }

    /// Attitude at `t_us`: spherical-linear between bracketing samples,
    /// clamped to the end samples outside the span.
    pub fn attitude_at(&self, t_us: u64) -> UnitQuat {
        if t_us <= self.start_us() {
            return self.samples[0].q;
        }
        if t_us >= self.end_us() {
            return self.samples[self.samples.len() - 1].q;
        }
        let i = self.segment_index(t_us);
        let (a, b) = (&self.samples[i], &self.samples[i + 1]);
        let s = (t_us - a.t_us) as f64 / (b.t_us - a.t_us) as f64;
        exp_map(&(boxminus(&b.q, &a.q) * s)).mul(&a.q)
    }

    /// Angular rate at `t_us`, linear between samples, clamped at the ends.
    pub fn omega_at(&self, t_us: u64) -> Vector3<f64> {
        if t_us <= self.start_us() {
            return self.samples[0].omega;
        }
        if t_us >= self.end_us() {
            return self.samples[self.samples.len() - 1].omega;
        }
        let i = self.segment_index(t_us);
        let (a, b) = (&self.samples[i], &self.samples[i + 1]);
        let s = (t_us - a.t_us) as f64 / (b.t_us - a.t_us) as f64;
        a.omega * (1.0 - s) + b.omega * s
    }

    pub fn state_at(&self, t_us: u64) -> CameraState {
        CameraState::new(self.attitude_at(t_us), self.omega_at(t_us))
    }
}

/// Deterministic motion profiles. Rates are degrees per second; axes are
/// unit-ish vectors in the camera frame (normalized internally).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrajectoryProfile {
    /// Constant rotation rate about a fixed camera axis.
    ConstantSlew { axis: Vector3<f64>, rate_deg_s: f64 },
    /// Rate ramps 0 → max → 0 (triangular) about a fixed axis.
    VelocitySweep { axis: Vector3<f64>, max_rate_deg_s: f64 },
    /// Alternating slew legs about pitch/yaw with dwells in between.
    Multipose { rate_deg_s: f64, leg_s: f64, dwell_s: f64 },
    /// Sinusoidal pitch/yaw rates in quadrature.
    SmoothSine { amp_deg_s: f64, period_s: f64 },
    /// Stepped declination ladder: slew up, dwell, repeat.
    TiltLadder { step_deg: f64, rate_deg_s: f64, dwell_s: f64 },
    /// Ramp to a high rate about a yaw/pitch diagonal, hold, ramp down.
    HighVelocity { max_rate_deg_s: f64, ramp_s: f64 },
}

/// Half-cosine smoothing used to ramp piecewise profiles; keeps sampled
/// rates consistent with attitude finite differences.
fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    0.5 - 0.5 * (std::f64::consts::PI * x).cos()
}

/// Transition ramp time for piecewise profiles, seconds.
const RAMP_S: f64 = 0.3;

impl TrajectoryProfile {
    /// Angular rate at time `t` (seconds from trajectory start).
    pub fn omega_at(&self, t: f64, duration_s: f64) -> Vector3<f64> {
        match self {
            TrajectoryProfile::ConstantSlew { axis, rate_deg_s } => {
                axis.normalize() * rate_deg_s.to_radians()
            }
            TrajectoryProfile::VelocitySweep { axis, max_rate_deg_s } => {
                let phase = (t / duration_s).clamp(0.0, 1.0);
                let rate = max_rate_deg_s.to_radians() * (1.0 - (2.0 * phase - 1.0).abs());
                axis.normalize() * rate
            }
            TrajectoryProfile::Multipose { rate_deg_s, leg_s, dwell_s } => {
                let cycle = leg_s + dwell_s;
                let k = (t / cycle).floor() as i64;
                let within = t - k as f64 * cycle;
                if within >= *leg_s {
                    return Vector3::zeros();
                }
                // Ramped leg about alternating axes and signs.
                let ramp = smoothstep(within / RAMP_S).min(smoothstep((leg_s - within) / RAMP_S));
                let axis = match k.rem_euclid(4) {
                    0 => Vector3::y(),
                    1 => Vector3::x(),
                    2 => -Vector3::y(),
                    _ => -Vector3::x(),
                };
                axis * (rate_deg_s.to_radians() * ramp)
            }
            TrajectoryProfile::SmoothSine { amp_deg_s, period_s } => {
                let w = std::f64::consts::TAU / period_s;
                let a = amp_deg_s.to_radians();
                Vector3::new(a * (w * t).sin(), a * (w * t).cos(), 0.0)
            }
            TrajectoryProfile::TiltLadder { step_deg, rate_deg_s, dwell_s } => {
                let rate = rate_deg_s.to_radians();
                let leg_s = step_deg.to_radians() / rate;
                let cycle = leg_s + dwell_s;
                let within = t - (t / cycle).floor() * cycle;
                if within >= leg_s {
                    return Vector3::zeros();
                }
                let ramp = smoothstep(within / RAMP_S).min(smoothstep((leg_s - within) / RAMP_S));
                // Pitch up: boresight declination increases.
                Vector3::x() * (-rate * ramp)
            }
            TrajectoryProfile::HighVelocity { max_rate_deg_s, ramp_s } => {
                let up = smoothstep(t / ramp_s);
                let down = smoothstep((duration_s - t) / ramp_s);
                let rate = max_rate_deg_s.to_radians() * up.min(down);
                Vector3::new(1.0, 1.0, 0.0).normalize() * rate
            }
        }
    }
}

/// Generate a trajectory by integrating a profile's rate from a starting
/// attitude. Deterministic; the attitude advances with midpoint sampling of
/// ω so stored rates match attitude finite differences.
pub fn gen_trajectory(
    profile: &TrajectoryProfile,
    start: &CelestialAttitude,
    duration_s: f64,
    sample_dt_s: f64,
) -> Trajectory {
    assert!(duration_s > 0.0 && sample_dt_s > 0.0, "duration and step must be positive");
    let n = (duration_s / sample_dt_s).round() as usize;
    assert!(n >= 2, "trajectory needs at least two samples");
    let mut q = celestial_to_quat(start);
    let mut samples = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let t = k as f64 * sample_dt_s;
        samples.push(TrajectorySample {
            t_us: (t * 1e6).round() as u64,
            q,
            omega: profile.omega_at(t, duration_s),
        });
        if k < n {
            let omega_mid = profile.omega_at(t + 0.5 * sample_dt_s, duration_s);
            q = exp_map(&(omega_mid * sample_dt_s)).mul(&q);
        }
    }
    Trajectory::new(samples).expect("generated samples are monotone")
}
