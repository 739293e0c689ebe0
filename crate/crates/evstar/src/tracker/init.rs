//! Lost-in-space initialization: bin positive events, cluster with DBSCAN,
//! plate-solve the cluster centroids.

use nalgebra::Vector2;

use super::dbscan::{cluster_mean, dbscan};
use super::ekf::TrackerState;
use super::platesolve::PlateSolver;
use super::TrackerError;
use crate::event::Event;
use crate::geometry::{CameraIntrinsics, CameraState, PixelPoint};

/// Initialization settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitConfig {
    /// Event binning window, µs.
    pub window_us: u64,
    /// DBSCAN neighborhood radius, px.
    pub eps_px: f64,
    /// DBSCAN density threshold (neighbor count includes the point).
    pub min_samples: usize,
    /// Give up after consuming this much of the stream, µs.
    pub max_prefix_us: u64,
    /// Initial attitude variance per axis, rad².
    pub att_var: f64,
    /// Initial angular-velocity variance per axis, rad²/s².
    pub vel_var: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            window_us: 60_000,
            eps_px: 2.0,
            min_samples: 3,
            max_prefix_us: 2_000_000,
            att_var: 1e-4,
            vel_var: 1e-2,
        }
    }
}

/// Try consecutive event windows until one plate-solves.
///
/// Events must be time-ordered. The returned state is stamped at the middle
/// of the solved window with zero angular velocity and a diagonal
/// covariance.
pub fn init_attitude(
    events: &[Event],
    solver: &PlateSolver,
    intr: &CameraIntrinsics,
    cfg: &InitConfig,
) -> Result<TrackerState, TrackerError> {
    let Some(first) = events.first() else {
        return Err(TrackerError::InitFailure { consumed_us: 0, windows_tried: 0 });
    };
    let t0 = first.t_us;
    let mut windows_tried = 0usize;
    let mut window_start = t0;
    let mut idx = 0usize;

    while window_start < t0 + cfg.max_prefix_us {
        let window_end = window_start + cfg.window_us;
        let mut points: Vec<Vector2<f64>> = Vec::new();
        while idx < events.len() && events[idx].t_us < window_end {
            let e = &events[idx];
            if e.is_positive() {
                points.push(Vector2::new(e.x as f64, e.y as f64));
            }
            idx += 1;
        }
        windows_tried += 1;

        if points.len() >= cfg.min_samples {
            let clustering = dbscan(&points, cfg.eps_px, cfg.min_samples);
            if clustering.clusters.len() >= 4 {
                let centroids: Vec<PixelPoint> = clustering
                    .clusters
                    .iter()
                    .map(|c| {
                        let m = cluster_mean(&points, c);
                        PixelPoint::new(m.x - intr.principal_point.x, m.y - intr.principal_point.y)
                    })
                    .collect();
                if let Ok(solution) = solver.solve(&centroids, intr) {
                    let t_mid = window_start + cfg.window_us / 2;
                    return Ok(TrackerState::with_diagonal_covariance(
                        CameraState::new(solution.q, nalgebra::Vector3::zeros()),
                        cfg.att_var,
                        cfg.vel_var,
                        t_mid,
                    ));
                }
            }
        }
        window_start = window_end;
        if idx >= events.len() {
            break;
        }
    }
    Err(TrackerError::InitFailure {
        consumed_us: window_start.saturating_sub(t0),
        windows_tried,
    })
}
