//! Empirical offset-curve calibration: measure the along-track displacement
//! of positive-event means from ground-truth star positions, binned by
//! magnitude.

use nalgebra::Vector2;

use crate::catalog::{nearest_projected_star, stars_in_fov, ProjectedStar, StarCatalog};
use crate::event::EventStream;
use crate::geometry::{star_image_velocity, CameraIntrinsics, PixelPoint};
use crate::pixel::{OffsetCurve, PixelModelError};
use crate::trajectory::Trajectory;

/// Per-magnitude-bin displacement statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffsetBinStats {
    /// Bin center magnitude.
    pub magnitude: f64,
    /// Mean along-track displacement of events from the true star position
    /// (positive = ahead of the star).
    pub mean_along_px: f64,
    pub std_along_px: f64,
    pub n_events: usize,
}

/// Events per bin required for a usable calibration.
pub const MIN_EVENTS_PER_BIN: usize = 100;
/// Projection cache refresh, µs.
const REFRESH_US: u64 = 1_000;

/// Raw per-bin displacement statistics of positive events against truth.
///
/// Each positive event is associated with the nearest projected catalog star
/// within `gate_radius_px` at its (interpolated) true attitude; its
/// displacement is decomposed along the star's true image velocity.
pub fn empirical_offset_stats(
    events: &EventStream,
    truth: &Trajectory,
    catalog: &StarCatalog,
    intr: &CameraIntrinsics,
    mag_bin_edges: &[f64],
    gate_radius_px: f64,
) -> Vec<OffsetBinStats> {
    assert!(mag_bin_edges.len() >= 2, "need at least one magnitude bin");
    assert!(mag_bin_edges.windows(2).all(|w| w[0] < w[1]), "bin edges must increase");
    let n_bins = mag_bin_edges.len() - 1;
    let mut sums = vec![(0.0f64, 0.0f64, 0usize); n_bins];

    let mut projections: Vec<ProjectedStar> = Vec::new();
    let mut refresh_t: Option<u64> = None;
    for e in events.events.iter().filter(|e| e.is_positive()) {
        if refresh_t.map(|t| e.t_us.saturating_sub(t) >= REFRESH_US).unwrap_or(true) {
            projections = stars_in_fov(&truth.attitude_at(e.t_us), intr, catalog, 10.0);
            refresh_t = Some(e.t_us);
        }
        let p_rel = PixelPoint::new(
            e.x as f64 - intr.principal_point.x,
            e.y as f64 - intr.principal_point.y,
        );
        let Some(star) = nearest_projected_star(&p_rel, &projections, gate_radius_px) else {
            continue;
        };
        let bin = match mag_bin_edges
            .windows(2)
            .position(|w| star.star.magnitude >= w[0] && star.star.magnitude < w[1])
        {
            Some(b) => b,
            None => continue,
        };
        let v = star_image_velocity(&star.point, intr.focal_length_px, &truth.omega_at(e.t_us));
        if v.norm() < 1e-9 {
            continue;
        }
        let v_hat = v / v.norm();
        let d = Vector2::new(p_rel.x - star.point.x, p_rel.y - star.point.y).dot(&v_hat);
        sums[bin].0 += d;
        sums[bin].1 += d * d;
        sums[bin].2 += 1;
    }

    sums.iter()
        .enumerate()
        .map(|(b, &(sum, sq, n))| {
            let mean = if n > 0 { sum / n as f64 } else { f64::NAN };
            let var = if n > 1 { (sq - sum * sum / n as f64) / (n as f64 - 1.0) } else { f64::NAN };
            OffsetBinStats {
                magnitude: (mag_bin_edges[b] + mag_bin_edges[b + 1]) / 2.0,
                mean_along_px: mean,
                std_along_px: var.sqrt(),
                n_events: n,
            }
        })
        .collect()
}

/// Empirical offset curve z(m): per-bin trailing offset (the negative of the
/// mean along-track displacement), normalized to min 0.
///
/// Fails with `InsufficientData` naming the first bin with fewer than 100
/// associated events.
pub fn empirical_offset_curve(
    events: &EventStream,
    truth: &Trajectory,
    catalog: &StarCatalog,
    intr: &CameraIntrinsics,
    mag_bin_edges: &[f64],
    gate_radius_px: f64,
) -> Result<OffsetCurve, PixelModelError> {
    let stats = empirical_offset_stats(events, truth, catalog, intr, mag_bin_edges, gate_radius_px);
    for (b, s) in stats.iter().enumerate() {
        if s.n_events < MIN_EVENTS_PER_BIN {
            return Err(PixelModelError::InsufficientData {
                bin: b,
                events: s.n_events,
                required: MIN_EVENTS_PER_BIN,
            });
        }
    }
    let samples: Vec<(f64, f64)> =
        stats.iter().map(|s| (s.magnitude, -s.mean_along_px)).collect();
    Ok(OffsetCurve::from_samples(&samples))
}
