//! Shared fixtures for the integration suites.

use evstar::catalog::{CatalogStar, StarCatalog};
use evstar::geometry::{unit_to_radec, CameraIntrinsics};
use evstar::trajectory::Trajectory;
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Deterministic catalog scattered along the sky band a trajectory sweeps.
///
/// Stars are stratified along the boresight arc (so field-of-view occupancy
/// stays near n·fov_width/arc even for strongly non-uniform speed profiles)
/// with uniform cross-track scatter and a minimum pairwise separation.
pub fn band_catalog(
    traj: &Trajectory,
    n: usize,
    mag_range: (f64, f64),
    min_sep_deg: f64,
    seed: u64,
) -> StarCatalog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cos_min = min_sep_deg.to_radians().cos();

    // Cumulative boresight arc over the trajectory.
    let step = (traj.samples().len() / 600).max(1);
    let mut arc_t: Vec<(f64, u64)> = vec![(0.0, traj.start_us())];
    let mut prev = traj.samples()[0].q.inverse().rotate(&Vector3::z());
    let mut acc = 0.0;
    for s in traj.samples().iter().step_by(step).skip(1) {
        let b = s.q.inverse().rotate(&Vector3::z());
        acc += prev.dot(&b).clamp(-1.0, 1.0).acos();
        arc_t.push((acc, s.t_us));
        prev = b;
    }
    let total_arc = acc;
    let pad = 5.1f64.to_radians();
    let span = total_arc + 2.0 * pad;

    let mut dirs: Vec<Vector3<f64>> = Vec::new();
    let mut i = 0usize;
    let mut retries = 0usize;
    while dirs.len() < n && retries < 50 * n {
        // Stratified position along the (padded) arc.
        let s_target = -pad + span * ((i % n) as f64 + rng.random::<f64>()) / n as f64;
        let s_in = s_target.clamp(0.0, total_arc);
        let along_extra = s_target - s_in; // spill past the ends
        let idx = arc_t.partition_point(|&(s, _)| s < s_in).min(arc_t.len() - 1);
        let t = arc_t[idx].1;
        let q = traj.attitude_at(t);
        // The sweep advances the image along −x (stars drift to +x), so the
        // along-track sky direction is the camera −x axis; spill and jitter
        // go along it.
        let off_along = along_extra + (rng.random::<f64>() - 0.5) * 2.0f64.to_radians();
        let off_cross = (rng.random::<f64>() - 0.5) * 4.8f64.to_radians();
        let cam = Vector3::new(-off_along.tan(), off_cross.tan(), 1.0).normalize();
        let d = q.inverse().rotate(&cam);
        if dirs.iter().all(|e| e.dot(&d) <= cos_min) {
            dirs.push(d);
            i += 1;
        } else {
            retries += 1;
        }
    }
    let stars = dirs
        .into_iter()
        .enumerate()
        .map(|(k, d)| {
            let (ra, dec) = unit_to_radec(&d);
            CatalogStar::new(
                k as u32 + 1,
                ra,
                dec,
                mag_range.0 + rng.random::<f64>() * (mag_range.1 - mag_range.0),
            )
        })
        .collect();
    StarCatalog::from_stars(stars, 7.0)
}

/// Min/max star counts in the field of view sampled along a trajectory.
pub fn fov_occupancy(
    traj: &Trajectory,
    catalog: &StarCatalog,
    intr: &CameraIntrinsics,
    samples: usize,
) -> (usize, usize) {
    let mut lo = usize::MAX;
    let mut hi = 0;
    for k in 0..=samples {
        let t = traj.duration_us() * k as u64 / samples as u64;
        let n = evstar::catalog::stars_in_fov(&traj.attitude_at(t), intr, catalog, 0.0).len();
        lo = lo.min(n);
        hi = hi.max(n);
    }
    (lo, hi)
}
