// Closed-loop probe: simulate a velocity sweep, track it, evaluate.
// Scratch tooling while tuning, not part of the test suite.
use evstar::catalog::{stars_in_fov, CatalogStar, StarCatalog};
use evstar::geometry::{
    unit_to_radec, CameraIntrinsics, CelestialAttitude, UnitQuat, ARCSEC_PER_RAD,
};
use evstar::metrics::evaluate_track;
use evstar::pixel::{build_offset_curve, PixelCircuitParams};
use evstar::sim::{simulate_events, SensorNoiseParams};
use evstar::tracker::{align_relative_rotation, track, TrackerConfig};
use evstar::trajectory::{gen_trajectory, TrajectoryProfile, Trajectory};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stars scattered around the swept sky band at a controlled density.
fn band_catalog(
    traj: &Trajectory,
    n: usize,
    mag_range: (f64, f64),
    min_sep_deg: f64,
    seed: u64,
) -> StarCatalog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cos_min = min_sep_deg.to_radians().cos();
    let mut dirs: Vec<Vector3<f64>> = Vec::new();
    let mut attempts = 0;
    while dirs.len() < n && attempts < 200_000 {
        attempts += 1;
        // Random point near the boresight path: pick a time, offset within
        // ±4.5° along/cross.
        let t = (rng.random::<f64>() * traj.duration_us() as f64) as u64;
        let q = traj.attitude_at(t);
        let off_x = (rng.random::<f64>() - 0.5) * 9.0f64.to_radians();
        let off_y = (rng.random::<f64>() - 0.5) * 5.0f64.to_radians();
        let cam = Vector3::new(off_x.tan(), off_y.tan(), 1.0).normalize();
        let d = q.inverse().rotate(&cam);
        if dirs.iter().all(|e| e.dot(&d) <= cos_min) {
            dirs.push(d);
        }
    }
    let stars = dirs
        .into_iter()
        .enumerate()
        .map(|(i, d)| {
            let (ra, dec) = unit_to_radec(&d);
            CatalogStar::new(
                i as u32 + 1,
                ra,
                dec,
                mag_range.0 + rng.random::<f64>() * (mag_range.1 - mag_range.0),
            )
        })
        .collect();
    StarCatalog::from_stars(stars, 7.0)
}

fn main() {
    let intr = CameraIntrinsics::evk4_35mm();
    let circuit = PixelCircuitParams::night_sky();
    let sigma = 2.0;

    let args: Vec<String> = std::env::args().collect();
    let duration_s: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(20.0);

    let start = CelestialAttitude::new(150.0, 15.0, 0.0);
    let traj = gen_trajectory(
        &TrajectoryProfile::VelocitySweep { axis: Vector3::y(), max_rate_deg_s: 1.8 },
        &start,
        duration_s,
        0.001,
    );
    let n_band = (duration_s * 0.55) as usize + 6;
    let catalog = band_catalog(&traj, n_band, (3.5, 5.5), 1.2, 3);

    let mut min_fov = usize::MAX;
    let mut max_fov = 0;
    for k in 0..=40 {
        let t = traj.duration_us() * k / 40;
        let n_fov = stars_in_fov(&traj.attitude_at(t), &intr, &catalog, 0.0).len();
        min_fov = min_fov.min(n_fov);
        max_fov = max_fov.max(n_fov);
    }
    println!("catalog {} stars; in FOV along track: {min_fov}..{max_fov}", catalog.len());

    let t0 = std::time::Instant::now();
    let noise = SensorNoiseParams { seed: 5, ..Default::default() };
    let stream = simulate_events(&catalog, &traj, &intr, &circuit, &noise, sigma);
    println!(
        "simulated {} events ({} positive) in {:.1?}",
        stream.len(),
        stream.positive_count(),
        t0.elapsed()
    );

    let typical_speed = 0.6 * 1.8f64.to_radians() * intr.focal_length_px;
    let mags: Vec<f64> = (0..=14).map(|i| i as f64 * 0.5).collect();
    let theory_curve = build_offset_curve(&circuit, &mags, typical_speed, sigma).unwrap();

    // Empirical calibration from a separate sweep over a different field,
    // with gating matching the tracker's.
    let calib_traj = gen_trajectory(
        &TrajectoryProfile::VelocitySweep { axis: Vector3::y(), max_rate_deg_s: 1.8 },
        &CelestialAttitude::new(40.0, -25.0, 30.0),
        12.0,
        0.001,
    );
    let calib_catalog = band_catalog(&calib_traj, 14, (3.5, 5.5), 1.2, 77);
    let calib_noise = SensorNoiseParams { seed: 91, ..Default::default() };
    let t0 = std::time::Instant::now();
    let calib_stream = simulate_events(&calib_catalog, &calib_traj, &intr, &circuit, &calib_noise, sigma);
    let gate = TrackerConfig::defaults(sigma).gate_radius_px;
    let empirical_curve = evstar::calib::empirical_offset_curve(
        &calib_stream, &calib_traj, &calib_catalog, &intr, &[3.4, 4.0, 4.5, 5.0, 5.6], gate,
    ).unwrap();
    println!("calib sweep {} events in {:.1?}", calib_stream.len(), t0.elapsed());
    println!("theory curve:    {:?}", theory_curve.samples().map(|(m,z)| (m, (z*100.0).round()/100.0)).collect::<Vec<_>>());
    println!("empirical curve: {:?}", empirical_curve.samples().map(|(m,z)| (m, (z*100.0).round()/100.0)).collect::<Vec<_>>());

    for (name, curve, phi_s) in [
        ("theory    3e-5", &theory_curve, 3e-5),
        ("empirical 3e-5", &empirical_curve, 3e-5),
        ("empirical 1e-4", &empirical_curve, 1e-4),
        ("empirical 1e-5", &empirical_curve, 1e-5),
    ] {
        let mut config = TrackerConfig::defaults(sigma).with_offset_curve(curve.clone());
        config.spectral_density = phi_s;
        let t0 = std::time::Instant::now();
        let out = match track(&stream, &catalog, &intr, &config) {
            Ok(t) => t,
            Err(e) => {
                println!("{name}: TRACK FAILED: {e}");
                continue;
            }
        };
        let track_dt = t0.elapsed();
        let series: Vec<_> = out.iter().map(|s| (s.t_us, s.q)).collect();
        let truth_series: Vec<_> = traj.samples().iter().map(|s| (s.t_us, s.q)).collect();
        let q_r = align_relative_rotation(&series, &truth_series).unwrap();
        let aligned = evaluate_track(&out, &traj, Some(&q_r)).unwrap();
        println!(
            "{name}: across RMS {:6.1}'' about RMS {:6.1}'' (max {:6.1}/{:6.1}) | align {:5.1}'' | {:.2}s ({:.2e} ev/s)",
            aligned.summary.across_rms_arcsec,
            aligned.summary.about_rms_arcsec,
            aligned.summary.across_max_arcsec,
            aligned.summary.about_max_arcsec,
            q_r.angle_to(&UnitQuat::IDENTITY) * ARCSEC_PER_RAD,
            track_dt.as_secs_f64(),
            stream.len() as f64 / track_dt.as_secs_f64(),
        );
    }
}
