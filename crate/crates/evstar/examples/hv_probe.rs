// High-rate closed-loop probe: 7.5 deg/s slew. Scratch tooling.
use evstar::catalog::{stars_in_fov, CatalogStar, StarCatalog};
use evstar::geometry::{unit_to_radec, CameraIntrinsics, CelestialAttitude};
use evstar::metrics::evaluate_track;
use evstar::pixel::PixelCircuitParams;
use evstar::sim::{simulate_events, SensorNoiseParams};
use evstar::tracker::{align_relative_rotation, track, TrackerConfig};
use evstar::trajectory::{gen_trajectory, Trajectory, TrajectoryProfile};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

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
    while dirs.len() < n && attempts < 400_000 {
        attempts += 1;
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
    let duration_s = 30.0;

    let start = CelestialAttitude::new(150.0, 5.0, 0.0);
    let traj = gen_trajectory(
        &TrajectoryProfile::HighVelocity { max_rate_deg_s: 7.5, ramp_s: 6.0 },
        &start,
        duration_s,
        0.001,
    );
    let catalog = band_catalog(&traj, 130, (3.5, 5.5), 0.8, 9);

    let mut min_fov = usize::MAX;
    let mut max_fov = 0;
    for k in 0..=60 {
        let t = traj.duration_us() * k / 60;
        let n = stars_in_fov(&traj.attitude_at(t), &intr, &catalog, 0.0).len();
        min_fov = min_fov.min(n);
        max_fov = max_fov.max(n);
    }
    println!("catalog {} stars; in FOV: {min_fov}..{max_fov}", catalog.len());

    let t0 = std::time::Instant::now();
    let noise = SensorNoiseParams { seed: 15, ..Default::default() };
    let stream = simulate_events(&catalog, &traj, &intr, &circuit, &noise, sigma);
    println!(
        "simulated {} events ({} positive) in {:.1?}",
        stream.len(),
        stream.positive_count(),
        t0.elapsed()
    );

    // Calibration sweep at ordinary speed, reused for the fast track.
    let calib_traj = gen_trajectory(
        &TrajectoryProfile::VelocitySweep { axis: Vector3::y(), max_rate_deg_s: 1.8 },
        &CelestialAttitude::new(40.0, -25.0, 30.0),
        12.0,
        0.001,
    );
    let calib_catalog = band_catalog(&calib_traj, 14, (3.5, 5.5), 1.2, 77);
    let calib_noise = SensorNoiseParams { seed: 91, ..Default::default() };
    let calib_stream =
        simulate_events(&calib_catalog, &calib_traj, &intr, &circuit, &calib_noise, sigma);
    let gate = TrackerConfig::defaults(sigma).gate_radius_px;
    let curve = evstar::calib::empirical_offset_curve(
        &calib_stream,
        &calib_traj,
        &calib_catalog,
        &intr,
        &[3.4, 4.0, 4.5, 5.0, 5.6],
        gate,
    )
    .unwrap();

    for phi_s in [1e-5, 1e-4, 1e-3, 1e-2] {
        let mut config = TrackerConfig::defaults(sigma).with_offset_curve(curve.clone());
        config.spectral_density = phi_s;
        let t0 = std::time::Instant::now();
        let out = match track(&stream, &catalog, &intr, &config) {
            Ok(t) => t,
            Err(e) => {
                println!("phi {phi_s:.0e}: TRACK FAILED: {e}");
                continue;
            }
        };
        let dt = t0.elapsed();
        // Heartbeat grid integrity.
        let grid_ok = out
            .windows(2)
            .all(|w| w[1].t_us - w[0].t_us == config.heartbeat_us);
        let series: Vec<_> = out.iter().map(|s| (s.t_us, s.q)).collect();
        let truth_series: Vec<_> = traj.samples().iter().map(|s| (s.t_us, s.q)).collect();
        let q_r = align_relative_rotation(&series, &truth_series).unwrap();
        let aligned = evaluate_track(&out, &traj, Some(&q_r)).unwrap();
        println!(
            "phi {phi_s:.0e}: across RMS {:7.1}'' about RMS {:7.1}'' (max {:7.1}/{:7.1}) grid_ok={} {:.2e} ev/s",
            aligned.summary.across_rms_arcsec,
            aligned.summary.about_rms_arcsec,
            aligned.summary.across_max_arcsec,
            aligned.summary.about_max_arcsec,
            grid_ok,
            stream.len() as f64 / dt.as_secs_f64(),
        );
    }
}
