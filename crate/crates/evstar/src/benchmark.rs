//! Closed-loop centroiding benchmark: simulate a single star sweeping the
//! sensor at a fixed image speed, estimate its centroid batch by batch with
//! each method, and score against the simulator's exact ground truth.
//!
//! The offset curve is normalized (minimum 0), so the corrected estimator's
//! *absolute* reference is unobservable by construction — only the
//! magnitude dependence is meaningful. Scoring against absolute truth
//! therefore anchors the curve by the model's raw offset at the curve's
//! reference (brightest) magnitude: one constant for the whole benchmark,
//! the simulator analog of calibrating a lab rig's constant synchronization
//! bias against ground truth. The maximum-likelihood estimator needs no
//! anchor; the plain event means are deliberately reported unanchored.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::catalog::{CatalogStar, StarCatalog};
use crate::centroid::{
    batch_events, centroid_mean_all, centroid_mean_positive, centroid_offset_corrected,
    CentroidMethod, MleTemplate,
};
use crate::geometry::{project_star, star_image_velocity, CameraIntrinsics, CelestialAttitude};
use crate::pixel::{build_offset_curve, theoretical_offset, OffsetCurve, PixelCircuitParams};
use crate::sim::{simulate_events_with, SensorNoiseParams, SimOptions};
use crate::trajectory::{gen_trajectory, TrajectoryProfile};

/// Benchmark configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    /// Magnitudes to sweep.
    pub mags: Vec<f64>,
    /// Image-plane star speed, px/s.
    pub speed_px_s: f64,
    /// PSF width, px.
    pub psf_sigma_px: f64,
    pub circuit: PixelCircuitParams,
    pub noise: SensorNoiseParams,
    pub sim: SimOptions,
    /// Batch window, µs.
    pub batch_window_us: u64,
    /// Simulated transit duration per magnitude, seconds.
    pub duration_s: f64,
}

impl BenchmarkConfig {
    /// Lab-style configuration: σ = 2.5 px, 35 px/s, 1 ms batches, a low
    /// comparator threshold so dim-star batches have enough events.
    pub fn lab_defaults() -> Self {
        BenchmarkConfig {
            mags: (0..=7).map(f64::from).collect(),
            speed_px_s: 35.0,
            psf_sigma_px: 2.5,
            circuit: PixelCircuitParams::night_sky(),
            noise: SensorNoiseParams {
                threshold_pos: 0.005,
                threshold_neg: 0.005,
                refractory_us: 0,
                timestamp_jitter_us: 100.0,
                background_rate_hz: 0.0,
                seed: 0,
            },
            sim: SimOptions::default(),
            batch_window_us: 1_000,
            duration_s: 1.2,
        }
    }
}

/// One benchmark table row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchmarkRow {
    pub magnitude: f64,
    pub method: CentroidMethod,
    /// Mean Euclidean error against ground truth, px.
    pub mean_abs_err_px: f64,
    /// Standard deviation of the Euclidean error, px.
    pub std_px: f64,
    /// Mean signed along-track error component, px.
    pub bias_along_px: f64,
    pub n_batches: usize,
}

struct ErrorAccumulator {
    sum_abs: f64,
    sum_sq: f64,
    sum_along: f64,
    n: usize,
}

impl ErrorAccumulator {
    fn new() -> Self {
        ErrorAccumulator { sum_abs: 0.0, sum_sq: 0.0, sum_along: 0.0, n: 0 }
    }

    fn push(&mut self, err: Vector2<f64>, v_hat: &Vector2<f64>) {
        let abs = err.norm();
        self.sum_abs += abs;
        self.sum_sq += abs * abs;
        self.sum_along += err.dot(v_hat);
        self.n += 1;
    }

    fn row(&self, magnitude: f64, method: CentroidMethod) -> BenchmarkRow {
        let n = self.n as f64;
        let mean = self.sum_abs / n;
        let var = (self.sum_sq / n - mean * mean).max(0.0);
        BenchmarkRow {
            magnitude,
            method,
            mean_abs_err_px: mean,
            std_px: var.sqrt(),
            bias_along_px: self.sum_along / n,
            n_batches: self.n,
        }
    }
}

/// Run the benchmark: one isolated star per magnitude, swept at constant
/// image speed; every method scores the same batches (those with at least 3
/// positive events).
pub fn centroid_benchmark(
    cfg: &BenchmarkConfig,
    intr: &CameraIntrinsics,
    methods: &[CentroidMethod],
) -> Vec<BenchmarkRow> {
    let star_att = CelestialAttitude::new(150.0, 20.0, 0.0);
    let rate = (cfg.speed_px_s / intr.focal_length_px).to_degrees();
    let profile = TrajectoryProfile::ConstantSlew { axis: nalgebra::Vector3::y(), rate_deg_s: rate };
    // The offset curve all corrected estimates share, from the same circuit
    // model at the benchmark speed, plus the absolute anchor of its
    // reference magnitude (see module docs).
    let grid = curve_grid(&cfg.mags);
    let curve: OffsetCurve =
        build_offset_curve(&cfg.circuit, &grid, cfg.speed_px_s, cfg.psf_sigma_px)
            .expect("offset curve for benchmark");
    let ref_mag = grid
        .iter()
        .cloned()
        .reduce(|a, b| {
            if curve.lookup(b) < curve.lookup(a) {
                b
            } else {
                a
            }
        })
        .expect("nonempty grid");
    let anchor_px =
        theoretical_offset(ref_mag, cfg.speed_px_s, cfg.psf_sigma_px, &cfg.circuit)
            .expect("anchor offset");

    let mut rows = Vec::new();
    for &mag in &cfg.mags {
        let catalog =
            StarCatalog::from_stars(vec![CatalogStar::new(1, 150.0, 20.0, mag)], 7.5f64.max(mag));
        let truth = gen_trajectory(&profile, &star_att, cfg.duration_s, 0.001);
        let stream = simulate_events_with(
            &catalog,
            &truth,
            intr,
            &cfg.circuit,
            &cfg.noise,
            cfg.psf_sigma_px,
            &cfg.sim,
        );
        let star_dir = catalog.stars()[0].direction;

        // Star velocity is constant over the short sweep; use mid-track.
        let t_mid_track = truth.duration_us() / 2;
        let (p_mid, _) =
            project_star(&truth.attitude_at(t_mid_track), &star_dir, intr).unwrap();
        let velocity =
            star_image_velocity(&p_mid, intr.focal_length_px, &truth.omega_at(t_mid_track));
        let v_hat = velocity / velocity.norm();
        let template = methods
            .contains(&CentroidMethod::MaxLikelihood)
            .then(|| MleTemplate::new(velocity, mag, cfg.psf_sigma_px, &cfg.circuit));

        let mut accumulators: Vec<(CentroidMethod, ErrorAccumulator)> =
            methods.iter().map(|&m| (m, ErrorAccumulator::new())).collect();
        for batch in batch_events(&stream, cfg.batch_window_us) {
            if batch.positive_events().count() < 3 {
                continue;
            }
            let t_mid = batch.mid_time_us();
            let Ok((p_true, true)) = project_star(&truth.attitude_at(t_mid), &star_dir, intr)
            else {
                continue;
            };
            let truth_abs = Vector2::new(
                p_true.x + intr.principal_point.x,
                p_true.y + intr.principal_point.y,
            );
            for (method, acc) in accumulators.iter_mut() {
                let est = match method {
                    CentroidMethod::MeanPositive => centroid_mean_positive(&batch),
                    CentroidMethod::MeanAll => centroid_mean_all(&batch),
                    CentroidMethod::OffsetCorrected => {
                        centroid_offset_corrected(&batch, &v_hat, mag, &curve).map(|mut e| {
                            e.position_px += v_hat * anchor_px;
                            e
                        })
                    }
                    CentroidMethod::MaxLikelihood => {
                        template.as_ref().expect("template built").estimate(&batch)
                    }
                };
                if let Ok(est) = est {
                    acc.push(est.position_px - truth_abs, &v_hat);
                }
            }
        }
        for (method, acc) in accumulators {
            if acc.n > 0 {
                rows.push(acc.row(mag, method));
            }
        }
    }
    rows
}

/// Magnitude grid for the shared offset curve: the benchmark magnitudes plus
/// half-step midpoints, so lookups interpolate tightly.
fn curve_grid(mags: &[f64]) -> Vec<f64> {
    let mut sorted: Vec<f64> = mags.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted.dedup();
    let mut grid = Vec::new();
    for w in sorted.windows(2) {
        grid.push(w[0]);
        grid.push((w[0] + w[1]) / 2.0);
    }
    grid.push(*sorted.last().unwrap());
    grid
}

/// Write benchmark rows as CSV
/// (`mag,method,mean_abs_err_px,std_px,bias_along_px,n_batches`).
pub fn write_benchmark_csv(rows: &[BenchmarkRow], path: &std::path::Path) -> std::io::Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "mag,method,mean_abs_err_px,std_px,bias_along_px,n_batches")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6},{}",
            r.magnitude,
            r.method.name(),
            r.mean_abs_err_px,
            r.std_px,
            r.bias_along_px,
            r.n_batches
        )?;
    }
    out.flush()
}
