//! Command-line pipeline: catalog and trajectory generation, event-stream
//! simulation, tracking, evaluation, and the calibration/benchmark tools.
//!
//! All runs with identical configuration and seed are bit-reproducible.
//! Output files are written atomically (temp file + rename). Exit codes:
//! 0 success, 2 configuration error, 3 runtime failure, 4 no solution
//! (initialization / plate solve).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::Vector3;

use evstar::benchmark::{centroid_benchmark, write_benchmark_csv, BenchmarkConfig};
use evstar::calib::empirical_offset_curve;
use evstar::catalog::{gen_synthetic_catalog, save_catalog};
use evstar::centroid::CentroidMethod;
use evstar::config::RunConfig;
use evstar::geometry::CelestialAttitude;
use evstar::metrics::{evaluate_track, write_comparison};
use evstar::pixel::{build_offset_curve, fit_circuit_params, OffsetCurve, PixelCircuitParams};
use evstar::sim::format::{read_events, read_truth, write_events, write_truth};
use evstar::sim::simulate_events_with;
use evstar::tracker::{align_relative_rotation, read_track, track, write_track, TrackerError};
use evstar::trajectory::{gen_trajectory, TrajectoryProfile};

#[derive(Parser)]
#[command(name = "evstar", about = "Event-camera star tracking pipeline", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic synthetic star catalog CSV.
    GenCatalog(GenCatalogArgs),
    /// Generate a camera trajectory (truth CSV) from a motion profile.
    GenTraj(GenTrajArgs),
    /// Simulate an event stream from a config file.
    Simulate(SimulateArgs),
    /// Track an event stream.
    Track(TrackArgs),
    /// Compare a track against a truth trajectory.
    Eval(EvalArgs),
    /// Run the per-magnitude centroiding benchmark.
    CentroidBench(CentroidBenchArgs),
    /// Produce offset curves: theoretical, empirical, or fitted.
    OffsetCurve(OffsetCurveArgs),
    /// Print a fully populated example config.
    ExampleConfig,
}

#[derive(Args)]
struct GenCatalogArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    mag_min: f64,
    #[arg(long)]
    mag_max: f64,
    #[arg(long, default_value_t = 0.0)]
    min_separation_deg: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenTrajArgs {
    /// Profile name: constant-slew, velocity-sweep, multipose, smooth-sine,
    /// tilt-ladder, high-velocity.
    #[arg(long)]
    profile: String,
    #[arg(long)]
    duration_s: f64,
    #[arg(long, default_value_t = 0.001)]
    sample_dt_s: f64,
    #[arg(long, default_value_t = 150.0)]
    start_ra_deg: f64,
    #[arg(long, default_value_t = 15.0)]
    start_dec_deg: f64,
    #[arg(long, default_value_t = 0.0)]
    start_roll_deg: f64,
    /// Rotation axis for slew-type profiles: x, y, or z.
    #[arg(long, default_value = "y")]
    axis: String,
    /// Rate for constant-slew / multipose / tilt-ladder, deg/s.
    #[arg(long, default_value_t = 1.0)]
    rate_deg_s: f64,
    /// Peak rate for velocity-sweep / high-velocity, deg/s.
    #[arg(long, default_value_t = 1.8)]
    max_rate_deg_s: f64,
    /// Leg/dwell lengths for multipose, seconds.
    #[arg(long, default_value_t = 5.0)]
    leg_s: f64,
    #[arg(long, default_value_t = 3.0)]
    dwell_s: f64,
    /// Amplitude/period for smooth-sine.
    #[arg(long, default_value_t = 0.9)]
    amp_deg_s: f64,
    #[arg(long, default_value_t = 8.0)]
    period_s: f64,
    /// Declination step for tilt-ladder, degrees.
    #[arg(long, default_value_t = 2.0)]
    step_deg: f64,
    /// Ramp time for high-velocity, seconds.
    #[arg(long, default_value_t = 6.0)]
    ramp_s: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_events: PathBuf,
    #[arg(long)]
    out_truth: PathBuf,
}

#[derive(Args)]
struct TrackArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Estimated track CSV.
    #[arg(long)]
    est: PathBuf,
    /// Truth trajectory CSV.
    #[arg(long)]
    truth: PathBuf,
    /// Solve for and apply a relative rotation before differencing.
    #[arg(long)]
    align: bool,
    /// Per-sample comparison CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CentroidBenchArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OffsetCurveArgs {
    /// theory, empirical, or fit.
    #[arg(long)]
    mode: String,
    /// Config file (circuit parameters, PSF width, catalog, intrinsics).
    #[arg(long)]
    config: PathBuf,
    /// Reference image speed for theory/fit curves, px/s.
    #[arg(long, default_value_t = 50.0)]
    speed_px_s: f64,
    #[arg(long, default_value_t = 0.0)]
    mag_min: f64,
    #[arg(long, default_value_t = 7.0)]
    mag_max: f64,
    #[arg(long, default_value_t = 15)]
    n_samples: usize,
    /// Event stream for empirical calibration.
    #[arg(long)]
    events: Option<PathBuf>,
    /// Truth trajectory for empirical calibration.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Magnitude bin edges for empirical calibration, comma-separated.
    #[arg(long)]
    bins: Option<String>,
    /// Association gate for empirical calibration, px.
    #[arg(long, default_value_t = 6.0)]
    gate_px: f64,
    /// Empirical curve CSV to fit circuit parameters against.
    #[arg(long)]
    empirical: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

/// Error wrapper carrying the process exit code.
struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn config(msg: impl Into<String>) -> Self {
        CliError { code: 2, message: msg.into() }
    }
    fn runtime(msg: impl Into<String>) -> Self {
        CliError { code: 3, message: msg.into() }
    }
    fn no_solution(msg: impl Into<String>) -> Self {
        CliError { code: 4, message: msg.into() }
    }
}

impl From<evstar::config::ConfigError> for CliError {
    fn from(e: evstar::config::ConfigError) -> Self {
        CliError::config(e.to_string())
    }
}

impl From<TrackerError> for CliError {
    fn from(e: TrackerError) -> Self {
        match e {
            TrackerError::InitFailure { .. } | TrackerError::NoSolution { .. } => {
                CliError::no_solution(e.to_string())
            }
            other => CliError::runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::runtime(e.to_string())
    }
}

/// Atomic file write: produce into a sibling temp file, then rename.
fn write_atomic(
    path: &Path,
    write: impl FnOnce(&Path) -> Result<(), CliError>,
) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let tmp = dir.join(format!(
        ".{}.tmp-{}",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("out"),
        std::process::id()
    ));
    write(&tmp)?;
    std::fs::rename(&tmp, path)
        .map_err(|e| CliError::runtime(format!("rename {tmp:?} -> {path:?}: {e}")))
}

fn parse_axis(s: &str) -> Result<Vector3<f64>, CliError> {
    match s {
        "x" => Ok(Vector3::x()),
        "y" => Ok(Vector3::y()),
        "z" => Ok(Vector3::z()),
        other => Err(CliError::config(format!("unknown axis `{other}` (use x, y, or z)"))),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenCatalog(a) => {
            let catalog =
                gen_synthetic_catalog(a.seed, a.n, (a.mag_min, a.mag_max), a.min_separation_deg)
                    .map_err(|e| CliError::config(e.to_string()))?;
            write_atomic(&a.out, |p| {
                save_catalog(&catalog, p).map_err(|e| CliError::runtime(e.to_string()))
            })?;
            println!("wrote {} stars to {}", catalog.len(), a.out.display());
            Ok(())
        }
        Command::GenTraj(a) => {
            let axis = parse_axis(&a.axis)?;
            let profile = match a.profile.as_str() {
                "constant-slew" => {
                    TrajectoryProfile::ConstantSlew { axis, rate_deg_s: a.rate_deg_s }
                }
                "velocity-sweep" => {
                    TrajectoryProfile::VelocitySweep { axis, max_rate_deg_s: a.max_rate_deg_s }
                }
                "multipose" => TrajectoryProfile::Multipose {
                    rate_deg_s: a.rate_deg_s,
                    leg_s: a.leg_s,
                    dwell_s: a.dwell_s,
                },
                "smooth-sine" => {
                    TrajectoryProfile::SmoothSine { amp_deg_s: a.amp_deg_s, period_s: a.period_s }
                }
                "tilt-ladder" => TrajectoryProfile::TiltLadder {
                    step_deg: a.step_deg,
                    rate_deg_s: a.rate_deg_s,
                    dwell_s: a.dwell_s,
                },
                "high-velocity" => TrajectoryProfile::HighVelocity {
                    max_rate_deg_s: a.max_rate_deg_s,
                    ramp_s: a.ramp_s,
                },
                other => {
                    return Err(CliError::config(format!("unknown profile `{other}`")));
                }
            };
            let start = CelestialAttitude::new(a.start_ra_deg, a.start_dec_deg, a.start_roll_deg);
            let traj = gen_trajectory(&profile, &start, a.duration_s, a.sample_dt_s);
            write_atomic(&a.out, |p| {
                write_truth(&traj, p).map_err(|e| CliError::runtime(e.to_string()))
            })?;
            println!("wrote {} samples to {}", traj.samples().len(), a.out.display());
            Ok(())
        }
        Command::Simulate(a) => {
            let cfg = RunConfig::load(&a.config)?;
            let intr = cfg.intrinsics.build();
            let catalog = cfg.catalog.build()?;
            let traj = cfg.trajectory.build();
            let stream = simulate_events_with(
                &catalog,
                &traj,
                &intr,
                &cfg.circuit,
                &cfg.noise,
                cfg.psf_sigma_px,
                &cfg.sim,
            );
            write_atomic(&a.out_events, |p| {
                write_events(&stream, p).map_err(|e| CliError::runtime(e.to_string()))
            })?;
            write_atomic(&a.out_truth, |p| {
                write_truth(&traj, p).map_err(|e| CliError::runtime(e.to_string()))
            })?;
            println!(
                "simulated {} events ({} positive) over {:.1} s",
                stream.len(),
                stream.positive_count(),
                traj.duration_us() as f64 * 1e-6
            );
            Ok(())
        }
        Command::Track(a) => {
            let cfg = RunConfig::load(&a.config)?;
            let intr = cfg.intrinsics.build();
            let catalog = cfg.catalog.build()?;
            let tracker_cfg = cfg.tracker.build(&cfg.circuit, cfg.psf_sigma_px)?;
            let stream = read_events(&a.events).map_err(|e| CliError::runtime(e.to_string()))?;
            let out = track(&stream, &catalog, &intr, &tracker_cfg)?;
            write_atomic(&a.out, |p| {
                write_track(&out, p).map_err(|e| CliError::runtime(e.to_string()))
            })?;
            println!("tracked {} heartbeats to {}", out.len(), a.out.display());
            Ok(())
        }
        Command::Eval(a) => {
            let est = read_track(&a.est).map_err(|e| CliError::runtime(e.to_string()))?;
            let truth = read_truth(&a.truth).map_err(|e| CliError::runtime(e.to_string()))?;
            let q_r = if a.align {
                let est_series: Vec<_> = est.iter().map(|s| (s.t_us, s.q)).collect();
                let truth_series: Vec<_> =
                    truth.samples().iter().map(|s| (s.t_us, s.q)).collect();
                Some(align_relative_rotation(&est_series, &truth_series)?)
            } else {
                None
            };
            let cmp = evaluate_track(&est, &truth, q_r.as_ref())
                .map_err(|e| CliError::runtime(e.to_string()))?;
            write_atomic(&a.out, |p| {
                write_comparison(&cmp, p).map_err(|e| CliError::runtime(e.to_string()))
            })?;
            println!(
                "across_rms_arcsec={:.3} about_rms_arcsec={:.3}",
                cmp.summary.across_rms_arcsec, cmp.summary.about_rms_arcsec
            );
            Ok(())
        }
        Command::CentroidBench(a) => {
            let cfg = RunConfig::load(&a.config)?;
            let intr = cfg.intrinsics.build();
            let bench: BenchmarkConfig =
                cfg.centroid_bench.clone().unwrap_or_else(BenchmarkConfig::lab_defaults);
            let methods = [
                CentroidMethod::MeanPositive,
                CentroidMethod::MeanAll,
                CentroidMethod::OffsetCorrected,
                CentroidMethod::MaxLikelihood,
            ];
            let rows = centroid_benchmark(&bench, &intr, &methods);
            write_atomic(&a.out, |p| {
                write_benchmark_csv(&rows, p).map_err(|e| CliError::runtime(e.to_string()))
            })?;
            println!("wrote {} benchmark rows to {}", rows.len(), a.out.display());
            Ok(())
        }
        Command::OffsetCurve(a) => {
            let cfg = RunConfig::load(&a.config)?;
            match a.mode.as_str() {
                "theory" => {
                    if a.n_samples < 2 || a.mag_max <= a.mag_min {
                        return Err(CliError::config("bad magnitude grid"));
                    }
                    let mags: Vec<f64> = (0..a.n_samples)
                        .map(|i| {
                            a.mag_min
                                + (a.mag_max - a.mag_min) * i as f64 / (a.n_samples - 1) as f64
                        })
                        .collect();
                    let curve =
                        build_offset_curve(&cfg.circuit, &mags, a.speed_px_s, cfg.psf_sigma_px)
                            .map_err(|e| CliError::runtime(e.to_string()))?;
                    write_atomic(&a.out, |p| curve.save(p).map_err(CliError::from))?;
                }
                "empirical" => {
                    let events_path = a
                        .events
                        .as_ref()
                        .ok_or_else(|| CliError::config("empirical mode needs --events"))?;
                    let truth_path = a
                        .truth
                        .as_ref()
                        .ok_or_else(|| CliError::config("empirical mode needs --truth"))?;
                    let bins: Vec<f64> = a
                        .bins
                        .as_ref()
                        .ok_or_else(|| CliError::config("empirical mode needs --bins"))?
                        .split(',')
                        .map(|s| s.trim().parse::<f64>())
                        .collect::<Result<_, _>>()
                        .map_err(|e| CliError::config(format!("bad --bins: {e}")))?;
                    let stream =
                        read_events(events_path).map_err(|e| CliError::runtime(e.to_string()))?;
                    let truth =
                        read_truth(truth_path).map_err(|e| CliError::runtime(e.to_string()))?;
                    let catalog = cfg.catalog.build()?;
                    let intr = cfg.intrinsics.build();
                    let curve = empirical_offset_curve(
                        &stream, &truth, &catalog, &intr, &bins, a.gate_px,
                    )
                    .map_err(|e| CliError::runtime(e.to_string()))?;
                    write_atomic(&a.out, |p| curve.save(p).map_err(CliError::from))?;
                }
                "fit" => {
                    let emp_path = a
                        .empirical
                        .as_ref()
                        .ok_or_else(|| CliError::config("fit mode needs --empirical"))?;
                    let empirical =
                        OffsetCurve::load(emp_path).map_err(|e| CliError::runtime(e.to_string()))?;
                    let init = PixelCircuitParams::night_sky();
                    let fit =
                        fit_circuit_params(&empirical, a.speed_px_s, cfg.psf_sigma_px, &init)
                            .map_err(|e| CliError::runtime(e.to_string()))?;
                    println!(
                        "fitted i0={:.4} a_hz={:.4} b_hz={:.4} residual_sq_px2={:.6e} iterations={}",
                        fit.params.i0,
                        fit.params.a_hz,
                        fit.params.b_hz,
                        fit.residual_sq_px2,
                        fit.iterations
                    );
                    let mags: Vec<f64> = empirical.samples().map(|(m, _)| m).collect();
                    let refit =
                        build_offset_curve(&fit.params, &mags, a.speed_px_s, cfg.psf_sigma_px)
                            .map_err(|e| CliError::runtime(e.to_string()))?;
                    write_atomic(&a.out, |p| refit.save(p).map_err(CliError::from))?;
                }
                other => {
                    return Err(CliError::config(format!(
                        "unknown offset-curve mode `{other}` (theory, empirical, fit)"
                    )));
                }
            }
            println!("wrote {}", a.out.display());
            Ok(())
        }
        Command::ExampleConfig => {
            println!("{}", serde_json::to_string_pretty(&RunConfig::example()).unwrap());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: code={} {}", e.code, e.message.replace('\n', " "));
            ExitCode::from(e.code)
        }
    }
}
