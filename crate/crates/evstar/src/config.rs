//! Experiment configuration: one JSON file drives a whole simulate → track →
//! evaluate pipeline, for reproducibility.
//!
//! Every section has defaults, so a minimal config can be `{}`; see
//! [`RunConfig::example`] for a fully populated document.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::benchmark::BenchmarkConfig;
use crate::geometry::{CameraIntrinsics, CelestialAttitude};
use crate::pixel::{OffsetCurve, PixelCircuitParams};
use crate::sim::{SensorNoiseParams, SimOptions};
use crate::tracker::TrackerConfig;
use crate::trajectory::TrajectoryProfile;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config value: {0}")]
    Invalid(String),
}

fn default_seed() -> u64 {
    0
}
fn default_psf_sigma() -> f64 {
    2.0
}

/// Camera intrinsics section; defaults to the EVK4-style 35 mm setup.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct IntrinsicsSection {
    pub focal_length_px: f64,
    pub width: u32,
    pub height: u32,
    /// Absolute principal point; omitted = geometric image center.
    pub principal_point: Option<[f64; 2]>,
}

impl Default for IntrinsicsSection {
    fn default() -> Self {
        let i = CameraIntrinsics::evk4_35mm();
        IntrinsicsSection {
            focal_length_px: i.focal_length_px,
            width: i.width,
            height: i.height,
            principal_point: None,
        }
    }
}

impl IntrinsicsSection {
    pub fn build(&self) -> CameraIntrinsics {
        let mut intr = CameraIntrinsics::new(self.focal_length_px, self.width, self.height);
        if let Some([cx, cy]) = self.principal_point {
            intr.principal_point = nalgebra::Vector2::new(cx, cy);
        }
        intr
    }
}

/// Where the star catalog comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum CatalogSection {
    /// Load from a catalog CSV.
    Path { path: PathBuf, #[serde(default = "default_cutoff")] cutoff: f64 },
    /// Generate deterministically.
    Synthetic {
        seed: u64,
        n_stars: usize,
        mag_min: f64,
        mag_max: f64,
        #[serde(default)]
        min_separation_deg: f64,
    },
}

fn default_cutoff() -> f64 {
    crate::catalog::DEFAULT_MAG_CUTOFF
}

impl Default for CatalogSection {
    fn default() -> Self {
        CatalogSection::Synthetic {
            seed: 1,
            n_stars: 5000,
            mag_min: 1.0,
            mag_max: 6.5,
            min_separation_deg: 0.3,
        }
    }
}

impl CatalogSection {
    pub fn build(&self) -> Result<crate::catalog::StarCatalog, ConfigError> {
        match self {
            CatalogSection::Path { path, cutoff } => crate::catalog::load_catalog(path, *cutoff)
                .map(|(c, _)| c)
                .map_err(|e| ConfigError::Invalid(e.to_string())),
            CatalogSection::Synthetic { seed, n_stars, mag_min, mag_max, min_separation_deg } => {
                crate::catalog::gen_synthetic_catalog(
                    *seed,
                    *n_stars,
                    (*mag_min, *mag_max),
                    *min_separation_deg,
                )
                .map_err(|e| ConfigError::Invalid(e.to_string()))
            }
        }
    }
}

/// Trajectory section.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajectorySection {
    pub profile: TrajectoryProfile,
    pub start: StartAttitude,
    pub duration_s: f64,
    pub sample_dt_s: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StartAttitude {
    pub ra_deg: f64,
    pub dec_deg: f64,
    pub roll_deg: f64,
}

impl Default for TrajectorySection {
    fn default() -> Self {
        TrajectorySection {
            profile: TrajectoryProfile::VelocitySweep {
                axis: nalgebra::Vector3::y(),
                max_rate_deg_s: 1.8,
            },
            start: StartAttitude { ra_deg: 150.0, dec_deg: 15.0, roll_deg: 0.0 },
            duration_s: 60.0,
            sample_dt_s: 0.001,
        }
    }
}

impl TrajectorySection {
    pub fn build(&self) -> crate::trajectory::Trajectory {
        crate::trajectory::gen_trajectory(
            &self.profile,
            &CelestialAttitude::new(self.start.ra_deg, self.start.dec_deg, self.start.roll_deg),
            self.duration_s,
            self.sample_dt_s,
        )
    }
}

/// Offset-curve source for the tracker.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum OffsetSection {
    /// No correction.
    #[default]
    Zero,
    /// Theoretical curve from the circuit model at a reference speed.
    Theory { speed_px_s: f64, mag_min: f64, mag_max: f64, n_samples: usize },
    /// Load a curve CSV (e.g. from an empirical calibration run).
    File { path: PathBuf },
}

impl OffsetSection {
    pub fn build(&self, circuit: &PixelCircuitParams, psf_sigma_px: f64) -> Result<OffsetCurve, ConfigError> {
        match self {
            OffsetSection::Zero => Ok(OffsetCurve::zero()),
            OffsetSection::Theory { speed_px_s, mag_min, mag_max, n_samples } => {
                if *n_samples < 2 || mag_max <= mag_min {
                    return Err(ConfigError::Invalid("bad theory curve grid".into()));
                }
                let mags: Vec<f64> = (0..*n_samples)
                    .map(|i| mag_min + (mag_max - mag_min) * i as f64 / (*n_samples - 1) as f64)
                    .collect();
                crate::pixel::build_offset_curve(circuit, &mags, *speed_px_s, psf_sigma_px)
                    .map_err(|e| ConfigError::Invalid(e.to_string()))
            }
            OffsetSection::File { path } => {
                OffsetCurve::load(path).map_err(ConfigError::Io)
            }
        }
    }
}

/// Tracker section.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerSection {
    pub spectral_density: f64,
    /// Measurement noise σ per axis, px; omitted = PSF width.
    pub meas_sigma_px: Option<f64>,
    /// Gate radius, px; omitted = ⌈3·σ_s⌉.
    pub gate_radius_px: Option<f64>,
    pub heartbeat_us: u64,
    pub init_window_us: u64,
    pub init_max_prefix_us: u64,
    pub offset: OffsetSection,
}

impl Default for TrackerSection {
    fn default() -> Self {
        TrackerSection {
            spectral_density: 1e-5,
            meas_sigma_px: None,
            gate_radius_px: None,
            heartbeat_us: 1_000,
            init_window_us: 60_000,
            init_max_prefix_us: 2_000_000,
            offset: OffsetSection::Zero,
        }
    }
}

impl TrackerSection {
    pub fn build(
        &self,
        circuit: &PixelCircuitParams,
        psf_sigma_px: f64,
    ) -> Result<TrackerConfig, ConfigError> {
        let mut cfg = TrackerConfig::defaults(psf_sigma_px);
        cfg.spectral_density = self.spectral_density;
        if let Some(s) = self.meas_sigma_px {
            cfg.meas_noise_px2 = nalgebra::Matrix2::identity() * s * s;
        }
        if let Some(r) = self.gate_radius_px {
            cfg.gate_radius_px = r;
        }
        cfg.heartbeat_us = self.heartbeat_us;
        cfg.init.window_us = self.init_window_us;
        cfg.init.max_prefix_us = self.init_max_prefix_us;
        cfg.offset_curve = self.offset.build(circuit, psf_sigma_px)?;
        Ok(cfg)
    }
}

/// The top-level experiment configuration.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub intrinsics: IntrinsicsSection,
    #[serde(default = "default_psf_sigma")]
    pub psf_sigma_px: f64,
    pub circuit: PixelCircuitParams,
    pub noise: SensorNoiseParams,
    pub sim: SimOptions,
    pub catalog: CatalogSection,
    pub trajectory: TrajectorySection,
    pub tracker: TrackerSection,
    /// Centroid-benchmark overrides; omitted = lab defaults.
    pub centroid_bench: Option<BenchmarkConfig>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg: RunConfig = serde_json::from_str(&text)?;
        // The config seed overrides the noise seed unless one was given
        // explicitly inside the noise section.
        if cfg.noise.seed == 0 {
            cfg.noise.seed = cfg.seed;
        }
        if cfg.psf_sigma_px <= 0.0 {
            return Err(ConfigError::Invalid("psf_sigma_px must be positive".into()));
        }
        Ok(cfg)
    }

    /// A fully populated example document.
    pub fn example() -> Self {
        RunConfig {
            seed: 7,
            psf_sigma_px: 2.0,
            circuit: PixelCircuitParams::night_sky(),
            noise: SensorNoiseParams::default(),
            sim: SimOptions::default(),
            catalog: CatalogSection::default(),
            trajectory: TrajectorySection::default(),
            tracker: TrackerSection {
                offset: OffsetSection::Theory {
                    speed_px_s: 130.0,
                    mag_min: 0.0,
                    mag_max: 7.0,
                    n_samples: 15,
                },
                ..Default::default()
            },
            centroid_bench: Some(BenchmarkConfig::lab_defaults()),
            intrinsics: IntrinsicsSection::default(),
        }
    }
}
