//! Attitude-error metrics: across/about decomposition and track-vs-truth
//! comparison.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{boxminus, UnitQuat, ARCSEC_PER_RAD};
use crate::tracker::StampedAttitude;
use crate::trajectory::Trajectory;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("temporal overlap is {overlap_s:.3} s, need at least {required_s} s")]
    NoOverlap { overlap_s: f64, required_s: f64 },
}

/// Pointing (across) and roll (about) difference between two attitudes, in
/// arcseconds.
///
/// The error rotation vector `δ = q_est ⊟ q_true` lives in the true camera
/// frame; its boresight component is the roll error and the transverse
/// magnitude the pointing error, so `across² + about²` recomposes exactly
/// into the squared geodesic angle.
pub fn attitude_difference(q_est: &UnitQuat, q_true: &UnitQuat) -> (f64, f64) {
    let d = boxminus(q_est, q_true);
    (d.x.hypot(d.y) * ARCSEC_PER_RAD, d.z.abs() * ARCSEC_PER_RAD)
}

/// One compared sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSample {
    pub t_us: u64,
    pub across_arcsec: f64,
    pub about_arcsec: f64,
    /// Whether the sample is inside the startup transient excluded from the
    /// summary.
    pub in_transient: bool,
}

/// Summary statistics over the non-transient samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub across_rms_arcsec: f64,
    pub about_rms_arcsec: f64,
    pub across_mean_arcsec: f64,
    pub about_mean_arcsec: f64,
    pub across_max_arcsec: f64,
    pub about_max_arcsec: f64,
    pub n_samples: usize,
}

/// Per-sample differences plus summary.
#[derive(Debug, Clone)]
pub struct TrackComparison {
    pub samples: Vec<ComparisonSample>,
    pub summary: ComparisonSummary,
}

/// Transient excluded from summaries: the first second after the estimate
/// series starts.
pub const TRANSIENT_US: u64 = 1_000_000;
/// Minimum usable overlap.
pub const MIN_OVERLAP_S: f64 = 1.0;

/// Compare an estimated track against interpolated truth.
///
/// Truth is interpolated (spherical-linear) to the estimate timestamps; an
/// optional relative rotation `q_r` is composed onto the truth
/// (`truth·q_r`) before differencing, matching the alignment model of
/// [`crate::tracker::align_relative_rotation`].
pub fn evaluate_track(
    est: &[StampedAttitude],
    truth: &Trajectory,
    q_r: Option<&UnitQuat>,
) -> Result<TrackComparison, MetricsError> {
    let usable: Vec<&StampedAttitude> = est
        .iter()
        .filter(|s| s.t_us >= truth.start_us() && s.t_us <= truth.end_us())
        .collect();
    let overlap_s = match (usable.first(), usable.last()) {
        (Some(a), Some(b)) => (b.t_us - a.t_us) as f64 * 1e-6,
        _ => 0.0,
    };
    if overlap_s < MIN_OVERLAP_S {
        return Err(MetricsError::NoOverlap { overlap_s, required_s: MIN_OVERLAP_S });
    }

    let t_start = est.first().map(|s| s.t_us).unwrap_or(0);
    let samples: Vec<ComparisonSample> = usable
        .iter()
        .map(|s| {
            let mut q_true = truth.attitude_at(s.t_us);
            if let Some(r) = q_r {
                q_true = q_true.mul(r);
            }
            let (across, about) = attitude_difference(&s.q, &q_true);
            ComparisonSample {
                t_us: s.t_us,
                across_arcsec: across,
                about_arcsec: about,
                in_transient: s.t_us < t_start + TRANSIENT_US,
            }
        })
        .collect();

    Ok(TrackComparison { summary: summarize(&samples), samples })
}

/// Recompute the summary from samples (the transient flag is honored), as
/// emitted per-sample data must reproduce it exactly.
pub fn summarize(samples: &[ComparisonSample]) -> ComparisonSummary {
    let kept: Vec<&ComparisonSample> = samples.iter().filter(|s| !s.in_transient).collect();
    let n = kept.len();
    if n == 0 {
        return ComparisonSummary {
            across_rms_arcsec: f64::NAN,
            about_rms_arcsec: f64::NAN,
            across_mean_arcsec: f64::NAN,
            about_mean_arcsec: f64::NAN,
            across_max_arcsec: f64::NAN,
            about_max_arcsec: f64::NAN,
            n_samples: 0,
        };
    }
    let nf = n as f64;
    let (mut sq_across, mut sq_about, mut sum_across, mut sum_about) = (0.0, 0.0, 0.0, 0.0);
    let (mut max_across, mut max_about) = (0.0f64, 0.0f64);
    for s in &kept {
        sq_across += s.across_arcsec * s.across_arcsec;
        sq_about += s.about_arcsec * s.about_arcsec;
        sum_across += s.across_arcsec;
        sum_about += s.about_arcsec;
        max_across = max_across.max(s.across_arcsec);
        max_about = max_about.max(s.about_arcsec);
    }
    ComparisonSummary {
        across_rms_arcsec: (sq_across / nf).sqrt(),
        about_rms_arcsec: (sq_about / nf).sqrt(),
        across_mean_arcsec: sum_across / nf,
        about_mean_arcsec: sum_about / nf,
        across_max_arcsec: max_across,
        about_max_arcsec: max_about,
        n_samples: n,
    }
}

/// Write per-sample comparison CSV
/// (`t_us,across_arcsec,about_arcsec,in_transient`).
pub fn write_comparison(cmp: &TrackComparison, path: &std::path::Path) -> std::io::Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "t_us,across_arcsec,about_arcsec,in_transient")?;
    for s in &cmp.samples {
        writeln!(
            out,
            "{},{:.6},{:.6},{}",
            s.t_us, s.across_arcsec, s.about_arcsec, s.in_transient as u8
        )?;
    }
    out.flush()
}
