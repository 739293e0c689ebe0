//! Batch centroid estimators and the per-magnitude centroiding benchmark.
//!
//! Estimators work in absolute sensor pixel coordinates (the coordinate
//! system of [`Event`]). The maximum-likelihood estimator matches event
//! positions against a precomputed spatial likelihood template; the
//! offset-corrected estimator shifts the positive-event mean along the star's
//! unit velocity by the magnitude-dependent offset z(m).

use nalgebra::Vector2;
use thiserror::Error;

use crate::event::{Event, EventStream};
use crate::optim::nelder_mead;
use crate::pixel::{
    spatial_likelihood_field, track_frame, FieldConfig, LikelihoodField, OffsetCurve,
    PixelCircuitParams, StarSignal,
};

#[derive(Debug, Error, PartialEq)]
pub enum CentroidError {
    #[error("batch has {got} usable events, need at least {need}")]
    EmptyBatch { got: usize, need: usize },
    #[error("all events fall in the floored region of the likelihood template")]
    DegenerateLikelihood,
}

/// Events within one half-open time window.
#[derive(Debug, Clone)]
pub struct EventBatch {
    pub window_start_us: u64,
    pub window_end_us: u64,
    pub events: Vec<Event>,
}

impl EventBatch {
    pub fn mid_time_us(&self) -> u64 {
        self.window_start_us + (self.window_end_us - self.window_start_us) / 2
    }

    pub fn positive_events(&self) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(|e| e.is_positive())
    }
}

/// Split a stream into half-open windows `[t₀ + k·w, t₀ + (k+1)·w)` anchored
/// at the stream's first timestamp. Empty windows are omitted.
pub fn batch_events(stream: &EventStream, window_us: u64) -> Vec<EventBatch> {
    assert!(window_us > 0, "batch window must be positive");
    let Some((t0, _)) = stream.time_span_us() else {
        return Vec::new();
    };
    let mut batches: Vec<EventBatch> = Vec::new();
    for e in &stream.events {
        let k = (e.t_us - t0) / window_us;
        let start = t0 + k * window_us;
        match batches.last_mut() {
            Some(b) if b.window_start_us == start => b.events.push(*e),
            _ => batches.push(EventBatch {
                window_start_us: start,
                window_end_us: start + window_us,
                events: vec![*e],
            }),
        }
    }
    batches
}

/// Which estimator produced a [`CentroidEstimate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CentroidMethod {
    MeanPositive,
    MeanAll,
    OffsetCorrected,
    MaxLikelihood,
}

impl CentroidMethod {
    pub fn name(&self) -> &'static str {
        match self {
            CentroidMethod::MeanPositive => "mean_positive",
            CentroidMethod::MeanAll => "mean_all",
            CentroidMethod::OffsetCorrected => "offset_corrected",
            CentroidMethod::MaxLikelihood => "mle",
        }
    }
}

/// A star-position estimate from one batch, absolute pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CentroidEstimate {
    pub position_px: Vector2<f64>,
    pub n_events: usize,
    pub method: CentroidMethod,
}

fn mean_of<'a, I: Iterator<Item = &'a Event>>(events: I) -> (Vector2<f64>, usize) {
    let mut sum = Vector2::zeros();
    let mut n = 0usize;
    for e in events {
        sum += Vector2::new(e.x as f64, e.y as f64);
        n += 1;
    }
    (if n > 0 { sum / n as f64 } else { sum }, n)
}

/// Arithmetic mean of the positive events.
pub fn centroid_mean_positive(batch: &EventBatch) -> Result<CentroidEstimate, CentroidError> {
    let (mean, n) = mean_of(batch.positive_events());
    if n == 0 {
        return Err(CentroidError::EmptyBatch { got: 0, need: 1 });
    }
    Ok(CentroidEstimate { position_px: mean, n_events: n, method: CentroidMethod::MeanPositive })
}

/// Arithmetic mean over both polarities.
pub fn centroid_mean_all(batch: &EventBatch) -> Result<CentroidEstimate, CentroidError> {
    let (mean, n) = mean_of(batch.events.iter());
    if n == 0 {
        return Err(CentroidError::EmptyBatch { got: 0, need: 1 });
    }
    Ok(CentroidEstimate { position_px: mean, n_events: n, method: CentroidMethod::MeanAll })
}

/// Positive-event mean shifted by the magnitude-dependent offset along the
/// star's unit velocity: `x̂ = x̄ + v̄·z(m)`.
pub fn centroid_offset_corrected(
    batch: &EventBatch,
    v_unit: &Vector2<f64>,
    magnitude: f64,
    curve: &OffsetCurve,
) -> Result<CentroidEstimate, CentroidError> {
    assert!((v_unit.norm() - 1.0).abs() < 1e-9, "v̄ must be unit length");
    let base = centroid_mean_positive(batch)?;
    Ok(CentroidEstimate {
        position_px: base.position_px + v_unit * curve.lookup(magnitude),
        n_events: base.n_events,
        method: CentroidMethod::OffsetCorrected,
    })
}

/// Precomputed likelihood template for the maximum-likelihood estimator.
///
/// Valid for one (velocity, magnitude, PSF width, circuit) combination; the
/// per-batch search treats the star as locally linear over the batch window.
pub struct MleTemplate {
    field: LikelihoodField,
    velocity: Vector2<f64>,
    v_hat: Vector2<f64>,
    n_hat: Vector2<f64>,
    psf_sigma_px: f64,
    log_floor: f64,
    floor: f64,
}

impl MleTemplate {
    pub fn new(
        velocity: Vector2<f64>,
        magnitude: f64,
        psf_sigma_px: f64,
        params: &PixelCircuitParams,
    ) -> Self {
        assert!(velocity.norm() > 0.0, "MLE requires a moving star");
        let signal = StarSignal::new(magnitude, psf_sigma_px, velocity, Vector2::zeros());
        let field = spatial_likelihood_field(&signal, params, &FieldConfig::auto(&signal, params))
            .expect("field construction with positive step");
        let (v_hat, n_hat) = track_frame(&velocity);
        let floor = field.max_value() * 1e-12;
        MleTemplate {
            field,
            velocity,
            v_hat,
            n_hat,
            psf_sigma_px,
            log_floor: floor.ln(),
            floor,
        }
    }

    /// Log-likelihood of de-drifted event offsets for a candidate star
    /// position (both in absolute pixels at the batch mid-time).
    pub fn log_likelihood_at(&self, offsets: &[Vector2<f64>], candidate: &Vector2<f64>) -> f64 {
        let mut ll = 0.0;
        for o in offsets {
            let d = o - candidate;
            let v = self.field.value(d.dot(&self.v_hat), d.dot(&self.n_hat));
            ll += if v > self.floor { v.ln() } else { self.log_floor };
        }
        ll
    }

    /// Maximum-likelihood star position at the batch mid-time.
    ///
    /// Coarse 0.5 px grid over ±4σ around the de-drifted positive-event
    /// mean, then simplex refinement. Deterministic.
    pub fn estimate(&self, batch: &EventBatch) -> Result<CentroidEstimate, CentroidError> {
        let t_mid = batch.mid_time_us() as f64;
        let offsets: Vec<Vector2<f64>> = batch
            .positive_events()
            .map(|e| {
                let dt_s = (e.t_us as f64 - t_mid) * 1e-6;
                Vector2::new(e.x as f64, e.y as f64) - self.velocity * dt_s
            })
            .collect();
        if offsets.len() < 3 {
            return Err(CentroidError::EmptyBatch { got: offsets.len(), need: 3 });
        }
        let mean = offsets.iter().sum::<Vector2<f64>>() / offsets.len() as f64;

        let half = 4.0 * self.psf_sigma_px;
        let steps = (half / 0.5).ceil() as i32;
        let mut best = (f64::NEG_INFINITY, mean);
        for iy in -steps..=steps {
            for ix in -steps..=steps {
                let cand = mean + Vector2::new(ix as f64 * 0.5, iy as f64 * 0.5);
                let ll = self.log_likelihood_at(&offsets, &cand);
                if ll > best.0 {
                    best = (ll, cand);
                }
            }
        }
        if best.0 <= offsets.len() as f64 * self.log_floor + 1e-9 {
            return Err(CentroidError::DegenerateLikelihood);
        }

        let refine = nelder_mead(
            |x| -self.log_likelihood_at(&offsets, &Vector2::new(x[0], x[1])),
            &[best.1.x, best.1.y],
            &[0.3, 0.3],
            200,
            1e-7,
            2e-4,
        );
        let refined = Vector2::new(refine.x[0], refine.x[1]);
        let position = if -refine.value >= best.0 { refined } else { best.1 };
        Ok(CentroidEstimate {
            position_px: position,
            n_events: offsets.len(),
            method: CentroidMethod::MaxLikelihood,
        })
    }
}

/// One-shot maximum-likelihood centroid (builds the template internally;
/// prefer [`MleTemplate`] when processing many batches).
pub fn centroid_mle(
    batch: &EventBatch,
    velocity: &Vector2<f64>,
    magnitude: f64,
    psf_sigma_px: f64,
    params: &PixelCircuitParams,
) -> Result<CentroidEstimate, CentroidError> {
    MleTemplate::new(*velocity, magnitude, psf_sigma_px, params).estimate(batch)
}
