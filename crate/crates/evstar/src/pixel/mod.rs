//! Low-light EBS pixel signal model.
//!
//! An event pixel log-compresses intensity into a photocurrent
//! `Ĩ = ln(I/I₀ + 1)` and low-pass filters it with an intensity-dependent
//! cutoff frequency `f_c ≈ b + a·Ĩ`. The *event likelihood* is the rate of
//! change of the filtered voltage,
//!
//! ```text
//! E_LL(t) = dV/dt = 2π · f_c(Ĩ(t)) · [Ĩ(t) − V(t)],
//! ```
//!
//! positive values driving positive events. In low light the reduced
//! bandwidth delays the response, so the positive-event cloud of a dim star
//! trails its true centroid while a bright star's leads it — a
//! magnitude-dependent centroid offset `z(m)` that the tracker corrects for.

mod circuit;
mod field;
mod offset;

pub use circuit::{
    cutoff_frequency, peak_intensity, photocurrent, solve_event_likelihood, star_intensity,
    EventLikelihoodSeries, PixelCircuitParams, PixelModelError, StarSignal,
};
pub use field::{spatial_likelihood_field, track_frame, FieldConfig, LikelihoodField};
pub use offset::{
    build_offset_curve, fit_circuit_params, theoretical_offset, CircuitFit, OffsetCurve,
};
