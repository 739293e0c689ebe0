//! Event-stream simulator: synthesizes deterministic sensor output from a
//! star catalog, a camera trajectory, and the pixel-circuit model.
//!
//! Each pixel near a star track integrates the circuit ODE and emits events
//! through a threshold-crossing comparator with a per-pixel reference: a
//! positive event fires when `V − V_ref ≥ θ_p` (the reference then moves to
//! the crossing level), a negative one when `V_ref − V ≥ θ_n`. A refractory
//! window, Gaussian timestamp jitter, and a uniform background Poisson
//! process complete the sensor model. Identical inputs and seed produce
//! byte-identical streams.
//!
//! Pixels are only integrated inside a configurable tube around star tracks
//! (default 4 PSF sigmas); outside it they contribute background noise only.
//! Between separate transits a pixel re-arms at the dark level, so the few
//! sub-threshold tail events of a departing star are not modeled.

mod engine;
pub mod format;

pub use engine::{simulate_events, simulate_events_with, SensorNoiseParams, SimOptions};
