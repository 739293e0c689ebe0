//! Event-camera star tracking.
//!
//! End-to-end toolkit for tracking camera attitude from event-based sensor
//! (EBS) streams of star fields: a low-light pixel-circuit signal model,
//! magnitude-aware centroiding, an extended Kalman filter on the rotation
//! manifold, a lost-in-space initializer, and an event-stream simulator that
//! provides exact ground truth for closed-loop verification.
//!
//! See [`geometry`] for the frame and quaternion conventions used everywhere.

pub mod benchmark;
pub mod calib;
pub mod catalog;
pub mod centroid;
pub mod config;
pub mod event;
pub mod geometry;
pub mod metrics;
pub mod optim;
pub mod pixel;
pub mod sim;
pub mod tracker;
pub mod trajectory;
