//! falign: a training laboratory for feedback-alignment learning rules.
//!
//! Dense multi-layer perceptrons are trained with one of five
//! interchangeable update rules — exact backprop, feedback alignment,
//! direct feedback alignment, angle-perturbed backprop and
//! last-layer-only — while per-layer alignment between each rule's update
//! and the true gradient is instrumented at every step.
//!
//! Module map:
//! - [`numerics`] — dense `f64` matrices and the seeded RNG everything
//!   else draws from
//! - [`network`] — MLP architecture, forward pass, softmax/cross-entropy
//! - [`rules`] — the update rules behind one interface
//! - [`instrumentation`] — alignment measures and per-step metrics records
//! - [`data`] — MNIST IDX ingestion, deterministic batching, synthetic data
//! - [`experiments`] — training runs, the weight-swap experiment, sweeps
//! - [`cli`] — command-line front end (`falign` binary)

pub mod cli;
pub mod data;
pub mod error;
pub mod experiments;
pub mod instrumentation;
pub mod network;
pub mod numerics;
pub mod rules;

pub use error::{Error, Result};
