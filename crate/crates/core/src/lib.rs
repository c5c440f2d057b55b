//! BLE proximity-tracing toolkit.
//!
//! The crate covers the full pipeline of an RSS-based contact tracing system:
//!
//! * [`signal`] — RSS samples, the inverse-power path-loss model, fitting and
//!   noise synthesis;
//! * [`signature`] — rotating 31-byte environmental signatures: generation,
//!   quantization, logging, expiry and matching;
//! * [`timing`] — discrete-event simulation of BLE advertising and scanning
//!   schedules, producing packet traces;
//! * [`filtering`] — moving-average smoothing of RSS streams;
//! * [`classify`] — the 8-bit RSS feature, five trainable classifiers and the
//!   path-loss threshold baseline;
//! * [`eval`] — risk-outcome bookkeeping, accuracy reports and study sweeps;
//! * [`dataset`] — CSV ingestion, per-distance summaries and train/test splits.
//!
//! Everything is deterministic given explicit seeds; no global state.

pub mod classify;
pub mod dataset;
pub mod eval;
pub mod filtering;
pub mod seed;
pub mod signal;
pub mod signature;
pub mod timing;
