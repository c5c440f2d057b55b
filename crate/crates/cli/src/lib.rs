//! Command-line front end for the proximity-tracing toolkit.
//!
//! The heavy lifting lives in `proxitrace-core`; this crate adds argument
//! parsing, file plumbing, the consolidated report generator, and the
//! multi-device tracing demo.

pub mod app;
pub mod demo;
pub mod report;
