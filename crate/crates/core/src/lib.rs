//! Runtime anomaly detection for drone flight logs.
//!
//! Logs are split into mission phases, checked against mined per-phase range
//! rules and a latency rule, and scored by five unsupervised detectors whose
//! majority vote is OR-fused with the rule verdict.

pub mod geo;
pub mod phases;
pub mod simkit;
pub mod telemetry;
pub mod rules;
pub mod detectors;
pub mod ensemble;
pub mod evalkit;
pub mod config;
