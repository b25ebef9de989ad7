//! Parsing, filtering and analysis of sleep-log tweets shared by a sleep
//! tracking app.
//!
//! The pipeline runs ingest → dedupe → parse → filter with exact per-stage
//! accounting, resolves each user to a country, and computes the cohort
//! statistics over the resulting dataset.

pub mod grammar;
pub mod ledger;
pub mod records;
pub mod par;
pub mod pipeline;
pub mod stats;
pub mod geo;
pub mod report;
pub mod analytics;
pub mod synth;
