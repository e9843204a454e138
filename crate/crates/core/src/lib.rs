//! Benchmark pipeline for early agitation prediction from in-home sensor data.
//!
//! The crate covers the full path from raw TIHM-format CSV files to evaluation
//! reports: cohort ingestion and synthetic generation, fixed-resolution
//! windowing with next-window labels, the 48-feature extraction (32 statistical
//! activity, 8 contextual activity, 8 physiology), tabular / sequence / anomaly
//! models, cross-validated evaluation, and model-agnostic attribution.

pub mod config;
pub mod eval;
pub mod explain;
pub mod features;
pub mod ingest;
pub mod models;
pub mod windowing;
