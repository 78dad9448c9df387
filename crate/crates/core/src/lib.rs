//! Housing-quality evaluation from multi-platform user-generated text.
//!
//! The pipeline ingests platform exports, extracts structured evaluation
//! units with a pluggable backend, weights indicators by sentiment intensity
//! and frequency, scores residential communities on a 1-5 scale and checks
//! backend accuracy against gold annotations.

pub mod eval;
pub mod extract;
pub mod geo;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod report;
pub mod scoring;
pub mod weights;
