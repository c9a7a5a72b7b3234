//! Narrative features for breakeven inflation rate (BEIR) direction.
//!
//! The crate turns GDELT Global Knowledge Graph records and market series into
//! daily theme-tone panels, extracts residual PLS components against a
//! market-only logistic baseline, benchmarks five classifier families with
//! walk-forward cross-validation, and builds a pairwise Granger network across
//! countries.
//!
//! Stages are plain functions over immutable values; the `beirnet` CLI wires
//! them together with persisted artifacts and a run manifest.

pub mod classifiers;
pub mod error;
pub mod evaluation;
pub mod gkg;
pub mod granger;
pub mod linalg;
pub mod market;
pub mod panel;
pub mod pipeline;
pub mod pls;
pub mod seed;
pub mod stats;
pub mod synth;
pub mod taxonomy;

pub use error::{Error, Result};
