//! Attractiveness recognition from frontal EEG and eye tracking.
//!
//! The pipeline runs in stages: event-locked epoching ([`model`]), artifact
//! handling ([`preprocess`]), feature extraction ([`features`]), graph-based
//! feature ranking ([`select`]), polynomial-kernel SVM with sigmoid posteriors
//! ([`classify`]) and reporting ([`analysis`]). [`synth`] generates sessions
//! with planted effects for end-to-end checks; [`pipeline`] wires the stages
//! behind one configuration.

pub mod dsp;
pub mod error;
pub mod analysis;
pub mod classify;
pub mod features;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod preprocess;
pub mod select;
pub mod synth;

pub use error::{Error, Result};
