//! Signal-processing primitives shared by preprocessing and feature extraction.

pub mod filter;
pub mod spectrum;
pub mod wavelet;
