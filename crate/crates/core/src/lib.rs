//! Trace-driven laboratory for phase-aware ML prefetching.
//!
//! The pipeline: an online phase-transition detector watches the PC stream,
//! phase-specific multi-modality attention models predict same-page deltas
//! and future pages, and a chain spatio-temporal controller turns the
//! predictions into prefetch requests. Everything is evaluated against
//! rule-based baselines (best-offset, irregular stream buffer) on synthetic
//! scatter-gather traces or file-loaded traces with a set-associative cache
//! model.

pub mod baseline;
pub mod config;
pub mod cstp;
pub mod detect;
pub mod nn;
pub mod predictor;
pub mod sim;
pub mod trace;

mod error;

pub use error::{Error, Result};

/// Scalar used for all training-time math. Kernels in [`nn`] are generic
/// over the scalar; the rest of the pipeline is pinned to `f64` so that
/// acceptance runs are bit-reproducible.
pub type Real = f64;

/// Concrete row-major matrix used throughout the pipeline.
pub type Tensor = nn::Tensor2<Real>;
