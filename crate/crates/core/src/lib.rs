//! Unsupervised outlier detection with label-free early stopping.
//!
//! Models are trained on contaminated data and their per-sample training loss
//! doubles as the outlier score. The entropy of the normalized loss vector on a
//! fixed evaluation subset tracks detection quality without labels, and
//! [`stop::EntropyStop`] uses it to pick the iteration to keep.

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod stop;

pub use error::{Error, Result};
