//! Semi-supervised preference optimization for toy diffusion models.
//!
//! The crate trains a small conditional noise predictor with pairwise
//! preference losses when only part of the data carries human labels. The
//! remaining pairs are scored by a cheap annotator, and the debiased loss
//! corrects the annotator's errors using the labeled subset.

pub mod annotators;
pub mod cli;
pub mod data;
pub mod diffusion;
pub mod error;
pub mod preference;
pub mod rng;
pub mod trainer;
pub mod verification;

pub use error::{Error, Result};
