//! Feature map denoising toolkit.
//!
//! Generates adversarial images against a small CNN, denoises inputs with
//! median and Wiener filters, scores how much the top-k prediction vector
//! moves, and trains classical detectors on those scores.

pub mod attacks;
pub mod datagen;
pub mod detectors;
pub mod error;
pub mod filters;
pub mod harness;
pub mod image;
pub mod model;
pub mod rng;
pub mod scoring;

pub use error::{FmdError, Result};
