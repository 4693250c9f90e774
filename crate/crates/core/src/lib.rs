//! Synthetic motion-image generation, a compact action classifier and
//! rolling-mean fall detection over frame streams.
//!
//! The pipeline: cut a person out of a photo with its mask, warp it through a
//! scripted motion over a background, average the rendered frames into one
//! "motion image", train a small CNN on those images, then classify the mean
//! of a sliding window of real frames at run time.

pub mod classifier;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod imaging;
pub mod procedural;
pub mod seed;
pub mod streaming;
pub mod synthesis;

pub use error::{Error, Result};
