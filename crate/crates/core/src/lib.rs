//! Flame detection in video from temporal-slice image cubes.
//!
//! Frames are sampled ten per second, grouped into non-overlapping blocks and
//! restacked so every image column becomes a space-time slice. A DCGAN is
//! trained on flame cubes only, then its discriminator is refined with real
//! non-flame cubes in the negative slot and used as the detector.

pub mod detect;
pub mod error;
pub mod eval;
pub mod gan;
pub mod nn;
pub mod parallel;
pub mod slicing;
pub mod verify;
pub mod video_io;

pub use error::{Error, Result};
