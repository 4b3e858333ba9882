//! Human activity recognition from sparse mmWave radar point clouds.
//!
//! Frames are aligned to a fixed point count and grouped into sliding
//! windows; each frame is embedded by a Light-PointNet, each window is
//! classified by a bidirectional lite-LSTM, and continuous prediction streams
//! are smoothed with an HMM and collapsed into timestamped events.

pub mod bililstm;
pub mod ctc;
pub mod error;
pub mod eval;
pub mod hmm;
pub mod io;
pub mod lpn;
pub mod model;
pub mod nn;
pub mod pcloud;
pub mod rng;
pub mod spca;
pub mod stream;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
