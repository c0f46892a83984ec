//! Learning-based particle shadowgraphy.
//!
//! The pipeline turns a backlit particle (bubble) image into per-particle
//! size and shape measurements in three steps:
//!
//! 1. a two-channel residual U-net ([`unet`]) predicts a binary particle
//!    image and a particle-centroid image;
//! 2. the binary channel is split into particles by marker-controlled
//!    watershed over its distance transform, with the centroid channel as
//!    markers ([`segment`]);
//! 3. region properties give equivalent radius and aspect ratio
//!    ([`measure`]).
//!
//! [`synth`] renders labeled training data, [`loss`] and [`train`] fit the
//! network, [`baseline`] is a conventional threshold-and-watershed
//! segmenter for comparison, and [`evalx`] scores detections against
//! ground truth.

pub mod baseline;
pub mod error;
pub mod evalx;
pub mod imgio;
pub mod kv;
pub mod loss;
pub mod measure;
pub mod pipeline;
pub mod segment;
pub mod synth;
pub mod tensor;
pub mod train;
pub mod unet;

pub use error::{Error, Result};
pub use imgio::{GrayImage, LabelMap};
pub use tensor::{Tensor, Tape, Var};
