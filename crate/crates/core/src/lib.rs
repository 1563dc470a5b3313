//! Dual-stream LiDAR/camera representational interaction, alternating
//! predictive decoding, and the geometry, training and evaluation machinery
//! around them, sized to run on synthetic scenes on a single CPU.
//!
//! The crate is split along the data flow:
//!
//! - [`numerics`]: dense tensors, a tape-based reverse-mode graph, attention
//!   and sampling kernels, Adam.
//! - [`geometry`]: pinhole cameras, BEV grids, depth completion, cross-modal
//!   correspondences and the Cartesian/polar BEV resampling.
//! - [`scenesim`]: procedural scenes and the toy featurizers that produce the
//!   LiDAR BEV map and per-camera image maps.
//! - [`encoder`]: the two-stream interaction encoder.
//! - [`decoder`]: query initialization and the RoI-scoped predictive decoder.
//! - [`training`]: set matching, losses and the training loop.
//! - [`evalbench`]: center-distance AP, the grouped-attention padding
//!   benchmark and heatmap export.

pub mod decoder;
pub mod encoder;
mod error;
pub mod evalbench;
pub mod geometry;
pub mod numerics;
pub mod rng;
pub mod scenesim;
pub mod training;

pub use error::{Error, Result};
