//! Synthesis of automatically labeled sequential LiDAR range images.
//!
//! Walking human models are ray cast into a virtual spinning LiDAR, merged
//! with background range images by per-pixel minimum depth, and emitted with
//! per-pixel human labels and sensor-frame velocity maps.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod compositor;
pub mod dataset;
pub mod error;
pub mod geometry;
pub mod human;
pub mod lidar;
pub mod raster;
pub mod shapes;
pub mod sources;
pub mod trajectory;

pub use error::{Error, Result};
