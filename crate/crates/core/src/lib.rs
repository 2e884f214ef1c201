//! Non-neural core of a building-footprint segmentation pipeline: label
//! weighting, segmentation losses with analytical gradients, instance
//! extraction from confidence rasters, COCO-style evaluation, precision
//! threshold calibration and cross-asset deduplication.
//!
//! Numeric kernels are generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the 64-bit variants used by the file formats and the CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod cells;
pub mod dedup;
pub mod error;
pub mod geometry;
pub mod gradcheck;
pub mod io;
pub mod label_prep;
pub mod loss;
pub mod metrics;
pub mod postprocess;
pub mod raster;
pub mod scalar;
pub mod synth;

pub use error::{Error, Result};
pub use raster::{LabelClass, Polygon, Raster, RasterKind};
pub use scalar::{Pixel, Real};

/// Confidence, weight and image rasters.
pub type Raster64 = Raster<f64>;
/// Label and mask rasters.
pub type LabelRaster = Raster<u8>;
/// Instance-id rasters.
pub type InstanceRaster = Raster<u32>;
pub type Polygon64 = Polygon<f64>;
pub type LossParams64 = loss::LossParams<f64>;
pub type LossResult64 = loss::LossResult<f64>;
pub type WeightParams64 = label_prep::WeightParams<f64>;
pub type InstanceMap64 = postprocess::InstanceMap<f64>;
