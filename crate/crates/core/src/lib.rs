//! Urban change detection from pairs of co-registered multispectral scenes.
//!
//! The crate covers the whole pipeline: raster I/O and geotransform handling,
//! acquisition query building, dense optical-flow coregistration, a small
//! reverse-mode autodiff engine driving a weight-shared Siamese
//! encoder/decoder, OSCD-style dataset handling, SLIC superpixels, a random
//! forest for landcover, and the scoring metrics used to evaluate change maps.

pub mod acquire;
pub mod coreg;
pub mod dataset;
mod error;
pub mod landcover;
pub mod metrics;
pub mod raster;
pub mod segment;
pub mod siamese;
pub mod tensor;

pub use error::{Error, Result};
pub use raster::{AoiPolygon, GeoTransform, Plane, Raster};
pub use siamese::{ChangeMap, DiffMode, Network, SiameseConfig};
pub use metrics::{Confusion, ScoreReport};
pub use segment::{SegmentMap, SlicConfig};
