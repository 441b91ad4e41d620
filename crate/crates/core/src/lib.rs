//! Volumetric augmentation engine for cross-modality spine segmentation.
//!
//! Image math is generic over the scalar type ([`Real`], implemented for
//! `f32` and `f64`); the aliases below name the common instantiations.

pub mod array;
pub mod bench;
pub mod cli;
pub mod error;
pub mod filter;
pub mod rng;
pub mod metrics;
pub mod pipeline;
pub mod scalar;
pub mod synth;
pub mod transforms;
pub mod volume;

pub use error::{Error, Result};
pub use rng::{Interval, RngStream, StreamRng};
pub use scalar::{Real, Voxel};
pub use volume::{Geometry, Grid, LabelMap, Orientation, Sample, Volume};

pub type Volume32 = Volume<f32>;
pub type Volume64 = Volume<f64>;
pub type Sample32 = Sample<f32>;
pub type Sample64 = Sample<f64>;
