//! Semantic voxel radiance fields for counting fruit.
//!
//! The crate covers the whole pipeline: a procedural orchard generator that
//! produces posed RGB frames and binary fruit masks, a dense voxel field with
//! density, color and fruit-semantic channels, differentiable volume rendering
//! and training, orthographic point-cloud export, cascaded cluster counting
//! and detection metrics.

pub mod config;
pub mod count;
pub mod error;
pub mod eval;
pub mod export;
pub mod field;
pub mod geom;
pub mod pipeline;
pub mod render;
pub mod rng;
pub mod scenegen;
pub mod train;

pub use error::{Error, Result};
pub use geom::{Aabb, Vec3};
