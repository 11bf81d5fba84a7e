//! Synthetic object-detection datasets from 3D Gaussian splat assets.
//!
//! The crate covers the whole loop: load splat assets ([`splat`]), sample
//! domain-randomised scenes ([`scene`]), render them with a tile-based splat
//! rasteriser ([`rasterizer`]), derive bounding boxes from the known scene
//! geometry ([`annotator`]), write YOLO/COCO datasets ([`dataset`]) and score
//! detector output against ground truth ([`metrics`]).

pub mod annotator;
pub mod bbox;
pub mod camera;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod pipeline;
pub mod rasterizer;
pub mod rng;
pub mod scene;
pub mod splat;

pub use bbox::BBox;
pub use error::{Error, Result};
