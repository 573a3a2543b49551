//! Rare-class copy-and-paste augmentation for semantic segmentation datasets.
//!
//! The pipeline extracts connected regions of an underrepresented class from
//! annotated image/mask pairs, pastes geometrically transformed copies into
//! valid regions of other images, refines the pasted pixels with a random
//! Gaussian convolution filter, and emits augmented pairs plus evaluation
//! metrics and class-distribution reports.

pub mod dataset_io;
pub mod error;
pub mod exec;
pub mod geom_transform;
pub mod metrics_stats;
pub mod paste_engine;
pub mod patch_bank;
pub mod pipeline;
pub mod random_projection;

pub use error::{Error, Result};
