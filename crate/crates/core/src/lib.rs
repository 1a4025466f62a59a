//! Contrastive pretraining and edge-wise segmentation for triangular meshes.
//!
//! The pipeline:
//!
//! - [`mesh`]: OBJ loading, edge enumeration, 4-neighbor rings, validation
//! - [`features`]: 5-channel similarity-invariant edge descriptors
//! - [`augment`]: anisotropic scaling, vertex shifting and edge flipping
//! - [`nn`]: edge convolution, collapse pooling, unpooling, group norm, Adam
//! - [`learn`]: NT-Xent pretraining, encoder transfer, segmentation fine-tuning
//! - [`harness`]: synthetic data, label-fraction experiments, result files

// NaN-rejecting comparisons are written as negated `>` on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod augment;
mod error;
pub mod features;
pub mod harness;
pub mod learn;
pub mod mesh;
pub mod nn;

pub use error::{Error, Result};
pub use features::{extract_features, standardize_features, ChannelStats, EdgeFeatureMatrix};
pub use mesh::{load_obj, save_obj, Mesh, ValidationReport};
