//! Minimal edge-based network layers with hand-written backward passes.
//! Everything is double precision.

pub mod adam;
pub mod checkpoint;
pub mod conv;
pub mod dense;
pub mod gradcheck;
pub mod model;
pub mod norm;
pub mod pool;
mod tensor;

pub use adam::{adam_step, Adam, AdamConfig, AdamState};
pub use checkpoint::Checkpoint;
pub use conv::{mesh_conv, mesh_conv_backward};
pub use dense::{projection_head, Dense, ProjectionHead};
pub use gradcheck::grad_check;
pub use model::{init_params, Architecture, ConvBlock, ModelParams, Parts};
pub use norm::{group_norm, group_norm_backward};
pub use pool::{mesh_pool, mesh_pool_backward, mesh_unpool, mesh_unpool_backward, CollapseRecord};
pub use tensor::{global_mean_backward, global_mean_encode, relu, relu_backward, EdgeTensor};
