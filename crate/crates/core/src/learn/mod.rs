//! Contrastive pretraining, encoder transfer and segmentation fine-tuning.

pub mod dataset;
pub mod loss;
pub mod ntxent;
pub mod train;

pub use dataset::Dataset;
pub use loss::{cross_entropy_edges, cross_entropy_with_grad, edge_accuracy, predict};
pub use ntxent::{nt_xent, nt_xent_terms, nt_xent_with_grad, LatentBatch};
pub use train::{
    build_positive_pairs, evaluate, finetune, input_tensor, metrics_csv, pretrain, scratch_encoder,
    transfer_and_assemble_unet, FinetuneOutput, MetricsRecord, Phase, PretrainOutput, TrainConfig,
};
