//! Relational graph convolutional encoder with factuality and bias heads.
//!
//! Gradients are derived by hand; `tests/gradients.rs` checks them against
//! central finite differences.

mod checkpoint;
mod model;
mod propagate;
mod train;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION,
};
pub use model::{Head, Layer, OptimizerKind, Params, RgcnConfig, RgcnModel};
pub use propagate::{
    backward_encoder, embed, encode, forward, head_logits, message_type, Adjacency,
    EmbeddingTable, ForwardCache, ForwardOutput, NUM_MESSAGE_TYPES,
};
pub use train::{
    argmax, classification_loss, classify_sources, interacted_subgraph, labeled_sources,
    link_prediction_loss, positive_pairs, predictions_from_logits, sample_negatives,
    train_classification, train_link_prediction, LinkPredConfig, Optimizer, SourcePrediction,
};
