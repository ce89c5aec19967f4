//! From-scratch neural networks in double precision.
//!
//! Three sequence classifiers over `T x F` feature tensors share one
//! parameter store, optimizer, and checkpoint format:
//!
//! * `bilstm`: two bidirectional LSTM layers with batch norm and dropout
//!   between them, then a small dense head.
//! * `transformer`: input projection, sinusoidal positions, pre-norm encoder
//!   blocks, mean pooling, same head.
//! * `convlstm`: per-step reshape to an electrode-by-feature grid, one
//!   convolutional LSTM layer, flattened final state, same head.
//!
//! Gradients are exact (hand-derived backpropagation, verified against
//! central finite differences); all initialization is seed-deterministic.

mod adam;
mod checkpoint;
mod convlstm;
mod init;
mod layers;
mod lstm;
mod model;
mod tensor;
mod transformer;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{
    checkpoint_bytes, load_checkpoint, parse_checkpoint_bytes, save_checkpoint, CHECKPOINT_MAGIC,
};
pub use init::{glorot_uniform, orthogonal};
pub use layers::{
    batchnorm_infer, batchnorm_train, dense, dropout_mask, softmax, softmax_crossentropy, BnCache,
};
pub use lstm::{bilstm_layer, lstm_cell, lstm_sequence, LstmDir};
pub use model::{
    backward, batch_loss, build_model, forward, param_spec, Architecture, ConvLstmConfig,
    Mode, ModelConfig, ParamSpec, TrainedModel, TransformerConfig,
};
pub use tensor::{Gradients, Param, Params, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: {detail}")]
    ShapeMismatch { detail: String },

    #[error("invalid model config: {detail}")]
    InvalidConfig { detail: String },

    #[error("degenerate batch: {detail}")]
    DegenerateBatch { detail: String },

    #[error("bad checkpoint: {detail}")]
    BadCheckpoint { detail: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}
