//! The autoregressive transformer over scan-ordered token grids.

pub mod check;
pub mod checkpoint;
pub mod config;
pub mod forward;
pub mod layout;
pub mod params;

pub use check::model_grad_check;
pub use checkpoint::{config_fingerprint, load_checkpoint, save_checkpoint, CheckpointHeader};
pub use config::{AdalnCondition, ModelConfig};
pub use forward::{
    forward, forward_graph, nll_loss, split_inputs, ForwardBatch, ForwardOptions, Probe,
};
pub use layout::{build_layout, SequenceLayout, CLASS_TOKEN_POS};
pub use params::{ModelParams, TokenEmbedIds};
