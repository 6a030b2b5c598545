//! Transformer-XL style decoder: configuration, parameter accounting,
//! forward pass with segment memory, and checkpoints.

mod checkpoint;
mod config;
mod decoder;
mod params;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, load_checkpoint_for, save_checkpoint,
    CHECKPOINT_VERSION,
};
pub use config::{
    Method, ModelConfig, PresetSize, CHAR_VOCAB_SIZE, DEFAULT_CUTOFFS, WORD_VOCAB_SIZE,
};
pub use decoder::{
    build_model, loss_grad_check, DecoderModel, ForwardOutput, Memory, Param, ParamVars,
};
pub use params::{
    count_params, layer_prefix, param_specs, Component, ComponentBreakdown, Init, ParamSpec,
};
