//! Character-model enhancements: word-segment embeddings, character pooling
//! and decoder-layer transfer from word models.

mod segment;
mod transfer;

pub use segment::{
    char_pool_embed, word_segment_embed, word_segment_indices, word_starts, WordCursor,
    MAX_CARRIED_PREFIX,
};
pub use transfer::{
    transfer_from_checkpoint, transfer_layers, transferred_layer_count, TransferPlan,
    TRANSFER_PERCENTS,
};
