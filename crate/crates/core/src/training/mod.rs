//! Autoregressive training with segment recurrence: batching, schedule,
//! optimizer and the training loop.

mod batch;
mod optim;
mod trainer;

pub use batch::{batch_iterator, Batch, BatchIterator};
pub use optim::{clip_grad_norm, grad_norm, learning_rate, Adam};
pub use trainer::{
    evaluate_nll, train, write_loss_trace, EvalPoint, LossRecord, TrainConfig, TrainReport,
};
pub use crate::model::{load_checkpoint, save_checkpoint};
