//! Multilayer recurrent classifiers (GRU, LSTM, stacked LSTM-GRU) with batch
//! normalisation, softmax cross-entropy and full backpropagation through
//! time, plus cross-validated training.

pub mod activation;
pub mod batchnorm;
pub mod cell;
pub mod checkpoint;
pub mod model;
pub mod optim;
pub mod train;

pub use batchnorm::{batchnorm, BatchNorm, Mode, RunningStats};
pub use cell::{CellKind, CellParams};
pub use checkpoint::Checkpoint;
pub use model::{Batch, LossAndGrads, Model, ModelSpec, Params};
pub use optim::Optimizer;
pub use train::{evaluate, fit, fold_seed, train, EpochStats, FoldHistory, FoldModel, TrainConfig, TrainHistory};

#[derive(Debug, thiserror::Error)]
pub enum RnnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid model spec: {0}")]
    Spec(String),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("non-finite loss in batch {batch_id}")]
    NonFinite { batch_id: usize },
    #[error("training diverged in fold {fold}, epoch {epoch}, batch {batch_id}")]
    Diverged { fold: usize, epoch: usize, batch_id: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
