//! Losses, data pipeline and the Adam training loop.

mod losses;
mod trainer;

pub use losses::{
    batch_losses, evaluate_losses, loss_derivative, loss_smooth, loss_step, BatchLoss, LossBreakdown, LossWeights,
    Transition,
};
pub use trainer::{
    evaluate_chunked, read_log, split_training, train, transitions, write_log, DataSplit, EpochLog, TrainConfig,
    TrainOutcome,
};
