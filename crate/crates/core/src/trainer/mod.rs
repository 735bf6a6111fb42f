//! Loss, initialization, Adam and the training loop.

mod adam;
mod init;
mod train;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use init::{xavier_bound, xavier_uniform};
pub use train::{
    baseline, batch_loss_grad, evaluate, loss, read_log, reconstruct_sample, sample_loss_grad, train,
    Evaluation, LogRow, TrainConfig, TrainOutcome, DESK_LR, FINAL_CHECKPOINT, LOG_FILE, LOG_HEADER,
};
