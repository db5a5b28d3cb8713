//! Loss, Adam, the plateau schedule, the training loop and checkpoints.

mod adam;
mod checkpoint;
mod loss;
mod schedule;
mod trainer;

pub use adam::{adam_step, AdamConfig, OptimizerState};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use loss::{bce_loss, mean_bce_loss};
pub use schedule::{PlateauSchedule, ScheduleConfig, ScheduleTick};
pub use trainer::{predict_dataset, train, EpochRecord, TrainConfig, TrainData, TrainOutcome, Trainer};
