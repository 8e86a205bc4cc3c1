//! Supervised training, synthetic phantoms and full-volume inference.

pub mod data;
pub mod inference;
pub mod optim;
pub mod phantom;
pub mod schedule;
pub mod trainer;

pub use data::{PairBatch, PairSet, TrainingData};
pub use inference::{blend_weight_sum, denoise_slice, denoise_volume, tile_starts, DenoiseOutput};
pub use optim::Adam;
pub use phantom::{generate_phantom_volume, PhantomConfig};
pub use schedule::{PlateauScheduler, ScheduleEvent};
pub use trainer::{
    evaluate_loss, mse_loss, train, EpochRecord, StopReason, TrainConfig, TrainHistory,
};
