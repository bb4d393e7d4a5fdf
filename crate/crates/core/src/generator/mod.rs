//! Generator network, optimizer and the drifted-target training loop.

pub mod adam;
pub mod mlp;
pub mod train;

pub use adam::{adam_step, AdamState};
pub use mlp::{Activation, Architecture, GeneratorModel};
pub use train::{train, train_with, Checkpoint, TrainConfig, TrainOutcome, TrainRecord};
