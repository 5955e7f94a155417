//! Network definitions and trainers.

pub mod activation;
pub mod im2col;
pub mod model;
pub mod spec;
pub mod trainer;

pub use activation::Activation;
pub use model::{CycleCounters, Layer, Network, Pass, Sample, Target, WeightBackend};
pub use spec::{LayerSpec, Loss, NetworkKind, NetworkSpec};
pub use trainer::{Hardware, TrainMode, Trainer, TrainerConfig};
