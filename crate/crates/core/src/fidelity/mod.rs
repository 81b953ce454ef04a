//! Offline low-fidelity training, online residual fitting and composite prediction.

mod composite;
mod config;
mod lowfi;

pub use composite::{predict_composite, predict_field, train_residual, CompositeModel, PredictionParts, ResidualRun};
pub use config::{AdamConfig, HistoryEntry, TrainConfig, TrainHistory};
pub use lowfi::{lf_field, lf_forward, lf_predict, train_lowfi, LowFiRun};
