//! Causal training triplets, input scaling and monitoring-data synthesis.

mod embed;
mod hifi;
mod norm;
mod triplets;

pub use embed::causal_embed;
pub use hifi::{calibrate_noise, l2_error, synthesize_hifi, HfSpec};
pub use norm::{Channel, NormStats, Range};
pub use triplets::{
    assemble_hifi, assemble_lowfi, fit_norm, split_counts, LowFiSplits, Triplet, TripletRef, TripletSet,
};
