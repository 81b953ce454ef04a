//! Dense numerics shared by the operator networks: matrices, seeded random
//! streams, Glorot initialisation, tanh, Adam and the learning-rate schedule.
//!
//! Everything here is a pure function of its inputs, including the stream
//! position of an [`RngStream`].

mod activation;
mod adam;
mod dd;
mod init;
mod matrix;
mod rng;
mod scalar;
mod schedule;

pub use activation::{tanh_act, tanh_f64, tanh_grad, tanh_inplace};
pub use adam::AdamState;
pub use dd::DoubleDouble;
pub use init::{glorot_normal, glorot_std};
pub use matrix::Matrix;
pub use rng::{streams, RngStream};
pub use scalar::Real;
pub use schedule::LrSchedule;
