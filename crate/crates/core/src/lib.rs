//! Multi-fidelity operator learning for tunnelling-induced surface settlement.
//!
//! A low-fidelity operator network is trained offline on simulated
//! settlements; a residual network is refitted online against sparse
//! monitoring readings and added to it.

pub mod causal;
pub mod error;
pub mod eval;
pub mod fidelity;
pub mod ground;
pub mod numkit;
pub mod operator_net;

pub use error::{Error, Result};

pub type Matrix = numkit::Matrix<f64>;
pub type NetParams = operator_net::NetParams<f64>;
pub type Batch = operator_net::Batch<f64>;
pub type AdamState = numkit::AdamState<f64>;
