//! Two-encoder gated operator network.
//!
//! Both towers see the same encoder outputs: `U = tanh(u·W_u + b_u)` from
//! the branch input and `V = tanh(y·W_y + b_y)` from the trunk input. Each
//! tower computes `H(1) = tanh(x·W_in + b_in)`, then for every gate layer
//! `Z = tanh(H·W_g + b_g)` and `H ← (1 − Z) ⊙ U + Z ⊙ V`, then an activated
//! output layer. The prediction is the inner product of the two tower
//! outputs, with no bias.

mod checkpoint;
mod gradcheck;
mod model;
mod params;

pub use checkpoint::{load_checkpoint, load_checkpoint_expecting, save_checkpoint, Checkpoint, FORMAT_VERSION, MAGIC};
pub(crate) use checkpoint::{put_f64, put_u32, put_u64, Reader};
pub use gradcheck::{compare_gradients, grad_check, relative_error, GradCheckReport, ABS_FALLBACK};
pub use model::{forward, forward_batch, gate_mix, loss, loss_and_grads, Batch};
pub use params::{Dense, NetConfig, NetParams, Tower};
