//! Minimal deterministic differentiable kernel.
//!
//! Plain functions over 64-bit tensors, each paired with an exact backward
//! pass, plus a parameter store with Adamax state and a central-difference
//! verification harness. There is no computation graph: models call the
//! forward functions, cache what the chain rule needs, and run their own
//! backward code. Everything is single-seed deterministic.

mod gradcheck;
mod lstm;
mod ops;
mod store;
mod tensor;

pub use gradcheck::{central_diff, finite_diff_check};
pub use lstm::{lstm_step, lstm_step_backward, LstmGrads, LstmStep};
pub use ops::{
    bce_loss, dense, dense_backward, embedding_backward, embedding_lookup, entropy_regularizer,
    entropy_regularizer_grad, masked_mean_pool, masked_mean_pool_backward, sigmoid,
    sigmoid_attention_pool, sigmoid_attention_pool_backward, softmax_attention_pool,
    softmax_attention_pool_backward,
};
pub use store::{glorot_uniform, uniform_init, Param, ParamStore};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NnError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("id {id} out of range for table of {size} rows")]
    IndexOutOfRange { id: usize, size: usize },
    #[error("zero-length sequence in masked mean pool")]
    ZeroLength,
}
