//! A compact f64 neural-network engine: matrices, dense/attention layers with
//! hand-written backward passes, Adam, and finite-difference gradient checks.
//! Kernels are bit-deterministic regardless of thread count.

pub mod adam;
pub mod attention;
pub mod gradcheck;
pub mod layers;
pub mod mat;
pub mod param;

pub use adam::Adam;
pub use attention::{MultiHeadAttention, TransformerBlock};
pub use gradcheck::{check_grads, grad_rel_err, GradReport};
pub use layers::{LayerNorm, Linear, Mlp};
pub use mat::{set_thread_limit, thread_limit, Mat};
pub use param::ParamStruct;
