//! Differentiable building blocks with explicit forward and backward passes.
//!
//! Every layer's `forward` returns its output together with a cache of the
//! intermediates its `backward` needs. `backward` consumes that cache and the
//! output gradient, accumulates parameter gradients into a [`Gradients`]
//! buffer and returns the input gradient.

pub mod attention;
pub mod checkpoint;
pub mod encoder_layer;
pub mod ffn;
pub mod layernorm;
pub mod linear;
pub mod optim;
pub mod params;
pub mod softmax;
pub mod tensor;

pub use attention::MultiHeadAttention;
pub use encoder_layer::EncoderLayer;
pub use ffn::FeedForward;
pub use layernorm::LayerNorm;
pub use linear::Linear;
pub use optim::{lr_factor, optim_step, OptimConfig, OptimState};
pub use params::{Gradients, ParamId, ParamStore};
pub use checkpoint::Container;
pub use tensor::Tensor2D;
