//! Dense neural-network kernels with explicit forward and backward passes.
//!
//! Everything here is a pure function over owned buffers: a layer's
//! `forward` returns the output plus a cache, and `backward` consumes the
//! cache, accumulates parameter gradients, and returns the input gradient.
//! All kernels are generic over the scalar type; the pipeline instantiates
//! them at `f64` (see [`crate::Real`]).

mod adam;
mod checkpoint;
mod gradcheck;
mod layers;
mod loss;
mod tensor;

pub use adam::{adam_step, AdamConfig};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use gradcheck::grad_check;
pub use layers::{
    attention, multi_head_attention, softmax_rows, AttnCache, Embedding, Ffn, FfnCache, Linear,
    LayerNorm, MhaBlock, MhaBlockCache, SelfAttention, SelfAttnCache, TransformerLayer,
    TransformerCache,
};
pub use loss::{bce_loss, cce_loss, sigmoid, sigmoid_bce_backward, softmax_cce_backward};
pub use tensor::{Param, Scalar, Tensor2};

/// Visitor over a model's trainable parameters, in a stable order.
pub trait HasParams<F: Scalar> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<F>));

    fn param_count(&mut self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |p| n += p.value.len());
        n
    }

    fn zero_grads(&mut self) {
        self.visit_params(&mut |p| p.grad.fill(F::zero()));
    }
}
