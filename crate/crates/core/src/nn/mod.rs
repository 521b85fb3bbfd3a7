//! Exact-gradient kernel for the segmentation network and the MLP regressor.
//!
//! Activations are `T × D` row-major matrices (time along rows). Every layer
//! exposes a forward pass and a hand-written backward pass; the gradient
//! tests compare them against central finite differences.

mod activation;
mod adam;
mod conv;
mod loss;
mod params;

pub use activation::{relu, relu_backward, softmax_rows};
pub use adam::{AdamConfig, AdamState};
pub use conv::Conv1d;
pub use loss::{
    cross_entropy_grad_logp, cross_entropy_loss, log_probs, logp_grad_to_logits,
    softmax_backward, tmse_grad_logp, tmse_loss, LossConfig, PROB_FLOOR,
};
pub use params::Parameters;

/// `rows × cols` activation matrix; rows are time steps.
pub type Tensor2 = ndarray::Array2<f64>;
