//! Minimal differentiable kernels for the autoencoder: 1D convolution and
//! transposed convolution, ReLU, MSE loss, reverse-mode gradients over a
//! define-by-run graph, and an adaptive-moment optimizer.
//!
//! Everything runs in `f64`. Gradients are verified against central finite
//! differences in the test suite; the forward kernels are the single source
//! of truth that both the per-window and the full-series scan paths share, so
//! the two produce bit-identical values.

mod adam;
mod graph;
mod ops;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use graph::{Graph, NodeId};
pub use ops::{
    conv1d_backward, conv1d_forward, conv1d_forward_columns, conv1d_forward_dilated,
    conv1d_output_len, conv_transpose1d_backward, conv_transpose1d_forward,
    conv_transpose1d_output_len, mse_grad, mse_loss, relu, relu_backward,
};
pub use tensor::Tensor3;
