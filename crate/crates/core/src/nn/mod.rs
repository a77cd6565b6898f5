//! Numeric core: transposed convolution, batch normalization, ReLU and Adam,
//! each with a hand-written backward pass.

pub mod adam;
pub mod batchnorm;
pub mod conv;
pub mod relu;

pub use adam::{adam_step, AdamState};
pub use batchnorm::{batchnorm_backward, batchnorm_forward, update_running_stats, BatchStats};
pub use conv::{conv1d_transpose_backward, conv1d_transpose_forward};
pub use relu::{relu_backward, relu_forward};

use crate::tensor::Tensor;

/// Whether batch normalization uses batch or running statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
pub struct LayerGrad {
    pub grad_input: Tensor,
    /// One entry per learnable parameter, in the layer's parameter order.
    pub grad_params: Vec<Tensor>,
}
