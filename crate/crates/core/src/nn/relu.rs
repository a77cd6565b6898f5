use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn relu_forward(input: &Tensor) -> Tensor {
    Tensor::from_fn(input.shape(), |i| input.data()[i].max(0.0))
}

/// Passes the gradient through where the forward input was strictly positive.
pub fn relu_backward(input: &Tensor, grad_output: &Tensor) -> Result<Tensor> {
    if input.shape() != grad_output.shape() {
        return Err(Error::shape("relu_backward", input.shape(), grad_output.shape()));
    }
    let x = input.data();
    let g = grad_output.data();
    Ok(Tensor::from_fn(input.shape(), |i| if x[i] > 0.0 { g[i] } else { 0.0 }))
}
