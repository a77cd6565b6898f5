//! Batch normalization over channel-major `[C, B, L]` activations.
//!
//! Statistics are taken per channel over the `(B, L)` axes. The forward pass
//! is pure; running statistics are updated by an explicit call to
//! [`update_running_stats`] so that only the learning step touches them.

use crate::error::{Error, Result};
use crate::nn::{LayerGrad, Mode};
use crate::tensor::Tensor;

pub const DEFAULT_MOMENTUM: f64 = 0.1;
pub const DEFAULT_EPS: f64 = 1e-5;

/// Values saved by the forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct BatchStats {
    pub mode: Mode,
    /// Mean used for normalization (batch mean in train mode).
    pub mean: Vec<f64>,
    /// Biased batch variance (train mode) or running variance (eval mode).
    pub var: Vec<f64>,
    pub inv_std: Vec<f64>,
    pub normalized: Tensor,
}

fn channels(input: &Tensor) -> Result<(usize, usize)> {
    match *input.shape() {
        [c, b, l] => Ok((c, b * l)),
        [c, l] => Ok((c, l)),
        _ => Err(Error::shape("batchnorm: input rank", input.shape(), &[0, 0, 0])),
    }
}

#[allow(clippy::too_many_arguments)]
pub fn batchnorm_forward(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    running_mean: &Tensor,
    running_var: &Tensor,
    mode: Mode,
    eps: f64,
) -> Result<(Tensor, BatchStats)> {
    let (c, n) = channels(input)?;
    for t in [gamma, beta, running_mean, running_var] {
        if t.len() != c {
            return Err(Error::shape("batchnorm: per-channel parameter", t.shape(), &[c]));
        }
    }
    let x = input.data();
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    match mode {
        Mode::Train => {
            for ch in 0..c {
                let xs = &x[ch * n..(ch + 1) * n];
                let mu = xs.iter().sum::<f64>() / n as f64;
                mean[ch] = mu;
                var[ch] = xs.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
            }
        }
        Mode::Eval => {
            mean.copy_from_slice(running_mean.data());
            var.copy_from_slice(running_var.data());
        }
    }
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let mut normalized = vec![0.0; c * n];
    let mut out = vec![0.0; c * n];
    for ch in 0..c {
        let (mu, inv, g, b) = (mean[ch], inv_std[ch], gamma.data()[ch], beta.data()[ch]);
        for i in ch * n..(ch + 1) * n {
            let xh = (x[i] - mu) * inv;
            normalized[i] = xh;
            out[i] = g * xh + b;
        }
    }
    Ok((
        Tensor::new(input.shape(), out)?,
        BatchStats {
            mode,
            mean,
            var,
            inv_std,
            normalized: Tensor::new(input.shape(), normalized)?,
        },
    ))
}

/// Exponential moving average of the batch statistics. The running variance
/// tracks the unbiased batch variance.
pub fn update_running_stats(running_mean: &mut Tensor, running_var: &mut Tensor, stats: &BatchStats, momentum: f64) {
    debug_assert_eq!(stats.mode, Mode::Train);
    let n = stats.normalized.len() / stats.mean.len().max(1);
    let unbias = if n > 1 { n as f64 / (n - 1) as f64 } else { 1.0 };
    for (rm, &m) in running_mean.data_mut().iter_mut().zip(&stats.mean) {
        *rm = (1.0 - momentum) * *rm + momentum * m;
    }
    for (rv, &v) in running_var.data_mut().iter_mut().zip(&stats.var) {
        *rv = (1.0 - momentum) * *rv + momentum * v * unbias;
    }
}

fn backward_impl(
    stats: &BatchStats,
    gamma: &Tensor,
    grad_output: &Tensor,
    with_params: bool,
) -> Result<(Tensor, Option<(Tensor, Tensor)>)> {
    if grad_output.shape() != stats.normalized.shape() {
        return Err(Error::shape(
            "batchnorm_backward",
            grad_output.shape(),
            stats.normalized.shape(),
        ));
    }
    let (c, n) = channels(grad_output)?;
    let dy = grad_output.data();
    let xh = stats.normalized.data();
    let mut dx = vec![0.0; c * n];
    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    for ch in 0..c {
        let r = ch * n..(ch + 1) * n;
        let sum_dy: f64 = dy[r.clone()].iter().sum();
        let sum_dy_xh: f64 = dy[r.clone()].iter().zip(&xh[r.clone()]).map(|(a, b)| a * b).sum();
        dgamma[ch] = sum_dy_xh;
        dbeta[ch] = sum_dy;
        let scale = gamma.data()[ch] * stats.inv_std[ch];
        match stats.mode {
            Mode::Train => {
                let nf = n as f64;
                for i in r {
                    dx[i] = scale / nf * (nf * dy[i] - sum_dy - xh[i] * sum_dy_xh);
                }
            }
            Mode::Eval => {
                for i in r {
                    dx[i] = scale * dy[i];
                }
            }
        }
    }
    let dx = Tensor::new(grad_output.shape(), dx)?;
    let params = with_params.then(|| (Tensor::new(&[c], dgamma).unwrap(), Tensor::new(&[c], dbeta).unwrap()));
    Ok((dx, params))
}

/// Gradients w.r.t. the input, `gamma` and `beta`.
pub fn batchnorm_backward(stats: &BatchStats, gamma: &Tensor, grad_output: &Tensor) -> Result<LayerGrad> {
    let (dx, p) = backward_impl(stats, gamma, grad_output, true)?;
    let (dg, db) = p.expect("requested");
    Ok(LayerGrad {
        grad_input: dx,
        grad_params: vec![dg, db],
    })
}

pub fn batchnorm_backward_input(stats: &BatchStats, gamma: &Tensor, grad_output: &Tensor) -> Result<Tensor> {
    Ok(backward_impl(stats, gamma, grad_output, false)?.0)
}
