//! 1-D transposed convolution over channel-major `[C, B, L]` activations.
//!
//! A 2-D `[C, L]` input is treated as a batch of one and the output keeps the
//! 2-D rank. The kernel is laid out `[C_in, C_out, K]`.

use crate::error::{Error, Result};
use crate::nn::LayerGrad;
use crate::tensor::{gemm, Tensor};

pub fn output_len(len: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    (len.checked_sub(1)? * stride + kernel).checked_sub(2 * padding)
}

struct Dims {
    c_in: usize,
    c_out: usize,
    k: usize,
    batch: usize,
    len: usize,
    out_len: usize,
}

fn dims(input: &Tensor, kernel: &Tensor, stride: usize, padding: usize) -> Result<Dims> {
    let (c_in, batch, len) = match *input.shape() {
        [c, l] => (c, 1, l),
        [c, b, l] => (c, b, l),
        _ => return Err(Error::shape("conv1d_transpose: input rank", input.shape(), &[0, 0, 0])),
    };
    let [kc_in, c_out, k] = *kernel.shape() else {
        return Err(Error::shape(
            "conv1d_transpose: kernel rank",
            kernel.shape(),
            &[0, 0, 0],
        ));
    };
    if kc_in != c_in {
        return Err(Error::shape(
            "conv1d_transpose: input channels vs kernel",
            input.shape(),
            kernel.shape(),
        ));
    }
    if k == 0 || stride == 0 || len == 0 {
        return Err(Error::Validation(format!(
            "conv1d_transpose needs K >= 1, stride >= 1, L >= 1 (got K={k}, stride={stride}, L={len})"
        )));
    }
    let out_len = output_len(len, k, stride, padding)
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Validation(format!("padding {padding} too large for L={len}, K={k}")))?;
    Ok(Dims {
        c_in,
        c_out,
        k,
        batch,
        len,
        out_len,
    })
}

fn out_shape(input: &Tensor, c: usize, b: usize, l: usize) -> Vec<usize> {
    if input.shape().len() == 2 {
        vec![c, l]
    } else {
        vec![c, b, l]
    }
}

pub fn conv1d_transpose_forward(
    input: &Tensor,
    kernel: &Tensor,
    bias: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let d = dims(input, kernel, stride, padding)?;
    if bias.len() != d.c_out {
        return Err(Error::shape("conv1d_transpose: bias", bias.shape(), &[d.c_out]));
    }
    let n = d.batch * d.len;
    let rows = d.c_out * d.k;
    let mut cols = vec![0.0; rows * n];
    // cols[(co, k), (b, i)] = sum_ci W[ci, (co, k)] * X[ci, (b, i)]
    gemm(
        rows,
        d.c_in,
        n,
        kernel.data(),
        true,
        input.data(),
        false,
        0.0,
        &mut cols,
    );

    let mut out = vec![0.0; d.c_out * d.batch * d.out_len];
    for co in 0..d.c_out {
        let b0 = bias.data()[co];
        let out_c = &mut out[co * d.batch * d.out_len..(co + 1) * d.batch * d.out_len];
        out_c.iter_mut().for_each(|x| *x = b0);
        for kk in 0..d.k {
            let row = &cols[(co * d.k + kk) * n..(co * d.k + kk + 1) * n];
            for b in 0..d.batch {
                let out_b = &mut out_c[b * d.out_len..(b + 1) * d.out_len];
                let row_b = &row[b * d.len..(b + 1) * d.len];
                for (i, &v) in row_b.iter().enumerate() {
                    let o = (i * stride + kk) as isize - padding as isize;
                    if o >= 0 && (o as usize) < d.out_len {
                        out_b[o as usize] += v;
                    }
                }
            }
        }
    }
    Tensor::new(&out_shape(input, d.c_out, d.batch, d.out_len), out)
}

/// Full backward pass: gradients for the input, the kernel and the bias.
pub fn conv1d_transpose_backward(
    input: &Tensor,
    kernel: &Tensor,
    stride: usize,
    padding: usize,
    grad_output: &Tensor,
) -> Result<LayerGrad> {
    let (gi, gp) = backward_impl(input, kernel, stride, padding, grad_output, true)?;
    let (gk, gb) = gp.expect("requested");
    Ok(LayerGrad {
        grad_input: gi,
        grad_params: vec![gk, gb],
    })
}

/// Backward pass for the input only (the Langevin path never needs kernel
/// gradients).
pub fn conv1d_transpose_backward_input(
    input: &Tensor,
    kernel: &Tensor,
    stride: usize,
    padding: usize,
    grad_output: &Tensor,
) -> Result<Tensor> {
    Ok(backward_impl(input, kernel, stride, padding, grad_output, false)?.0)
}

type ParamGrads = Option<(Tensor, Tensor)>;

pub(crate) fn backward_impl(
    input: &Tensor,
    kernel: &Tensor,
    stride: usize,
    padding: usize,
    grad_output: &Tensor,
    with_params: bool,
) -> Result<(Tensor, ParamGrads)> {
    let d = dims(input, kernel, stride, padding)?;
    let expected = out_shape(input, d.c_out, d.batch, d.out_len);
    if grad_output.shape() != expected.as_slice() {
        return Err(Error::shape(
            "conv1d_transpose_backward: grad_output",
            grad_output.shape(),
            &expected,
        ));
    }
    let n = d.batch * d.len;
    let rows = d.c_out * d.k;
    let g = grad_output.data();

    // gcols[(co, k), (b, i)] = G[co, b, i*stride - padding + k]
    let mut gcols = vec![0.0; rows * n];
    for co in 0..d.c_out {
        for kk in 0..d.k {
            let row = &mut gcols[(co * d.k + kk) * n..(co * d.k + kk + 1) * n];
            for b in 0..d.batch {
                let g_b = &g[(co * d.batch + b) * d.out_len..(co * d.batch + b + 1) * d.out_len];
                for i in 0..d.len {
                    let o = (i * stride + kk) as isize - padding as isize;
                    if o >= 0 && (o as usize) < d.out_len {
                        row[b * d.len + i] = g_b[o as usize];
                    }
                }
            }
        }
    }

    let mut grad_in = vec![0.0; d.c_in * n];
    gemm(d.c_in, rows, n, kernel.data(), false, &gcols, false, 0.0, &mut grad_in);
    let grad_in = Tensor::new(input.shape(), grad_in)?;

    if !with_params {
        return Ok((grad_in, None));
    }
    let mut grad_k = vec![0.0; d.c_in * rows];
    gemm(d.c_in, n, rows, input.data(), false, &gcols, true, 0.0, &mut grad_k);
    let grad_b: Vec<f64> = (0..d.c_out)
        .map(|co| g[co * d.batch * d.out_len..(co + 1) * d.batch * d.out_len].iter().sum())
        .collect();
    Ok((
        grad_in,
        Some((Tensor::new(kernel.shape(), grad_k)?, Tensor::new(&[d.c_out], grad_b)?)),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testutil::{central_diff, max_rel_err, rand_tensor};

    /// Strided 1-D convolution written directly from its definition; the
    /// transposed convolution must be its adjoint.
    fn conv1d_direct(y: &Tensor, kernel: &Tensor, stride: usize, padding: usize, len: usize) -> Tensor {
        let [c_in, c_out, k] = *kernel.shape() else {
            unreachable!()
        };
        let [_, batch, out_len] = *y.shape() else {
            unreachable!()
        };
        let mut x = Tensor::zeros(&[c_in, batch, len]);
        for ci in 0..c_in {
            for b in 0..batch {
                for i in 0..len {
                    let mut acc = 0.0;
                    for co in 0..c_out {
                        for kk in 0..k {
                            let o = (i * stride + kk) as isize - padding as isize;
                            if o >= 0 && (o as usize) < out_len {
                                acc += kernel.data()[(ci * c_out + co) * k + kk]
                                    * y.data()[(co * batch + b) * out_len + o as usize];
                            }
                        }
                    }
                    x.data_mut()[(ci * batch + b) * len + i] = acc;
                }
            }
        }
        x
    }

    #[test]
    fn output_length_formula() {
        let x = Tensor::zeros(&[1, 4]);
        let w = Tensor::zeros(&[1, 1, 4]);
        let b = Tensor::zeros(&[1]);
        let y = conv1d_transpose_forward(&x, &w, &b, 2, 1).unwrap();
        assert_eq!(y.shape(), &[1, 8]);
        assert_eq!(output_len(4, 4, 2, 1), Some(8));
        assert_eq!(output_len(1, 4, 1, 0), Some(4));
    }

    #[test]
    fn zero_input_gives_bias() {
        let x = Tensor::zeros(&[3, 2, 5]);
        let w = rand_tensor(&[3, 2, 4], 1);
        let b = Tensor::new(&[2], vec![0.7, -1.25]).unwrap();
        let y = conv1d_transpose_forward(&x, &w, &b, 2, 1).unwrap();
        for (i, v) in y.data().iter().enumerate() {
            let co = i / (2 * 10);
            assert_eq!(*v, b.data()[co]);
        }
    }

    #[test]
    fn identity_kernel() {
        let x = rand_tensor(&[1, 7], 2);
        let w = Tensor::full(&[1, 1, 1], 1.0);
        let b = Tensor::zeros(&[1]);
        let y = conv1d_transpose_forward(&x, &w, &b, 1, 0).unwrap();
        assert_eq!(y, x);
        let g = rand_tensor(&[1, 7], 3);
        let lg = conv1d_transpose_backward(&x, &w, 1, 0, &g).unwrap();
        assert_eq!(lg.grad_input, g);
    }

    #[test]
    fn channel_mismatch_is_reported() {
        let x = Tensor::zeros(&[2, 4]);
        let w = Tensor::zeros(&[3, 1, 4]);
        let b = Tensor::zeros(&[1]);
        let err = conv1d_transpose_forward(&x, &w, &b, 2, 1).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 4]") && msg.contains("[3, 1, 4]"), "{msg}");
    }

    #[test]
    fn adjoint_of_strided_conv() {
        for &(stride, padding, k, len) in &[(2, 1, 4, 4), (1, 0, 4, 1), (3, 2, 5, 6), (1, 1, 3, 9)] {
            let w = rand_tensor(&[3, 2, k], 10 + stride as u64);
            let x = rand_tensor(&[3, 2, len], 20);
            let zero = Tensor::zeros(&[2]);
            let y_fwd = conv1d_transpose_forward(&x, &w, &zero, stride, padding).unwrap();
            let y = rand_tensor(y_fwd.shape(), 30);
            let lhs = y_fwd.dot(&y);
            let rhs = x.dot(&conv1d_direct(&y, &w, stride, padding, len));
            assert!((lhs - rhs).abs() < 1e-10, "stride {stride}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn zero_grad_output_gives_zero_grads() {
        let x = rand_tensor(&[2, 3], 4);
        let w = rand_tensor(&[2, 2, 4], 5);
        let g = Tensor::zeros(&[2, 6]);
        let lg = conv1d_transpose_backward(&x, &w, 2, 1, &g).unwrap();
        assert!(lg.grad_input.data().iter().all(|&v| v == 0.0));
        assert!(lg.grad_params.iter().all(|t| t.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn backward_matches_finite_differences() {
        // C=2, L=3, K=4
        let x = rand_tensor(&[2, 3], 6);
        let w = rand_tensor(&[2, 2, 4], 7);
        let b = rand_tensor(&[2], 8);
        let probe = rand_tensor(&[2, 6], 9);
        let loss = |x: &Tensor, w: &Tensor, b: &Tensor| conv1d_transpose_forward(x, w, b, 2, 1).unwrap().dot(&probe);
        let lg = conv1d_transpose_backward(&x, &w, 2, 1, &probe).unwrap();

        let num_x = central_diff(&x, |t| loss(t, &w, &b));
        let num_w = central_diff(&w, |t| loss(&x, t, &b));
        let num_b = central_diff(&b, |t| loss(&x, &w, t));
        assert!(max_rel_err(&lg.grad_input, &num_x) < 1e-5);
        assert!(max_rel_err(&lg.grad_params[0], &num_w) < 1e-5);
        assert!(max_rel_err(&lg.grad_params[1], &num_b) < 1e-5);
    }

    #[test]
    fn batched_equals_per_sample() {
        let x = rand_tensor(&[3, 4, 5], 11);
        let w = rand_tensor(&[3, 2, 4], 12);
        let b = rand_tensor(&[2], 13);
        let y = conv1d_transpose_forward(&x, &w, &b, 2, 1).unwrap();
        for s in 0..4 {
            let xs = Tensor::from_fn(&[3, 5], |i| x.data()[(i / 5 * 4 + s) * 5 + i % 5]);
            let ys = conv1d_transpose_forward(&xs, &w, &b, 2, 1).unwrap();
            for co in 0..2 {
                for o in 0..10 {
                    let a = y.data()[(co * 4 + s) * 10 + o];
                    assert!((a - ys.at2(co, o)).abs() < 1e-13);
                }
            }
        }
    }
}
