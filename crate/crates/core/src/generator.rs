//! Top-down transposed-convolution generator.
//!
//! Each sub-window's state vector enters as a `state_dim x 1` signal. A
//! projection layer (kernel 4, stride 1) lifts it to length 4, then `K`
//! layers (kernel 4, stride 2, padding 1) double the length while halving the
//! filter count. Batch norm and ReLU sit between layers; the last layer emits
//! `n_features` channels with no activation.
//!
//! Activations are channel-major `[C, B, L]`, where `B` runs over every
//! sub-window in the batch (window-major: `b = window * a_L + j`).

use std::io::{Read, Write};

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::hierarchy::LatentState;
use crate::io_util::{read_f64s, read_u32, read_u64, write_f64s};
use crate::nn::batchnorm::{self, BatchStats, DEFAULT_EPS};
use crate::nn::{conv, relu_backward, relu_forward, Mode};
use crate::rng::seeded;
use crate::tensor::Tensor;

pub const BASE_LEN: usize = 4;
pub const KERNEL: usize = 4;
pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeneratorArch {
    pub n_features: usize,
    pub sub_window_len: usize,
    pub filter_multiplier: usize,
    pub max_filters: usize,
    pub state_dim: usize,
}

impl GeneratorArch {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Validation(format!("generator: {m}")));
        if self.n_features == 0 {
            return bad("n_features must be >= 1");
        }
        if self.state_dim == 0 {
            return bad("state_dim must be >= 1");
        }
        if self.filter_multiplier == 0 || self.max_filters == 0 {
            return bad("filter_multiplier and max_filters must be >= 1");
        }
        let ratio = self.sub_window_len / BASE_LEN;
        if self.sub_window_len < 2 * BASE_LEN || self.sub_window_len % BASE_LEN != 0 || !ratio.is_power_of_two() {
            return bad("sub_window_len must be 4 * 2^K with K >= 1 (a power of two >= 8)");
        }
        Ok(())
    }

    /// Number of upsampling (stride-2) layers.
    pub fn n_upsample(&self) -> usize {
        (self.sub_window_len / BASE_LEN).trailing_zeros() as usize
    }

    /// Output channels of every layer, projection first, `n_features` last.
    pub fn channel_path(&self) -> Vec<usize> {
        let k = self.n_upsample();
        let mut path: Vec<usize> = (0..k)
            .map(|l| (self.filter_multiplier << (k - 1 - l)).min(self.max_filters))
            .collect();
        path.push(self.n_features);
        path
    }

    /// Temporal length after every layer, starting from the length-1 input.
    pub fn temporal_path(&self) -> Vec<usize> {
        let mut path = vec![1, BASE_LEN];
        for _ in 0..self.n_upsample() {
            path.push(path.last().unwrap() * 2);
        }
        path
    }

    fn stride_padding(layer: usize) -> (usize, usize) {
        if layer == 0 {
            (1, 0)
        } else {
            (2, 1)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub kernel: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormParams {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams {
    pub arch: GeneratorArch,
    /// `K + 1` transposed convolutions.
    pub convs: Vec<ConvParams>,
    /// One batch norm after each convolution except the last.
    pub norms: Vec<NormParams>,
}

pub fn build_generator(arch: GeneratorArch, seed: u64) -> Result<GeneratorParams> {
    build_generator_with_std(arch, seed, INIT_STD)
}

/// Kernels drawn from `N(0, init_std^2)`; `init_std = 0` gives an all-zero
/// network.
pub fn build_generator_with_std(arch: GeneratorArch, seed: u64, init_std: f64) -> Result<GeneratorParams> {
    arch.validate()?;
    let mut rng = seeded(seed);
    let normal = Normal::new(0.0, init_std).map_err(|e| Error::Validation(e.to_string()))?;
    let mut convs = Vec::new();
    let mut norms = Vec::new();
    let mut c_in = arch.state_dim;
    let path = arch.channel_path();
    for (l, &c_out) in path.iter().enumerate() {
        let kernel = Tensor::from_fn(&[c_in, c_out, KERNEL], |_| normal.sample(&mut rng));
        convs.push(ConvParams {
            kernel,
            bias: Tensor::zeros(&[c_out]),
        });
        if l + 1 < path.len() {
            norms.push(NormParams {
                gamma: Tensor::full(&[c_out], 1.0),
                beta: Tensor::zeros(&[c_out]),
                running_mean: Tensor::zeros(&[c_out]),
                running_var: Tensor::full(&[c_out], 1.0),
            });
        }
        c_in = c_out;
    }
    Ok(GeneratorParams { arch, convs, norms })
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    conv_inputs: Vec<Tensor>,
    norm_stats: Vec<BatchStats>,
    norm_outputs: Vec<Tensor>,
    pub n_windows: usize,
    pub n_sub: usize,
}

impl GeneratorParams {
    pub fn n_layers(&self) -> usize {
        self.convs.len()
    }

    /// Learnable tensors in optimizer order, with names.
    pub fn learnable_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        let mut norms = self.norms.iter_mut();
        for (i, c) in self.convs.iter_mut().enumerate() {
            out.push((format!("conv{i}.kernel"), &mut c.kernel));
            out.push((format!("conv{i}.bias"), &mut c.bias));
            if let Some(n) = norms.next() {
                out.push((format!("norm{i}.gamma"), &mut n.gamma));
                out.push((format!("norm{i}.beta"), &mut n.beta));
            }
        }
        out
    }

    pub fn learnable(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for (i, c) in self.convs.iter().enumerate() {
            out.push(&c.kernel);
            out.push(&c.bias);
            if let Some(n) = self.norms.get(i) {
                out.push(&n.gamma);
                out.push(&n.beta);
            }
        }
        out
    }

    /// Runs the stack on `[state_dim, B, 1]` inputs.
    pub fn forward(&self, states: &Tensor, mode: Mode) -> Result<(Tensor, ForwardCache)> {
        let [sd, b, 1] = *states.shape() else {
            return Err(Error::shape(
                "generator input",
                states.shape(),
                &[self.arch.state_dim, 0, 1],
            ));
        };
        if sd != self.arch.state_dim {
            return Err(Error::shape(
                "generator input",
                states.shape(),
                &[self.arch.state_dim, b, 1],
            ));
        }
        let mut cache = ForwardCache {
            conv_inputs: Vec::with_capacity(self.n_layers()),
            norm_stats: Vec::with_capacity(self.norms.len()),
            norm_outputs: Vec::with_capacity(self.norms.len()),
            n_windows: 0,
            n_sub: b,
        };
        let mut h = states.clone();
        for (l, c) in self.convs.iter().enumerate() {
            let (stride, pad) = GeneratorArch::stride_padding(l);
            let y = conv::conv1d_transpose_forward(&h, &c.kernel, &c.bias, stride, pad)?;
            cache.conv_inputs.push(h);
            h = match self.norms.get(l) {
                Some(n) => {
                    let (y, st) = batchnorm::batchnorm_forward(
                        &y,
                        &n.gamma,
                        &n.beta,
                        &n.running_mean,
                        &n.running_var,
                        mode,
                        DEFAULT_EPS,
                    )?;
                    let act = relu_forward(&y);
                    cache.norm_stats.push(st);
                    cache.norm_outputs.push(y);
                    act
                }
                None => y,
            };
        }
        Ok((h, cache))
    }

    /// Back-propagates `grad_output` (`[n_features, B, sub_window_len]`).
    /// Returns the gradient w.r.t. the `[state_dim, B, 1]` input and, when
    /// requested, the parameter gradients in [`Self::learnable`] order.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_output: &Tensor,
        with_params: bool,
    ) -> Result<(Tensor, Option<Vec<Tensor>>)> {
        let n = self.n_layers();
        let mut conv_grads: Vec<Option<(Tensor, Tensor)>> = vec![None; n];
        let mut norm_grads: Vec<Option<(Tensor, Tensor)>> = vec![None; self.norms.len()];
        let mut g = grad_output.clone();
        for l in (0..n).rev() {
            if let Some(norm) = self.norms.get(l) {
                let g_relu = relu_backward(&cache.norm_outputs[l], &g)?;
                if with_params {
                    let lg = batchnorm::batchnorm_backward(&cache.norm_stats[l], &norm.gamma, &g_relu)?;
                    let mut it = lg.grad_params.into_iter();
                    norm_grads[l] = Some((it.next().unwrap(), it.next().unwrap()));
                    g = lg.grad_input;
                } else {
                    g = batchnorm::batchnorm_backward_input(&cache.norm_stats[l], &norm.gamma, &g_relu)?;
                }
            }
            let (stride, pad) = GeneratorArch::stride_padding(l);
            let (gi, gp) = conv::backward_impl(
                &cache.conv_inputs[l],
                &self.convs[l].kernel,
                stride,
                pad,
                &g,
                with_params,
            )?;
            conv_grads[l] = gp;
            g = gi;
        }
        let params = with_params.then(|| {
            let mut out = Vec::new();
            for (l, cg) in conv_grads.into_iter().enumerate() {
                let (k, b) = cg.expect("computed");
                out.push(k);
                out.push(b);
                if let Some(ng) = norm_grads.get_mut(l) {
                    let (ga, be) = ng.take().expect("computed");
                    out.push(ga);
                    out.push(be);
                }
            }
            out
        });
        Ok((g, params))
    }

    /// Folds the batch statistics of a train-mode pass into the running
    /// statistics.
    pub fn update_running_stats(&mut self, cache: &ForwardCache, momentum: f64) {
        for (n, st) in self.norms.iter_mut().zip(&cache.norm_stats) {
            if st.mode == Mode::Train {
                batchnorm::update_running_stats(&mut n.running_mean, &mut n.running_var, st, momentum);
            }
        }
    }
}

/// Generator output for one state vector, `[n_features, sub_window_len]`.
pub fn generate_sub_window(state: &[f64], params: &GeneratorParams, mode: Mode) -> Result<Tensor> {
    if state.len() != params.arch.state_dim {
        return Err(Error::shape(
            "generate_sub_window",
            &[state.len()],
            &[params.arch.state_dim],
        ));
    }
    let x = Tensor::new(&[state.len(), 1, 1], state.to_vec())?;
    let (y, _) = params.forward(&x, mode)?;
    let (m, l) = (params.arch.n_features, params.arch.sub_window_len);
    y.reshape(&[m, l])
}

/// Stacks every sub-window state vector of every window into `[state_dim, B, 1]`.
pub fn assemble_states(zs: &[LatentState]) -> Result<Tensor> {
    let Some(first) = zs.first() else {
        return Err(Error::Validation("no latent states".into()));
    };
    let a_top = first.layout().n_sub_windows();
    let sd = first.layout().state_dim();
    let b = zs.len() * a_top;
    let mut data = vec![0.0; sd * b];
    let mut s = Vec::with_capacity(sd);
    for (w, z) in zs.iter().enumerate() {
        if z.layout() != first.layout() {
            return Err(Error::Validation("latent states in a batch must share a layout".into()));
        }
        for j in 0..a_top {
            s.clear();
            z.write_state_vector(j, &mut s)?;
            let col = w * a_top + j;
            for (c, v) in s.iter().enumerate() {
                data[c * b + col] = *v;
            }
        }
    }
    Tensor::new(&[sd, b, 1], data)
}

/// Splits `[m, B, L]` generator output into per-window `[m, a_L * L]` blocks.
pub fn split_windows(out: &Tensor, n_windows: usize) -> Vec<Tensor> {
    let [m, b, l] = *out.shape() else {
        panic!("rank-3 generator output")
    };
    let a_top = b / n_windows;
    let sw = a_top * l;
    (0..n_windows)
        .map(|w| {
            let mut data = vec![0.0; m * sw];
            for c in 0..m {
                let src = &out.data()[(c * b + w * a_top) * l..(c * b + (w + 1) * a_top) * l];
                data[c * sw..(c + 1) * sw].copy_from_slice(src);
            }
            Tensor::new(&[m, sw], data).expect("sized")
        })
        .collect()
}

/// Inverse of [`split_windows`].
pub fn merge_windows(windows: &[Tensor], a_top: usize) -> Result<Tensor> {
    let [m, sw] = *windows[0].shape() else {
        return Err(Error::shape("merge_windows", windows[0].shape(), &[0, 0]));
    };
    let l = sw / a_top;
    let b = windows.len() * a_top;
    let mut data = vec![0.0; m * b * l];
    for (w, t) in windows.iter().enumerate() {
        if t.shape() != [m, sw] {
            return Err(Error::shape("merge_windows", t.shape(), &[m, sw]));
        }
        for c in 0..m {
            data[(c * b + w * a_top) * l..(c * b + (w + 1) * a_top) * l]
                .copy_from_slice(&t.data()[c * sw..(c + 1) * sw]);
        }
    }
    Tensor::new(&[m, b, l], data)
}

/// Scatters a `[state_dim, B, 1]` input gradient back onto the (tied)
/// latent vectors of each window.
pub fn scatter_state_grads(grad_states: &Tensor, zs: &[LatentState]) -> Vec<LatentState> {
    let b = grad_states.shape()[1];
    let sd = grad_states.shape()[0];
    let a_top = b / zs.len();
    let mut col = vec![0.0; sd];
    zs.iter()
        .enumerate()
        .map(|(w, z)| {
            let mut g = LatentState::zeros(z.layout());
            for j in 0..a_top {
                for (c, v) in col.iter_mut().enumerate() {
                    *v = grad_states.data()[c * b + w * a_top + j];
                }
                g.accumulate_state_grad(j, &col);
            }
            g
        })
        .collect()
}

/// Generates a batch of windows in one pass; train-mode batch norm pools
/// statistics over every sub-window of every window.
pub fn generate_windows(
    zs: &[LatentState],
    params: &GeneratorParams,
    mode: Mode,
) -> Result<(Vec<Tensor>, ForwardCache)> {
    let x = assemble_states(zs)?;
    let (y, mut cache) = params.forward(&x, mode)?;
    cache.n_windows = zs.len();
    Ok((split_windows(&y, zs.len()), cache))
}

/// `[n_features, a_L * sub_window_len]`
pub fn generate_window(z: &LatentState, params: &GeneratorParams, mode: Mode) -> Result<Tensor> {
    check_layout(z, params)?;
    Ok(generate_windows(std::slice::from_ref(z), params, mode)?.0.remove(0))
}

fn check_layout(z: &LatentState, params: &GeneratorParams) -> Result<()> {
    if z.layout().state_dim() != params.arch.state_dim {
        return Err(Error::shape(
            "latent state vs generator",
            &[z.layout().state_dim()],
            &[params.arch.state_dim],
        ));
    }
    Ok(())
}

/// Gradients of `<grad_outputs, f(Z)>` w.r.t. each window's latents and
/// (optionally) the parameters, summed over sub-windows and windows.
pub fn backward_windows(
    zs: &[LatentState],
    params: &GeneratorParams,
    cache: &ForwardCache,
    grad_outputs: &[Tensor],
    with_params: bool,
) -> Result<(Vec<LatentState>, Option<Vec<Tensor>>)> {
    let a_top = zs[0].layout().n_sub_windows();
    let g = merge_windows(grad_outputs, a_top)?;
    let (gs, gp) = params.backward(cache, &g, with_params)?;
    Ok((scatter_state_grads(&gs, zs), gp))
}

/// Single-window convenience wrapper around [`generate_windows`] and
/// [`backward_windows`].
pub fn generator_backward(
    z: &LatentState,
    params: &GeneratorParams,
    grad_output: &Tensor,
    mode: Mode,
) -> Result<(LatentState, Vec<Tensor>)> {
    check_layout(z, params)?;
    let zs = std::slice::from_ref(z);
    let (outs, cache) = generate_windows(zs, params, mode)?;
    if grad_output.shape() != outs[0].shape() {
        return Err(Error::shape(
            "generator_backward: grad_output",
            grad_output.shape(),
            outs[0].shape(),
        ));
    }
    let (mut gz, gp) = backward_windows(zs, params, &cache, std::slice::from_ref(grad_output), true)?;
    Ok((gz.remove(0), gp.expect("requested")))
}

const PARAM_MAGIC: &[u8; 4] = b"HLGN";
const PARAM_VERSION: u32 = 1;

/// Versioned binary checkpoint: architecture header, then every learnable
/// tensor in optimizer order, then the running statistics.
pub fn write_params(w: &mut impl Write, params: &GeneratorParams) -> Result<()> {
    w.write_all(PARAM_MAGIC)?;
    w.write_all(&PARAM_VERSION.to_le_bytes())?;
    let a = &params.arch;
    for v in [
        a.n_features,
        a.sub_window_len,
        a.filter_multiplier,
        a.max_filters,
        a.state_dim,
    ] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    for t in params.learnable() {
        write_f64s(w, t.data())?;
    }
    for n in &params.norms {
        write_f64s(w, n.running_mean.data())?;
        write_f64s(w, n.running_var.data())?;
    }
    Ok(())
}

pub fn read_params(r: &mut impl Read) -> Result<GeneratorParams> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != PARAM_MAGIC {
        return Err(Error::Format("not a generator checkpoint".into()));
    }
    let version = read_u32(r)?;
    if version != PARAM_VERSION {
        return Err(Error::Format(format!(
            "unsupported generator checkpoint version {version}"
        )));
    }
    let mut h = [0usize; 5];
    for v in &mut h {
        *v = read_u64(r)? as usize;
    }
    let arch = GeneratorArch {
        n_features: h[0],
        sub_window_len: h[1],
        filter_multiplier: h[2],
        max_filters: h[3],
        state_dim: h[4],
    };
    let mut params = build_generator_with_std(arch, 0, 0.0).map_err(|e| Error::Format(e.to_string()))?;
    for (_, t) in params.learnable_mut() {
        let data = read_f64s(r, t.len())?;
        t.data_mut().copy_from_slice(&data);
    }
    for n in &mut params.norms {
        let rm = read_f64s(r, n.running_mean.len())?;
        n.running_mean.data_mut().copy_from_slice(&rm);
        let rv = read_f64s(r, n.running_var.len())?;
        n.running_var.data_mut().copy_from_slice(&rv);
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::HierarchySpec;
    use crate::nn::testutil::{central_diff, max_rel_err};

    fn arch(m: usize, len: usize, mult: usize, max: usize, sd: usize) -> GeneratorArch {
        GeneratorArch {
            n_features: m,
            sub_window_len: len,
            filter_multiplier: mult,
            max_filters: max,
            state_dim: sd,
        }
    }

    #[test]
    fn default_architecture_paths() {
        let a = arch(38, 64, 32, 256, 25);
        assert_eq!(a.channel_path(), vec![256, 128, 64, 32, 38]);
        assert_eq!(a.temporal_path(), vec![1, 4, 8, 16, 32, 64]);
        let p = build_generator(a, 0).unwrap();
        assert_eq!(p.convs.len(), 5);
        assert_eq!(p.norms.len(), 4);
        assert_eq!(p.convs[0].kernel.shape(), &[25, 256, 4]);
        assert_eq!(p.convs[4].kernel.shape(), &[32, 38, 4]);
    }

    #[test]
    fn smallest_stack() {
        let a = arch(1, 8, 1, 256, 3);
        assert_eq!(a.channel_path(), vec![1, 1]);
        assert_eq!(a.temporal_path(), vec![1, 4, 8]);
        let p = build_generator(a, 0).unwrap();
        assert_eq!(p.convs.len(), 2);
        let y = generate_sub_window(&[0.1, 0.2, 0.3], &p, Mode::Eval).unwrap();
        assert_eq!(y.shape(), &[1, 8]);
    }

    #[test]
    fn invalid_arch() {
        assert!(build_generator(arch(1, 12, 1, 8, 3), 0).is_err());
        assert!(build_generator(arch(1, 4, 1, 8, 3), 0).is_err());
        assert!(build_generator(arch(0, 8, 1, 8, 3), 0).is_err());
    }

    #[test]
    fn build_is_deterministic() {
        let a = arch(3, 16, 4, 8, 5);
        assert_eq!(build_generator(a, 9).unwrap(), build_generator(a, 9).unwrap());
        assert_ne!(build_generator(a, 9).unwrap(), build_generator(a, 10).unwrap());
    }

    #[test]
    fn zero_network_gives_zero_block() {
        let p = build_generator_with_std(arch(2, 16, 4, 8, 3), 0, 0.0).unwrap();
        let y = generate_sub_window(&[0.0; 3], &p, Mode::Eval).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
        assert!(generate_sub_window(&[0.0; 4], &p, Mode::Eval).is_err());
    }

    #[test]
    fn single_layer_matches_dense_matrix() {
        // Freeze everything except the last layer into a known feature map:
        // with a state of length 1 and K=1 the last layer is an explicit
        // linear map of the post-ReLU features. Check it against a dense
        // matrix built from the kernel.
        let a = arch(2, 8, 3, 8, 4);
        let p = build_generator(a, 5).unwrap();
        let s = [0.3, -0.2, 0.5, 0.1];
        let x = Tensor::new(&[4, 1, 1], s.to_vec()).unwrap();
        let (y, cache) = p.forward(&x, Mode::Eval).unwrap();
        let h = relu_forward(&cache.norm_outputs[0]); // [3, 1, 4]
        let last = &p.convs[1];
        // dense matrix M[(co, o), (ci, i)]
        let mut dense = vec![0.0; 2 * 8 * 3 * 4];
        for ci in 0..3 {
            for co in 0..2 {
                for k in 0..4 {
                    for i in 0..4 {
                        let o = (2 * i + k) as isize - 1;
                        if (0..8).contains(&o) {
                            dense[(co * 8 + o as usize) * 12 + ci * 4 + i] += last.kernel.data()[(ci * 2 + co) * 4 + k];
                        }
                    }
                }
            }
        }
        for row in 0..16 {
            let v: f64 = (0..12).map(|c| dense[row * 12 + c] * h.data()[c]).sum::<f64>() + last.bias.data()[row / 8];
            assert!((v - y.data()[row]).abs() < 1e-14);
        }
    }

    #[test]
    fn window_shape_and_locality() {
        let spec = HierarchySpec::new(vec![1, 4], vec![3, 2], 8).unwrap();
        let p = build_generator(arch(2, 8, 4, 8, 5), 1).unwrap();
        let mut rng = seeded(3);
        let z = LatentState::sample_prior(&spec.layout(), &mut rng);
        let y = generate_window(&z, &p, Mode::Eval).unwrap();
        assert_eq!(y.shape(), &[2, 32]);
        let mut z2 = z.clone();
        z2.vector_mut(0, 2)[1] += 0.5;
        let y2 = generate_window(&z2, &p, Mode::Eval).unwrap();
        for c in 0..2 {
            for t in 0..32 {
                let changed = y.at2(c, t) != y2.at2(c, t);
                if !(16..24).contains(&t) {
                    assert!(!changed, "column {t}");
                }
            }
        }
        assert!((16..24).any(|t| y.at2(0, t) != y2.at2(0, t)));
    }

    #[test]
    fn single_level_reduces_to_sub_window() {
        let spec = HierarchySpec::new(vec![1], vec![4], 16).unwrap();
        let p = build_generator(arch(3, 16, 4, 8, 4), 2).unwrap();
        let z = LatentState::sample_prior(&spec.layout(), &mut seeded(1));
        let a = generate_window(&z, &p, Mode::Eval).unwrap();
        let b = generate_sub_window(z.as_slice(), &p, Mode::Eval).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_grad_output() {
        let spec = HierarchySpec::new(vec![1, 2], vec![2, 2], 8).unwrap();
        let p = build_generator(arch(2, 8, 4, 8, 4), 2).unwrap();
        let z = LatentState::sample_prior(&spec.layout(), &mut seeded(1));
        let (gz, gp) = generator_backward(&z, &p, &Tensor::zeros(&[2, 16]), Mode::Eval).unwrap();
        assert!(gz.as_slice().iter().all(|&v| v == 0.0));
        assert!(gp.iter().all(|t| t.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn latent_gradient_matches_finite_differences() {
        let spec = HierarchySpec::new(vec![1, 2], vec![2, 3], 8).unwrap();
        let p = build_generator_with_std(arch(2, 8, 4, 8, 5), 4, 0.5).unwrap();
        let z = LatentState::sample_prior(&spec.layout(), &mut seeded(7));
        let probe = Tensor::from_fn(&[2, 16], |i| ((i * 7) % 5) as f64 - 2.0);
        let (gz, _) = generator_backward(&z, &p, &probe, Mode::Eval).unwrap();
        let zt = Tensor::new(&[z.as_slice().len()], z.as_slice().to_vec()).unwrap();
        let numeric = central_diff(&zt, |t| {
            let zz = LatentState::from_vec(z.layout(), t.data().to_vec()).unwrap();
            generate_window(&zz, &p, Mode::Eval).unwrap().dot(&probe)
        });
        let analytic = Tensor::new(&[zt.len()], gz.into_vec()).unwrap();
        assert!(max_rel_err(&analytic, &numeric) < 1e-4);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let mut p = build_generator(arch(3, 16, 4, 8, 5), 3).unwrap();
        p.norms[1].running_mean.data_mut()[0] = 0.25;
        let mut buf = Vec::new();
        write_params(&mut buf, &p).unwrap();
        let q = read_params(&mut buf.as_slice()).unwrap();
        assert_eq!(p, q);
        assert!(read_params(&mut &buf[..buf.len() - 1]).is_err());
    }
}
