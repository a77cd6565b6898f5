//! Mini-batch alternating back-propagation.
//!
//! Every training window owns a persistent latent chain. Each iteration
//! picks a mini-batch, advances the chains of the picked windows with noisy
//! Langevin steps (inferential pass), then takes one Adam step on the
//! generator parameters with the updated latents held fixed (learning pass).

use std::io::{Read, Write};
use std::time::Instant;

use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::generator::{self, build_generator, GeneratorArch, GeneratorParams};
use crate::hierarchy::{init_latents, read_latents, write_latents, HierarchySpec, LatentState};
use crate::io_util::{read_f64s, read_u32, read_u64, write_f64s};
use crate::langevin::{langevin_infer_batch, masked_residual, LangevinConfig};
use crate::mask::Mask;
use crate::nn::batchnorm::DEFAULT_MOMENTUM;
use crate::nn::{adam_step, AdamState, Mode};
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::tensor::Tensor;
use crate::window::Window;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub n_decays: usize,
    pub langevin: LangevinConfig,
    pub masks_enabled: bool,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.batch_size == 0 {
            return Err(Error::Validation("iterations and batch_size must be >= 1".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Validation("learning rate must be > 0".into()));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Validation(format!(
                "lr_decay must lie in (0, 1], got {}",
                self.lr_decay
            )));
        }
        self.langevin.validate()
    }

    /// Learning rate for 0-based iteration `t`: decayed after iterations
    /// `ceil(k T / (n + 1))`, `k = 1..=n`.
    pub fn lr_at(&self, t: usize) -> f64 {
        let n = self.n_decays;
        let total = self.iterations;
        let decays = (1..=n).filter(|k| (k * total).div_ceil(n + 1) <= t).count();
        self.lr * self.lr_decay.powi(decays as i32)
    }
}

#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub params: GeneratorParams,
    pub latents: Vec<LatentState>,
    /// Batch mean of `masked MSE / (2 sigma^2)` per iteration.
    pub loss_history: Vec<f64>,
    /// Batch mean of `|Z|^2 / 2` per iteration.
    pub prior_history: Vec<f64>,
    pub lr_history: Vec<f64>,
    /// Cumulative wall-clock seconds at the end of each iteration.
    pub seconds: Vec<f64>,
    pub inference_seconds: f64,
    pub learning_seconds: f64,
}

pub struct Trainer {
    windows: Vec<Window>,
    masks: Vec<Mask>,
    cfg: TrainConfig,
    spec: HierarchySpec,
    pub params: GeneratorParams,
    pub latents: Vec<LatentState>,
    pub adam: AdamState,
    pub iteration: usize,
    batch_rng: ChaCha8Rng,
    langevin_rng: ChaCha8Rng,
    pub loss_history: Vec<f64>,
    pub prior_history: Vec<f64>,
    pub lr_history: Vec<f64>,
    pub seconds: Vec<f64>,
    inference_seconds: f64,
    learning_seconds: f64,
    started: Instant,
}

impl Trainer {
    pub fn new(windows: Vec<Window>, spec: &HierarchySpec, arch: GeneratorArch, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        spec.validate()?;
        if windows.is_empty() {
            return Err(Error::Data("training needs at least one window".into()));
        }
        if arch.state_dim != spec.state_dim() || arch.sub_window_len != spec.sub_window_len {
            return Err(Error::Validation(
                "generator architecture does not match the hierarchy".into(),
            ));
        }
        for w in &windows {
            if w.values.shape() != [arch.n_features, spec.window_len()] {
                return Err(Error::shape(
                    "training window",
                    w.values.shape(),
                    &[arch.n_features, spec.window_len()],
                ));
            }
        }
        let masks = windows
            .iter()
            .map(|w| {
                if cfg.masks_enabled {
                    w.mask.clone()
                } else {
                    w.pad_mask()
                }
            })
            .collect();
        let params = build_generator(arch, derive_seed(cfg.seed, Stream::Init, 0))?;
        let latents = init_latents(spec, windows.len(), derive_seed(cfg.seed, Stream::Init, 1));
        let adam = AdamState::new(params.learnable());
        Ok(Self {
            windows,
            masks,
            cfg,
            spec: spec.clone(),
            params,
            latents,
            adam,
            iteration: 0,
            batch_rng: stream_rng(cfg.seed, Stream::Batch, 0),
            langevin_rng: stream_rng(cfg.seed, Stream::Langevin, 0),
            loss_history: Vec::new(),
            prior_history: Vec::new(),
            lr_history: Vec::new(),
            seconds: Vec::new(),
            inference_seconds: 0.0,
            learning_seconds: 0.0,
            started: Instant::now(),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn is_done(&self) -> bool {
        self.iteration >= self.cfg.iterations
    }

    /// Distinct window indices for this iteration's mini-batch.
    fn draw_batch(&mut self) -> Vec<usize> {
        let n = self.windows.len();
        let b = self.cfg.batch_size.min(n);
        let mut idx = sample(&mut self.batch_rng, n, b).into_vec();
        idx.sort_unstable();
        idx
    }

    pub fn step(&mut self) -> Result<f64> {
        let t = self.iteration;
        let lr = self.cfg.lr_at(t);
        let batch = self.draw_batch();
        let ys: Vec<&Tensor> = batch.iter().map(|&i| &self.windows[i].values).collect();
        let masks: Vec<&Mask> = batch.iter().map(|&i| &self.masks[i]).collect();

        let t0 = Instant::now();
        let lcfg = LangevinConfig {
            noise_enabled: true,
            ..self.cfg.langevin
        };
        let zs: Vec<LatentState> = batch.iter().map(|&i| self.latents[i].clone()).collect();
        let zs = langevin_infer_batch(
            &ys,
            &masks,
            &self.params,
            &lcfg,
            Mode::Train,
            &mut self.langevin_rng,
            zs,
        )?;
        self.inference_seconds += t0.elapsed().as_secs_f64();

        let t1 = Instant::now();
        let (fz, cache) = generator::generate_windows(&zs, &self.params, Mode::Train)?;
        let sigma2 = self.cfg.langevin.sigma * self.cfg.langevin.sigma;
        let b = batch.len() as f64;
        let mut loss = 0.0;
        let mut prior = 0.0;
        let mut grads_out = Vec::with_capacity(batch.len());
        for (k, ((f, y), m)) in fz.iter().zip(&ys).zip(&masks).enumerate() {
            let r = masked_residual(y, f, m)?;
            let n_obs = m.count_observed();
            let sse = r.dot(&r);
            let mse = if n_obs > 0 { sse / n_obs as f64 } else { 0.0 };
            if !mse.is_finite() {
                return Err(Error::NonFiniteLoss {
                    iteration: t,
                    window: batch[k],
                });
            }
            loss += mse / (2.0 * sigma2) / b;
            prior += zs[k].squared_norm() / 2.0 / b;
            // d/df of sum |r|^2 / (2 sigma^2), averaged over the batch
            let mut g = r;
            g.scale(-1.0 / (sigma2 * b));
            grads_out.push(g);
        }
        let (_, grads) = generator::backward_windows(&zs, &self.params, &cache, &grads_out, true)?;
        let grads = grads.expect("requested");
        adam_step(&mut self.params.learnable_mut(), &grads, &mut self.adam, lr)?;
        self.params.update_running_stats(&cache, DEFAULT_MOMENTUM);
        self.learning_seconds += t1.elapsed().as_secs_f64();

        for (&i, z) in batch.iter().zip(zs) {
            self.latents[i] = z;
        }
        self.loss_history.push(loss);
        self.prior_history.push(prior);
        self.lr_history.push(lr);
        self.seconds.push(self.started.elapsed().as_secs_f64());
        self.iteration += 1;
        Ok(loss)
    }

    /// Runs to completion, calling `on_checkpoint` every `every` iterations
    /// (never when `every == 0`).
    pub fn run_with(
        mut self,
        every: usize,
        mut on_checkpoint: impl FnMut(&Trainer) -> Result<()>,
    ) -> Result<TrainingRun> {
        while !self.is_done() {
            self.step()?;
            if every > 0 && self.iteration % every == 0 {
                on_checkpoint(&self)?;
            }
        }
        Ok(self.finish())
    }

    pub fn finish(self) -> TrainingRun {
        TrainingRun {
            params: self.params,
            latents: self.latents,
            loss_history: self.loss_history,
            prior_history: self.prior_history,
            lr_history: self.lr_history,
            seconds: self.seconds,
            inference_seconds: self.inference_seconds,
            learning_seconds: self.learning_seconds,
        }
    }

    /// Params, latents, optimizer state, RNG positions and histories.
    pub fn save_checkpoint(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(CKPT_MAGIC)?;
        w.write_all(&CKPT_VERSION.to_le_bytes())?;
        w.write_all(&(self.iteration as u64).to_le_bytes())?;
        generator::write_params(w, &self.params)?;
        write_latents(w, &self.latents, &self.spec.layout())?;
        w.write_all(&self.adam.step_count.to_le_bytes())?;
        for (m, v) in self.adam.first_moment.iter().zip(&self.adam.second_moment) {
            write_f64s(w, m.data())?;
            write_f64s(w, v.data())?;
        }
        for rng in [&self.batch_rng, &self.langevin_rng] {
            w.write_all(&rng.get_seed())?;
            w.write_all(&rng.get_stream().to_le_bytes())?;
            w.write_all(&rng.get_word_pos().to_le_bytes())?;
        }
        for h in [&self.loss_history, &self.prior_history, &self.lr_history] {
            write_f64s(w, h)?;
        }
        Ok(())
    }

    /// Restores state written by [`Trainer::save_checkpoint`] into a trainer
    /// built from the same windows and configuration.
    pub fn restore_checkpoint(&mut self, r: &mut impl Read) -> Result<()> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CKPT_MAGIC {
            return Err(Error::Format("not a trainer checkpoint".into()));
        }
        let version = read_u32(r)?;
        if version != CKPT_VERSION {
            return Err(Error::Format(format!(
                "unsupported trainer checkpoint version {version}"
            )));
        }
        let iteration = read_u64(r)? as usize;
        let params = generator::read_params(r)?;
        if params.arch != self.params.arch {
            return Err(Error::Format("checkpoint architecture differs from trainer".into()));
        }
        let (layout, latents) = read_latents(r)?;
        if layout != self.spec.layout() || latents.len() != self.windows.len() {
            return Err(Error::Format(
                "checkpoint latents do not match the training windows".into(),
            ));
        }
        let step_count = read_u64(r)?;
        let mut adam = AdamState::new(params.learnable());
        adam.step_count = step_count;
        for (m, v) in adam.first_moment.iter_mut().zip(adam.second_moment.iter_mut()) {
            let md = read_f64s(r, m.len())?;
            m.data_mut().copy_from_slice(&md);
            let vd = read_f64s(r, v.len())?;
            v.data_mut().copy_from_slice(&vd);
        }
        let mut rngs = Vec::new();
        for _ in 0..2 {
            let mut seed = [0u8; 32];
            r.read_exact(&mut seed)?;
            let stream = read_u64(r)?;
            let mut pos = [0u8; 16];
            r.read_exact(&mut pos)?;
            let mut rng = <ChaCha8Rng as rand::SeedableRng>::from_seed(seed);
            rng.set_stream(stream);
            rng.set_word_pos(u128::from_le_bytes(pos));
            rngs.push(rng);
        }
        let hist = |r: &mut dyn Read| read_f64s(&mut &mut *r, iteration);
        self.loss_history = hist(r)?;
        self.prior_history = hist(r)?;
        self.lr_history = hist(r)?;
        self.seconds = vec![0.0; iteration];
        self.langevin_rng = rngs.pop().unwrap();
        self.batch_rng = rngs.pop().unwrap();
        self.iteration = iteration;
        self.params = params;
        self.latents = latents;
        self.adam = adam;
        Ok(())
    }
}

const CKPT_MAGIC: &[u8; 4] = b"HLTR";
const CKPT_VERSION: u32 = 1;

pub fn abp_train(
    windows: Vec<Window>,
    spec: &HierarchySpec,
    arch: GeneratorArch,
    cfg: TrainConfig,
) -> Result<TrainingRun> {
    Trainer::new(windows, spec, arch, cfg)?.run_with(0, |_| Ok(()))
}

/// `iteration,loss,lr,seconds` rows.
pub fn write_loss_csv(w: &mut impl Write, run: &TrainingRun) -> Result<()> {
    writeln!(w, "iteration,loss,lr,seconds")?;
    for (i, ((l, lr), s)) in run
        .loss_history
        .iter()
        .zip(&run.lr_history)
        .zip(&run.seconds)
        .enumerate()
    {
        writeln!(w, "{},{},{},{:.3}", i + 1, l, lr, s)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SeriesFrame;
    use crate::generator::build_generator_with_std;
    use crate::window::{make_windows, Windowing};

    fn setup(t: usize) -> (Vec<Window>, HierarchySpec, GeneratorArch, TrainConfig) {
        let spec = HierarchySpec::new(vec![1, 2], vec![3, 2], 8).unwrap();
        let arch = GeneratorArch {
            n_features: 2,
            sub_window_len: 8,
            filter_multiplier: 4,
            max_filters: 8,
            state_dim: 5,
        };
        let values = Tensor::from_fn(&[2, t], |i| ((i % t) as f64 * 0.4 + (i / t) as f64).sin());
        let frame = SeriesFrame::from_values("e", values).unwrap();
        let windows = make_windows(
            &frame,
            Windowing {
                window_len: 16,
                step: 16,
            },
        )
        .unwrap();
        let cfg = TrainConfig {
            iterations: 12,
            batch_size: 2,
            lr: 1e-3,
            lr_decay: 0.8,
            n_decays: 3,
            langevin: LangevinConfig {
                n_steps: 3,
                step_size: 0.001,
                sigma: 0.025,
                noise_enabled: true,
            },
            masks_enabled: true,
            seed: 11,
        };
        (windows, spec, arch, cfg)
    }

    #[test]
    fn decay_schedule_quarters() {
        let (_, _, _, mut cfg) = setup(64);
        cfg.iterations = 1000;
        assert_eq!(cfg.lr_at(0), 1e-3);
        assert_eq!(cfg.lr_at(249), 1e-3);
        assert!((cfg.lr_at(250) - 8e-4).abs() < 1e-18);
        assert!((cfg.lr_at(500) - 6.4e-4).abs() < 1e-18);
        assert!((cfg.lr_at(999) - 1e-3 * 0.8f64.powi(3)).abs() < 1e-18);
    }

    #[test]
    fn deterministic_runs() {
        let (w, s, a, c) = setup(64);
        let r1 = abp_train(w.clone(), &s, a, c).unwrap();
        let r2 = abp_train(w, &s, a, c).unwrap();
        assert_eq!(r1.params, r2.params);
        assert_eq!(r1.latents, r2.latents);
        assert_eq!(r1.loss_history, r2.loss_history);
        assert_eq!(r1.loss_history.len(), 12);
    }

    #[test]
    fn zero_window_is_a_fixed_point() {
        let (_, s, a, c) = setup(16);
        let frame = SeriesFrame::from_values("z", Tensor::zeros(&[2, 16])).unwrap();
        let windows = make_windows(
            &frame,
            Windowing {
                window_len: 16,
                step: 16,
            },
        )
        .unwrap();
        let mut tr = Trainer::new(windows, &s, a, c).unwrap();
        tr.params = build_generator_with_std(a, 0, 0.0).unwrap();
        let run = tr.run_with(0, |_| Ok(())).unwrap();
        assert!(run.loss_history.iter().all(|&l| l == 0.0));
        assert!(run.params.convs.iter().all(|c| c.bias.data().iter().all(|&b| b == 0.0)));
        assert!(run
            .params
            .convs
            .iter()
            .all(|c| c.kernel.data().iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn chains_only_move_when_sampled() {
        let (w, s, a, c) = setup(160);
        let mut tr = Trainer::new(w, &s, a, c).unwrap();
        for _ in 0..5 {
            let before = tr.latents.clone();
            let mut rng = tr.batch_rng.clone();
            let n = tr.windows.len();
            let expected: Vec<usize> = {
                let mut v = sample(&mut rng, n, 2).into_vec();
                v.sort_unstable();
                v
            };
            tr.step().unwrap();
            for i in 0..n {
                assert_eq!(before[i] != tr.latents[i], expected.contains(&i), "window {i}");
            }
        }
    }

    #[test]
    fn fully_occluded_windows_give_no_gradient() {
        let (mut w, s, a, c) = setup(32);
        for win in &mut w {
            win.mask = Mask::full(2, 16, false);
        }
        let run = abp_train(w, &s, a, c).unwrap();
        let fresh = build_generator(a, derive_seed(c.seed, Stream::Init, 0)).unwrap();
        // no gradient ever reaches the parameters, so Adam never moves them
        assert_eq!(run.params.learnable(), fresh.learnable());
    }

    #[test]
    fn checkpoint_resume_is_exact() {
        let (w, s, a, c) = setup(96);
        let full = abp_train(w.clone(), &s, a, c).unwrap();

        let mut tr = Trainer::new(w.clone(), &s, a, c).unwrap();
        for _ in 0..5 {
            tr.step().unwrap();
        }
        let mut buf = Vec::new();
        tr.save_checkpoint(&mut buf).unwrap();
        let mut resumed = Trainer::new(w, &s, a, c).unwrap();
        resumed.restore_checkpoint(&mut buf.as_slice()).unwrap();
        let run = resumed.run_with(0, |_| Ok(())).unwrap();
        assert_eq!(run.params, full.params);
        assert_eq!(run.latents, full.latents);
        assert_eq!(run.loss_history, full.loss_history);
    }
}
