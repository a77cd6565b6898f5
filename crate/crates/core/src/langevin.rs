//! Short-run Langevin dynamics over the latent space.
//!
//! The log posterior of a window is
//! `-|M * (Y - f(Z))|^2 / (2 sigma^2) - |Z|^2 / 2`, where `M` masks out
//! unobserved entries. One step is `Z += s * grad + sqrt(2 s) * eps`; with
//! noise disabled the iteration is gradient ascent towards the MAP latent.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::generator::{self, ForwardCache, GeneratorParams};
use crate::hierarchy::{LatentLayout, LatentState};
use crate::mask::Mask;
use crate::nn::Mode;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LangevinConfig {
    pub n_steps: usize,
    pub step_size: f64,
    /// Observation noise scale.
    pub sigma: f64,
    pub noise_enabled: bool,
}

impl LangevinConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 || !(self.step_size > 0.0) || !(self.sigma > 0.0) {
            return Err(Error::Validation(format!(
                "Langevin needs n_steps >= 1, step_size > 0, sigma > 0 (got {}, {}, {})",
                self.n_steps, self.step_size, self.sigma
            )));
        }
        Ok(())
    }
}

/// Anything that maps a batch of latent states to windows and can
/// back-propagate into the latents.
pub trait WindowGenerator {
    type Cache;

    fn generate(&self, zs: &[LatentState], mode: Mode) -> Result<(Vec<Tensor>, Self::Cache)>;

    /// Gradient of `sum_i <grads[i], f(Z_i)>` w.r.t. each `Z_i`.
    fn latent_grads(&self, zs: &[LatentState], cache: &Self::Cache, grads: &[Tensor]) -> Result<Vec<LatentState>>;
}

impl WindowGenerator for GeneratorParams {
    type Cache = ForwardCache;

    fn generate(&self, zs: &[LatentState], mode: Mode) -> Result<(Vec<Tensor>, ForwardCache)> {
        generator::generate_windows(zs, self, mode)
    }

    fn latent_grads(&self, zs: &[LatentState], cache: &ForwardCache, grads: &[Tensor]) -> Result<Vec<LatentState>> {
        Ok(generator::backward_windows(zs, self, cache, grads, false)?.0)
    }
}

/// `f(Z) = W vec(Z)`, reshaped to `[n_features, window_len]`. Used as an
/// analytically tractable stand-in for the network.
#[derive(Debug, Clone)]
pub struct LinearGenerator {
    /// `[n_features * window_len, latent_total]`
    pub weight: Tensor,
    pub n_features: usize,
    pub window_len: usize,
}

impl WindowGenerator for LinearGenerator {
    type Cache = ();

    fn generate(&self, zs: &[LatentState], _mode: Mode) -> Result<(Vec<Tensor>, ())> {
        let [rows, cols] = *self.weight.shape() else {
            unreachable!()
        };
        let outs = zs
            .iter()
            .map(|z| {
                if z.as_slice().len() != cols {
                    return Err(Error::shape("LinearGenerator", &[z.as_slice().len()], &[cols]));
                }
                let w = self.weight.data();
                let out = (0..rows)
                    .map(|r| {
                        w[r * cols..(r + 1) * cols]
                            .iter()
                            .zip(z.as_slice())
                            .map(|(a, b)| a * b)
                            .sum()
                    })
                    .collect();
                Tensor::new(&[self.n_features, self.window_len], out)
            })
            .collect::<Result<_>>()?;
        Ok((outs, ()))
    }

    fn latent_grads(&self, zs: &[LatentState], _cache: &(), grads: &[Tensor]) -> Result<Vec<LatentState>> {
        let [rows, cols] = *self.weight.shape() else {
            unreachable!()
        };
        let w = self.weight.data();
        zs.iter()
            .zip(grads)
            .map(|(z, g)| {
                let mut out = vec![0.0; cols];
                for r in 0..rows {
                    let gr = g.data()[r];
                    for (o, wv) in out.iter_mut().zip(&w[r * cols..(r + 1) * cols]) {
                        *o += wv * gr;
                    }
                }
                LatentState::from_vec(z.layout(), out)
            })
            .collect()
    }
}

/// `M * (Y - f)`; entries of `Y` under a false mask are never read.
pub fn masked_residual(y: &Tensor, fz: &Tensor, mask: &Mask) -> Result<Tensor> {
    if y.shape() != fz.shape() || y.shape() != mask.shape() {
        return Err(Error::shape("masked_residual", y.shape(), fz.shape()));
    }
    let m = mask.as_slice();
    let (yd, fd) = (y.data(), fz.data());
    Ok(Tensor::from_fn(y.shape(), |i| if m[i] { yd[i] - fd[i] } else { 0.0 }))
}

/// Posterior gradients for a batch, plus the generated windows at `zs`.
pub fn posterior_grad_batch<G: WindowGenerator>(
    zs: &[LatentState],
    ys: &[&Tensor],
    masks: &[&Mask],
    generator: &G,
    cfg: &LangevinConfig,
    mode: Mode,
) -> Result<(Vec<LatentState>, Vec<Tensor>)> {
    let (fz, cache) = generator.generate(zs, mode)?;
    let inv_var = 1.0 / (cfg.sigma * cfg.sigma);
    let mut grads_out = Vec::with_capacity(zs.len());
    for ((f, y), m) in fz.iter().zip(ys).zip(masks) {
        let mut r = masked_residual(y, f, m)?;
        r.scale(inv_var);
        grads_out.push(r);
    }
    let mut grads = generator.latent_grads(zs, &cache, &grads_out)?;
    for (g, z) in grads.iter_mut().zip(zs) {
        for (gv, zv) in g.as_mut_slice().iter_mut().zip(z.as_slice()) {
            *gv -= zv;
        }
    }
    Ok((grads, fz))
}

/// `d/dZ log p(Z | Y_obs)` for one window.
pub fn posterior_grad<G: WindowGenerator>(
    z: &LatentState,
    y: &Tensor,
    mask: &Mask,
    generator: &G,
    cfg: &LangevinConfig,
    mode: Mode,
) -> Result<LatentState> {
    Ok(
        posterior_grad_batch(std::slice::from_ref(z), &[y], &[mask], generator, cfg, mode)?
            .0
            .remove(0),
    )
}

/// Runs `cfg.n_steps` Langevin steps on every window of the batch jointly.
/// Noise (when enabled) is drawn window by window, coordinate by coordinate.
pub fn langevin_infer_batch<G: WindowGenerator>(
    ys: &[&Tensor],
    masks: &[&Mask],
    generator: &G,
    cfg: &LangevinConfig,
    mode: Mode,
    rng: &mut impl Rng,
    zs: Vec<LatentState>,
) -> Result<Vec<LatentState>> {
    if cfg.noise_enabled {
        run_chain(ys, masks, generator, cfg, mode, zs, &mut || {
            rng.sample::<f64, _>(StandardNormal)
        })
    } else {
        run_chain(ys, masks, generator, cfg, mode, zs, &mut || 0.0)
    }
}

/// The Langevin loop with an explicit noise source. Passing a source that
/// always returns zero must reproduce the noiseless chain exactly.
pub fn run_chain<G: WindowGenerator>(
    ys: &[&Tensor],
    masks: &[&Mask],
    generator: &G,
    cfg: &LangevinConfig,
    mode: Mode,
    mut zs: Vec<LatentState>,
    noise: &mut dyn FnMut() -> f64,
) -> Result<Vec<LatentState>> {
    cfg.validate()?;
    if ys.len() != zs.len() || masks.len() != zs.len() {
        return Err(Error::shape("langevin batch", &[zs.len()], &[ys.len(), masks.len()]));
    }
    let s = cfg.step_size;
    let noise_scale = (2.0 * s).sqrt();
    for step in 0..cfg.n_steps {
        let (grads, _) = posterior_grad_batch(&zs, ys, masks, generator, cfg, mode)?;
        for (z, g) in zs.iter_mut().zip(&grads) {
            for (zv, gv) in z.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *zv += s * gv;
            }
            if cfg.noise_enabled {
                for zv in z.as_mut_slice() {
                    *zv += noise_scale * noise();
                }
            }
            if !z.all_finite() {
                return Err(Error::NonFiniteLatent { step });
            }
        }
    }
    Ok(zs)
}

/// Single-window Langevin inference from `z_init`.
#[allow(clippy::too_many_arguments)]
pub fn langevin_infer<G: WindowGenerator>(
    y: &Tensor,
    mask: &Mask,
    generator: &G,
    cfg: &LangevinConfig,
    mode: Mode,
    rng: &mut impl Rng,
    z_init: LatentState,
) -> Result<LatentState> {
    Ok(langevin_infer_batch(&[y], &[mask], generator, cfg, mode, rng, vec![z_init])?.remove(0))
}

/// Negative log posterior (up to a constant) of one window.
pub fn neg_log_posterior<G: WindowGenerator>(
    z: &LatentState,
    y: &Tensor,
    mask: &Mask,
    generator: &G,
    sigma: f64,
    mode: Mode,
) -> Result<f64> {
    let (fz, _) = generator.generate(std::slice::from_ref(z), mode)?;
    let r = masked_residual(y, &fz[0], mask)?;
    Ok(r.dot(&r) / (2.0 * sigma * sigma) + z.squared_norm() / 2.0)
}

/// Prior draw for `layout` followed by noiseless inference: the MAP
/// reconstruction used by detection and forecasting alike.
pub fn map_reconstruct<G: WindowGenerator>(
    y: &Tensor,
    mask: &Mask,
    generator: &G,
    layout: &LatentLayout,
    cfg: &LangevinConfig,
    rng: &mut impl Rng,
) -> Result<(LatentState, Tensor)> {
    let z0 = LatentState::sample_prior(layout, rng);
    let cfg = LangevinConfig {
        noise_enabled: false,
        ..*cfg
    };
    let z = langevin_infer(y, mask, generator, &cfg, Mode::Eval, rng, z0)?;
    let (mut out, _) = generator.generate(std::slice::from_ref(&z), Mode::Eval)?;
    Ok((z, out.remove(0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{build_generator, build_generator_with_std, GeneratorArch};
    use crate::hierarchy::HierarchySpec;
    use crate::rng::seeded;

    fn small() -> (HierarchySpec, GeneratorParams) {
        let spec = HierarchySpec::new(vec![1, 2], vec![3, 2], 8).unwrap();
        let arch = GeneratorArch {
            n_features: 2,
            sub_window_len: 8,
            filter_multiplier: 4,
            max_filters: 8,
            state_dim: 5,
        };
        (spec, build_generator(arch, 1).unwrap())
    }

    fn cfg(n: usize, noise: bool) -> LangevinConfig {
        LangevinConfig {
            n_steps: n,
            step_size: 0.001,
            sigma: 0.025,
            noise_enabled: noise,
        }
    }

    #[test]
    fn exact_fit_leaves_prior_gradient() {
        let (spec, g) = small();
        let z = LatentState::sample_prior(&spec.layout(), &mut seeded(2));
        let y = crate::generator::generate_window(&z, &g, Mode::Eval).unwrap();
        let grad = posterior_grad(&z, &y, &Mask::observed(2, 16), &g, &cfg(1, false), Mode::Eval).unwrap();
        for (a, b) in grad.as_slice().iter().zip(z.as_slice()) {
            assert_eq!(*a, -b);
        }
    }

    #[test]
    fn fully_occluded_leaves_prior_gradient() {
        let (spec, g) = small();
        let z = LatentState::sample_prior(&spec.layout(), &mut seeded(2));
        let y = Tensor::full(&[2, 16], 123.0);
        let grad = posterior_grad(&z, &y, &Mask::full(2, 16, false), &g, &cfg(1, false), Mode::Eval).unwrap();
        for (a, b) in grad.as_slice().iter().zip(z.as_slice()) {
            assert_eq!(*a, -b);
        }
    }

    #[test]
    fn zero_generator_contracts_geometrically() {
        let spec = HierarchySpec::new(vec![1, 2], vec![3, 2], 8).unwrap();
        let arch = GeneratorArch {
            n_features: 2,
            sub_window_len: 8,
            filter_multiplier: 4,
            max_filters: 8,
            state_dim: 5,
        };
        let g = build_generator_with_std(arch, 0, 0.0).unwrap();
        let z0 = LatentState::sample_prior(&spec.layout(), &mut seeded(5));
        let y = Tensor::zeros(&[2, 16]);
        let steps = 40;
        let z = langevin_infer(
            &y,
            &Mask::observed(2, 16),
            &g,
            &cfg(steps, false),
            Mode::Eval,
            &mut seeded(0),
            z0.clone(),
        )
        .unwrap();
        let factor = (1.0 - 0.001_f64).powi(steps as i32);
        for (a, b) in z.as_slice().iter().zip(z0.as_slice()) {
            assert!((a - factor * b).abs() < 1e-12);
        }
    }

    #[test]
    fn noisy_chain_is_deterministic_and_zero_noise_matches_noiseless() {
        let (spec, g) = small();
        let y = Tensor::from_fn(&[2, 16], |i| (i as f64 * 0.3).sin());
        let mask = Mask::observed(2, 16);
        let z0 = LatentState::sample_prior(&spec.layout(), &mut seeded(5));
        let run = || langevin_infer(&y, &mask, &g, &cfg(10, true), Mode::Eval, &mut seeded(9), z0.clone()).unwrap();
        assert_eq!(run(), run());

        let quiet = langevin_infer(&y, &mask, &g, &cfg(10, false), Mode::Eval, &mut seeded(9), z0.clone()).unwrap();
        let zeroed = run_chain(
            &[&y],
            &[&mask],
            &g,
            &cfg(10, true),
            Mode::Eval,
            vec![z0.clone()],
            &mut || 0.0,
        )
        .unwrap();
        assert_eq!(zeroed[0], quiet);
        assert_ne!(run(), quiet);
    }

    #[test]
    fn masked_values_are_ignored() {
        let (spec, g) = small();
        let mut y = Tensor::from_fn(&[2, 16], |i| (i as f64 * 0.3).cos());
        let mut mask = Mask::observed(2, 16);
        for t in 4..11 {
            mask.set(1, t, false);
        }
        let z0 = LatentState::sample_prior(&spec.layout(), &mut seeded(5));
        let a = langevin_infer(&y, &mask, &g, &cfg(15, true), Mode::Eval, &mut seeded(3), z0.clone()).unwrap();
        for t in 4..11 {
            y.set2(1, t, 1e6 * t as f64);
        }
        let b = langevin_infer(&y, &mask, &g, &cfg(15, true), Mode::Eval, &mut seeded(3), z0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn non_finite_latent_reports_step() {
        let (spec, g) = small();
        let y = Tensor::full(&[2, 16], 1e308);
        let z0 = LatentState::sample_prior(&spec.layout(), &mut seeded(5));
        let err = langevin_infer(
            &y,
            &Mask::observed(2, 16),
            &g,
            &cfg(5, false),
            Mode::Eval,
            &mut seeded(3),
            z0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFiniteLatent { step: 0 }), "{err}");
    }

    #[test]
    fn rejects_bad_config() {
        assert!(cfg(0, false).validate().is_err());
        assert!(LangevinConfig {
            sigma: 0.0,
            ..cfg(1, false)
        }
        .validate()
        .is_err());
    }
}
