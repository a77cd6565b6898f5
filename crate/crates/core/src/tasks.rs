//! Occlusion masks, forecasting, latent interpolation and the synthetic
//! labeled benchmark.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::SeriesFrame;
use crate::error::{Error, Result};
use crate::hierarchy::{HierarchySpec, LatentState};
use crate::langevin::{map_reconstruct, LangevinConfig, WindowGenerator};
use crate::mask::Mask;
use crate::nn::Mode;
use crate::rng::{stream_rng, Stream};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OcclusionSpec {
    /// Number of equal-length segments.
    pub r: usize,
    /// Probability that a (feature, segment) cell is hidden.
    pub p: f64,
    pub seed: u64,
}

impl OcclusionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.r == 0 || !(0.0..=1.0).contains(&self.p) {
            return Err(Error::Validation(format!(
                "occlusion needs r >= 1 and p in [0, 1], got r = {}, p = {}",
                self.r, self.p
            )));
        }
        Ok(())
    }
}

/// Segment bounds: `r` segments of `floor(T / r)` steps, the last one
/// absorbing the remainder.
pub fn segment_bounds(t_len: usize, r: usize) -> Vec<(usize, usize)> {
    let seg = t_len / r;
    (0..r)
        .map(|j| (j * seg, if j + 1 == r { t_len } else { (j + 1) * seg }))
        .collect()
}

/// Mask with each (feature, segment) cell hidden with probability `p`.
/// Draws go feature by feature, segment by segment.
pub fn make_occlusion_mask(m: usize, t_len: usize, spec: &OcclusionSpec) -> Result<Mask> {
    spec.validate()?;
    if t_len < spec.r {
        return Err(Error::Validation(format!(
            "cannot cut {t_len} timestamps into {} segments",
            spec.r
        )));
    }
    let mut rng = stream_rng(spec.seed, Stream::Occlusion, 0);
    let mut mask = Mask::observed(m, t_len);
    let bounds = segment_bounds(t_len, spec.r);
    for i in 0..m {
        for &(s, e) in &bounds {
            if rng.random_bool(spec.p) {
                (s..e).for_each(|t| mask.set(i, t, false));
            }
        }
    }
    Ok(mask)
}

/// Copy of `frame` with `mask` additionally hiding entries.
pub fn occlude(frame: &SeriesFrame, mask: &Mask) -> Result<SeriesFrame> {
    if mask.shape() != frame.mask.shape() {
        return Err(Error::shape("occlusion mask", &mask.shape(), &frame.mask.shape()));
    }
    let mut out = frame.clone();
    out.mask = frame.mask.and(mask);
    Ok(out)
}

/// Mask observing columns `[0, observed_len)` only.
pub fn forecast_mask(m: usize, window_len: usize, observed_len: usize) -> Result<Mask> {
    if observed_len == 0 || observed_len >= window_len {
        return Err(Error::Validation(format!(
            "observed length {observed_len} must lie in [1, {})",
            window_len
        )));
    }
    let mut mask = Mask::observed(m, window_len);
    for i in 0..m {
        for c in observed_len..window_len {
            mask.set(i, c, false);
        }
    }
    Ok(mask)
}

/// Infers latents from the observed prefix and generates the whole window;
/// columns from `observed_len` on are the forecast. `rng` supplies the
/// initial prior draw exactly as in detection.
pub fn forecast<G: WindowGenerator>(
    window: &Tensor,
    observed_len: usize,
    generator: &G,
    spec: &HierarchySpec,
    cfg: &LangevinConfig,
    rng: &mut impl Rng,
) -> Result<Tensor> {
    let [m, w] = *window.shape() else {
        return Err(Error::shape("forecast window", window.shape(), &[0, 0]));
    };
    if w != spec.window_len() {
        return Err(Error::shape("forecast window", window.shape(), &[m, spec.window_len()]));
    }
    let mask = forecast_mask(m, w, observed_len)?;
    forecast_masked(window, &mask, generator, spec, cfg, rng)
}

/// [`forecast`] with an arbitrary observation mask; an all-true mask gives
/// the detection reconstruction.
pub fn forecast_masked<G: WindowGenerator>(
    window: &Tensor,
    mask: &Mask,
    generator: &G,
    spec: &HierarchySpec,
    cfg: &LangevinConfig,
    rng: &mut impl Rng,
) -> Result<Tensor> {
    Ok(map_reconstruct(window, mask, generator, &spec.layout(), cfg, rng)?.1)
}

/// Windows generated from `(1 - alpha) Z_a + alpha Z_b` for each alpha.
pub fn interpolate_latents<G: WindowGenerator>(
    za: &LatentState,
    zb: &LatentState,
    alphas: &[f64],
    generator: &G,
) -> Result<Vec<Tensor>> {
    let zs = alphas.iter().map(|&a| za.lerp(zb, a)).collect::<Result<Vec<_>>>()?;
    // one at a time so each window is generated exactly as on its own
    zs.iter()
        .map(|z| Ok(generator.generate(std::slice::from_ref(z), Mode::Eval)?.0.remove(0)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnomalyKind {
    Spike,
    LevelShift,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InjectedAnomaly {
    pub kind: AnomalyKind,
    pub feature: usize,
    pub start: usize,
    pub end: usize,
    /// Signed offset added over `[start, end)`.
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub m: usize,
    pub t_train: usize,
    pub t_test: usize,
    /// Sinusoids per feature, or shared sources when `shared_sources`.
    pub n_components: usize,
    /// Mix one set of sources into every feature with per-feature signed
    /// amplitudes, instead of drawing independent sinusoids per feature.
    pub shared_sources: bool,
    /// Period range in timestamps. Component `k` draws its period from the
    /// middle half of the `k`-th of `n_components` log-spaced bands.
    pub period_range: (f64, f64),
    pub amplitude_range: (f64, f64),
    pub noise_std: f64,
    pub n_spikes: usize,
    pub n_level_shifts: usize,
    /// Offset sizes in units of `noise_std`.
    pub spike_magnitude: f64,
    pub shift_magnitude: f64,
    pub spike_len: (usize, usize),
    pub shift_len: (usize, usize),
    /// Minimum number of normal timestamps between two anomalies.
    pub gap: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            m: 5,
            t_train: 10_000,
            t_test: 5_000,
            n_components: 3,
            shared_sources: true,
            period_range: (24.0, 240.0),
            amplitude_range: (0.5, 1.5),
            noise_std: 0.05,
            n_spikes: 10,
            n_level_shifts: 10,
            spike_magnitude: 60.0,
            shift_magnitude: 60.0,
            spike_len: (1, 4),
            shift_len: (20, 60),
            gap: 20,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let ok_range = |(a, b): (usize, usize)| a >= 1 && a <= b;
        if self.m == 0 || self.t_train == 0 || self.t_test == 0 || self.n_components == 0 {
            return Err(Error::Validation(
                "synthetic spec needs m, lengths and components >= 1".into(),
            ));
        }
        if !(self.period_range.0 > 0.0 && self.period_range.0 <= self.period_range.1)
            || !(self.amplitude_range.0 <= self.amplitude_range.1)
            || !(self.noise_std >= 0.0)
        {
            return Err(Error::Validation(
                "bad synthetic period, amplitude or noise range".into(),
            ));
        }
        if !ok_range(self.spike_len) || !ok_range(self.shift_len) {
            return Err(Error::Validation(
                "anomaly length ranges must satisfy 1 <= lo <= hi".into(),
            ));
        }
        let need = self.n_spikes * (self.spike_len.1 + self.gap) + self.n_level_shifts * (self.shift_len.1 + self.gap);
        if need > self.t_test {
            return Err(Error::Validation(format!(
                "{} anomalies need up to {need} test timestamps, only {} available",
                self.n_spikes + self.n_level_shifts,
                self.t_test
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub train: SeriesFrame,
    pub test: SeriesFrame,
    /// Test series before anomalies were added.
    pub test_clean: Tensor,
    pub anomalies: Vec<InjectedAnomaly>,
}

fn random_phase(rng: &mut impl Rng) -> f64 {
    rng.random_range(0.0..std::f64::consts::TAU)
}

fn band_period(rng: &mut impl Rng, (lo, hi): (f64, f64), k: usize, n: usize) -> f64 {
    let width = (hi / lo).ln() / n as f64;
    let start = lo.ln() + width * k as f64;
    uniform(rng, (start + width / 4.0, start + 3.0 * width / 4.0)).exp()
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Multi-sine series with Gaussian noise. Test continues the train signal in
/// time and carries disjoint injected anomalies with exact labels.
pub fn synth_generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let mut rng = stream_rng(spec.seed, Stream::Synth, 0);
    let total = spec.t_train + spec.t_test;
    let mut series = Tensor::zeros(&[spec.m, total]);
    let draw_source = |rng: &mut _, k: usize| {
        let period = band_period(rng, spec.period_range, k, spec.n_components);
        let phase = random_phase(rng);
        (std::f64::consts::TAU / period, phase)
    };
    let shared: Vec<(f64, f64)> = if spec.shared_sources {
        (0..spec.n_components).map(|k| draw_source(&mut rng, k)).collect()
    } else {
        Vec::new()
    };
    for i in 0..spec.m {
        let comps: Vec<(f64, f64, f64)> = (0..spec.n_components)
            .map(|k| {
                let (w, phase) = if spec.shared_sources {
                    shared[k]
                } else {
                    draw_source(&mut rng, k)
                };
                let mut amp = uniform(&mut rng, spec.amplitude_range);
                if spec.shared_sources && rng.random_bool(0.5) {
                    amp = -amp;
                }
                (w, amp, phase)
            })
            .collect();
        for t in 0..total {
            let clean: f64 = comps.iter().map(|&(w, a, ph)| a * (w * t as f64 + ph).sin()).sum();
            let noise: f64 = rng.sample(StandardNormal);
            series.set2(i, t, clean + spec.noise_std * noise);
        }
    }
    let train = SeriesFrame::from_values("synthetic", series_slice(&series, 0, spec.t_train))?;
    let test_clean = series_slice(&series, spec.t_train, total);

    let anomalies = place_anomalies(spec, &mut rng);
    let mut values = test_clean.clone();
    let mut labels = vec![false; spec.t_test];
    for a in &anomalies {
        for t in a.start..a.end {
            let v = values.at2(a.feature, t) + a.offset;
            values.set2(a.feature, t, v);
            labels[t] = true;
        }
    }
    let mut test = SeriesFrame::from_values("synthetic", values)?;
    test.labels = Some(labels);
    Ok(SynthData {
        train,
        test,
        test_clean,
        anomalies,
    })
}

fn series_slice(x: &Tensor, start: usize, end: usize) -> Tensor {
    let n = end - start;
    Tensor::from_fn(&[x.shape()[0], n], |k| x.at2(k / n, start + k % n))
}

/// Random disjoint intervals: the lengths are drawn first, then the spare
/// timestamps are split at random into the gaps between them.
fn place_anomalies(spec: &SynthSpec, rng: &mut impl Rng) -> Vec<InjectedAnomaly> {
    let mut kinds: Vec<AnomalyKind> = std::iter::repeat_n(AnomalyKind::Spike, spec.n_spikes)
        .chain(std::iter::repeat_n(AnomalyKind::LevelShift, spec.n_level_shifts))
        .collect();
    rand::seq::SliceRandom::shuffle(kinds.as_mut_slice(), rng);
    let lens: Vec<usize> = kinds
        .iter()
        .map(|k| match k {
            AnomalyKind::Spike => rng.random_range(spec.spike_len.0..=spec.spike_len.1),
            AnomalyKind::LevelShift => rng.random_range(spec.shift_len.0..=spec.shift_len.1),
        })
        .collect();
    let n = kinds.len();
    let used: usize = lens.iter().sum::<usize>() + n * spec.gap;
    let spare = spec.t_test - used;
    // n + 1 slack values summing to `spare`
    let mut cuts: Vec<usize> = (0..n).map(|_| rng.random_range(0..=spare)).collect();
    cuts.sort_unstable();
    let mut out = Vec::with_capacity(n);
    let mut t = 0;
    let mut prev_cut = 0;
    for (k, (&kind, &len)) in kinds.iter().zip(&lens).enumerate() {
        t += cuts[k] - prev_cut + spec.gap;
        prev_cut = cuts[k];
        let feature = rng.random_range(0..spec.m);
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let mag = match kind {
            AnomalyKind::Spike => spec.spike_magnitude,
            AnomalyKind::LevelShift => spec.shift_magnitude,
        };
        out.push(InjectedAnomaly {
            kind,
            feature,
            start: t,
            end: t + len,
            offset: sign * mag * spec.noise_std,
        });
        t += len;
    }
    out
}
