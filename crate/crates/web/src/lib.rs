//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each exported function has a plain Rust twin (`*_values`) so the logic is
//! testable on the host.

use wasm_bindgen::prelude::*;

use hierlat::baselines::baseline_mean_deviation;
use hierlat::eval::{best_f1, evaluate_at, point_adjust};
use hierlat::generator::{build_generator_with_std, generate_window, GeneratorArch, GeneratorParams};
use hierlat::nn::Mode;
use hierlat::rng::{stream_rng, Stream};
use hierlat::tasks::{make_occlusion_mask, synth_generate, OcclusionSpec, SynthSpec};
use hierlat::{HierarchySpec, LatentState};

pub const DEMO_FEATURES: usize = 3;
pub const DEMO_SUB_LEN: usize = 16;

fn demo_spec() -> HierarchySpec {
    HierarchySpec::new(vec![1, 4], vec![6, 3], DEMO_SUB_LEN).expect("valid demo hierarchy")
}

fn demo_generator(spec: &HierarchySpec, seed: u64) -> hierlat::Result<GeneratorParams> {
    let arch = GeneratorArch {
        n_features: DEMO_FEATURES,
        sub_window_len: DEMO_SUB_LEN,
        filter_multiplier: 8,
        max_filters: 32,
        state_dim: spec.state_dim(),
    };
    build_generator_with_std(arch, seed, 0.3)
}

/// Window from a random generator and prior draw, then again after adding
/// `delta` to every coordinate of `z^level[index]`. Returns both windows,
/// each `[features, window]` row-major, concatenated.
pub fn perturbation_values(level: usize, index: usize, delta: f64, seed: u64) -> hierlat::Result<Vec<f64>> {
    let spec = demo_spec();
    let layout = spec.layout();
    if level >= layout.n_levels() || index >= layout.counts[level] {
        return Err(hierlat::Error::Validation(format!(
            "level {level} has {} latent vectors; index {index} is out of range",
            layout.counts.get(level).copied().unwrap_or(0)
        )));
    }
    let params = demo_generator(&spec, seed)?;
    let z = LatentState::sample_prior(&layout, &mut stream_rng(seed, Stream::Synth, 0));
    let mut moved = z.clone();
    moved.vector_mut(level, index).iter_mut().for_each(|v| *v += delta);
    let mut out = generate_window(&z, &params, Mode::Eval)?.into_data();
    out.extend(generate_window(&moved, &params, Mode::Eval)?.into_data());
    Ok(out)
}

/// Occlusion mask as 0 (hidden) / 1 (kept), `[features, len]` row-major.
pub fn occlusion_values(features: usize, len: usize, r: usize, p: f64, seed: u64) -> hierlat::Result<Vec<u8>> {
    let mask = make_occlusion_mask(features, len, &OcclusionSpec { r, p, seed })?;
    Ok(mask.as_slice().iter().map(|&b| u8::from(b)).collect())
}

fn js(e: hierlat::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = demoShape)]
pub fn demo_shape() -> Vec<usize> {
    let spec = demo_spec();
    let mut v = vec![DEMO_FEATURES, spec.window_len(), DEMO_SUB_LEN];
    v.extend(&spec.levels);
    v
}

#[wasm_bindgen]
pub fn perturb(level: usize, index: usize, delta: f64, seed: u32) -> Result<Vec<f64>, JsError> {
    perturbation_values(level, index, delta, seed.into()).map_err(js)
}

#[wasm_bindgen(js_name = occlusionMask)]
pub fn occlusion_mask(features: usize, len: usize, r: usize, p: f64, seed: u32) -> Result<Vec<u8>, JsError> {
    occlusion_values(features, len, r, p, seed.into()).map_err(js)
}

/// Synthetic test series scored by the mean-deviation baseline, for picking
/// thresholds interactively.
#[wasm_bindgen]
pub struct Explorer {
    scores: Vec<f64>,
    labels: Vec<bool>,
}

impl Explorer {
    pub fn build(seed: u64) -> hierlat::Result<Self> {
        let spec = SynthSpec {
            m: DEMO_FEATURES,
            t_train: 3000,
            t_test: 1500,
            n_spikes: 4,
            n_level_shifts: 3,
            spike_magnitude: 20.0,
            shift_magnitude: 20.0,
            seed,
            ..SynthSpec::default()
        };
        let data = synth_generate(&spec)?;
        let scores = baseline_mean_deviation(&data.train, &data.test)?.scores;
        let labels = data.test.labels.unwrap_or_default();
        Ok(Self { scores, labels })
    }

    pub fn predictions_at(&self, threshold: f64, adjusted: bool) -> hierlat::Result<Vec<u8>> {
        let pred: Vec<bool> = self.scores.iter().map(|&s| s >= threshold).collect();
        let pred = if adjusted {
            point_adjust(&pred, &self.labels)?
        } else {
            pred
        };
        Ok(pred.into_iter().map(u8::from).collect())
    }
}

#[wasm_bindgen]
impl Explorer {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32) -> Result<Explorer, JsError> {
        Self::build(seed.into()).map_err(js)
    }

    pub fn scores(&self) -> Vec<f64> {
        self.scores.clone()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.labels.iter().map(|&b| u8::from(b)).collect()
    }

    pub fn predictions(&self, threshold: f64, adjusted: bool) -> Result<Vec<u8>, JsError> {
        self.predictions_at(threshold, adjusted).map_err(js)
    }

    /// `[precision, recall, f1, tp, fp, fn]`
    pub fn evaluate(&self, threshold: f64, adjusted: bool) -> Result<Vec<f64>, JsError> {
        let r = evaluate_at(&self.scores, &self.labels, threshold, adjusted).map_err(js)?;
        Ok(vec![
            r.precision,
            r.recall,
            r.f1,
            r.tp as f64,
            r.fp as f64,
            r.fn_ as f64,
        ])
    }

    /// `[precision, recall, f1, threshold]` at the best threshold.
    pub fn best(&self, adjusted: bool) -> Result<Vec<f64>, JsError> {
        let r = best_f1(&self.scores, &self.labels, adjusted).map_err(js)?;
        Ok(vec![r.precision, r.recall, r.f1, r.threshold])
    }
}
