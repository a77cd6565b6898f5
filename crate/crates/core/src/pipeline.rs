//! Per-entity train and detect pipelines shared by the command line and the
//! end-to-end tests.

use std::io::{Read, Write};

use crate::config::RunConfig;
use crate::data::{downsample, SeriesFrame, Standardizer};
use crate::detect::{normalize_scores, reconstruct_stream, ScoreSeries};
use crate::error::{Error, Result};
use crate::generator::{read_params, write_params, GeneratorParams};
use crate::hierarchy::HierarchySpec;
use crate::io_util::{read_u32, read_u64, read_usizes, write_usizes};
use crate::tasks::{make_occlusion_mask, occlude};
use crate::tensor::Tensor;
use crate::trainer::{Trainer, TrainingRun};
use crate::window::{make_windows, Windowing};

/// Everything detection needs from training.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub spec: HierarchySpec,
    pub step: usize,
    pub standardizer: Option<Standardizer>,
    pub params: GeneratorParams,
}

impl Model {
    pub fn windowing(&self) -> Windowing {
        Windowing {
            window_len: self.spec.window_len(),
            step: self.step,
        }
    }

    pub fn n_features(&self) -> usize {
        self.params.arch.n_features
    }
}

const MODEL_MAGIC: &[u8; 4] = b"HLMD";
const MODEL_VERSION: u32 = 1;

pub fn write_model(w: &mut impl Write, model: &Model) -> Result<()> {
    w.write_all(MODEL_MAGIC)?;
    w.write_all(&MODEL_VERSION.to_le_bytes())?;
    write_usizes(w, &model.spec.levels)?;
    write_usizes(w, &model.spec.dims)?;
    w.write_all(&(model.spec.sub_window_len as u64).to_le_bytes())?;
    w.write_all(&(model.step as u64).to_le_bytes())?;
    match &model.standardizer {
        Some(s) => {
            w.write_all(&[1])?;
            s.write(w)?;
        }
        None => w.write_all(&[0])?,
    }
    write_params(w, &model.params)
}

pub fn read_model(r: &mut impl Read) -> Result<Model> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MODEL_MAGIC {
        return Err(Error::Format("not a model file".into()));
    }
    let version = read_u32(r)?;
    if version != MODEL_VERSION {
        return Err(Error::Format(format!("unsupported model version {version}")));
    }
    let levels = read_usizes(r)?;
    let dims = read_usizes(r)?;
    let sub = read_u64(r)? as usize;
    let spec = HierarchySpec::new(levels, dims, sub).map_err(|e| Error::Format(e.to_string()))?;
    let step = read_u64(r)? as usize;
    let mut flag = [0u8; 1];
    r.read_exact(&mut flag)?;
    let standardizer = match flag[0] {
        0 => None,
        1 => Some(Standardizer::read(r)?),
        f => return Err(Error::Format(format!("bad standardizer flag {f}"))),
    };
    let params = read_params(r)?;
    if params.arch.state_dim != spec.state_dim() || params.arch.sub_window_len != spec.sub_window_len {
        return Err(Error::Format("model parameters do not match its hierarchy".into()));
    }
    if standardizer
        .as_ref()
        .is_some_and(|s| s.mean.len() != params.arch.n_features)
    {
        return Err(Error::Format("standardizer does not match the feature count".into()));
    }
    Ok(Model {
        spec,
        step,
        standardizer,
        params,
    })
}

/// Downsampling, standardization and optional training occlusion, in that
/// order. Returns the prepared frame and the fitted statistics.
pub fn prepare_train(train: &SeriesFrame, cfg: &RunConfig) -> Result<(SeriesFrame, Option<Standardizer>)> {
    let frame = downsample(train, cfg.downsample)?;
    let (mut frame, st) = if cfg.standardize {
        let st = Standardizer::fit(&frame)?;
        (st.apply(&frame)?, Some(st))
    } else {
        (frame, None)
    };
    if cfg.occlude_train && cfg.occlusion_p > 0.0 {
        let mask = make_occlusion_mask(frame.n_features(), frame.len(), &cfg.occlusion(0))?;
        frame = occlude(&frame, &mask)?;
    }
    Ok((frame, st))
}

/// Test-side counterpart of [`prepare_train`], using the model's statistics.
pub fn prepare_test(test: &SeriesFrame, model: &Model, cfg: &RunConfig) -> Result<SeriesFrame> {
    if test.n_features() != model.n_features() {
        return Err(Error::Data(format!(
            "entity {}: {} features, model expects {}",
            test.entity_id,
            test.n_features(),
            model.n_features()
        )));
    }
    let mut frame = downsample(test, cfg.downsample)?;
    if cfg.occlude_test && cfg.occlusion_p > 0.0 {
        let mask = make_occlusion_mask(frame.n_features(), frame.len(), &cfg.occlusion(1))?;
        frame = occlude(&frame, &mask)?;
    }
    match &model.standardizer {
        Some(st) => st.apply(&frame),
        None => Ok(frame),
    }
}

/// Builds a trainer over the prepared training frame.
pub fn build_trainer(train: &SeriesFrame, cfg: &RunConfig) -> Result<(Trainer, Option<Standardizer>)> {
    cfg.validate()?;
    let (frame, st) = prepare_train(train, cfg)?;
    let spec = cfg.hierarchy()?;
    let windows = make_windows(&frame, cfg.windowing())?;
    let trainer = Trainer::new(windows, &spec, cfg.arch(frame.n_features()), cfg.train_config())?;
    Ok((trainer, st))
}

pub fn train_model(train: &SeriesFrame, cfg: &RunConfig) -> Result<(Model, TrainingRun)> {
    let (trainer, st) = build_trainer(train, cfg)?;
    let run = trainer.run_with(0, |_| Ok(()))?;
    Ok((finish_model(cfg, st, &run)?, run))
}

pub fn finish_model(cfg: &RunConfig, standardizer: Option<Standardizer>, run: &TrainingRun) -> Result<Model> {
    Ok(Model {
        spec: cfg.hierarchy()?,
        step: cfg.step,
        standardizer,
        params: run.params.clone(),
    })
}

#[derive(Debug, Clone)]
pub struct Detection {
    /// Reconstruction in the original units.
    pub reconstruction: Tensor,
    pub raw: ScoreSeries,
    pub normalized: ScoreSeries,
    /// Labels after downsampling, when the test frame had any.
    pub labels: Option<Vec<bool>>,
}

pub fn detect_series(model: &Model, test: &SeriesFrame, cfg: &RunConfig) -> Result<Detection> {
    let frame = prepare_test(test, model, cfg)?;
    let wing = model.windowing();
    let (recon, raw) = reconstruct_stream(
        &frame,
        &model.params,
        &model.spec,
        wing,
        &cfg.langevin_test(),
        cfg.channels(),
        cfg.seed,
    )?;
    let (normalized, _) = normalize_scores(&raw, wing)?;
    let reconstruction = match &model.standardizer {
        Some(st) => st.invert_values(&recon),
        None => recon,
    };
    Ok(Detection {
        reconstruction,
        raw,
        normalized,
        labels: frame.labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> RunConfig {
        let mut c = RunConfig::default();
        for (k, v) in [
            ("levels", "1,2"),
            ("dims", "3,2"),
            ("sub_window_len", "8"),
            ("step", "16"),
            ("filter_multiplier", "4"),
            ("max_filters", "8"),
            ("iterations", "6"),
            ("langevin_train_steps", "3"),
            ("langevin_test_steps", "5"),
        ] {
            c.set(k, v).unwrap();
        }
        c
    }

    fn frame(t: usize, shift: f64) -> SeriesFrame {
        SeriesFrame::from_values("e", Tensor::from_fn(&[2, t], |i| (i as f64 * 0.37).sin() * 3.0 + shift)).unwrap()
    }

    #[test]
    fn model_roundtrip() {
        let (model, run) = train_model(&frame(80, 5.0), &small_cfg()).unwrap();
        assert_eq!(run.loss_history.len(), 6);
        let mut buf = Vec::new();
        write_model(&mut buf, &model).unwrap();
        assert_eq!(read_model(&mut buf.as_slice()).unwrap(), model);
        assert!(read_model(&mut &buf[..buf.len() - 3]).is_err());
    }

    #[test]
    fn detection_is_deterministic_and_in_original_units() {
        let cfg = small_cfg();
        let (model, _) = train_model(&frame(80, 5.0), &cfg).unwrap();
        let a = detect_series(&model, &frame(40, 5.0), &cfg).unwrap();
        let b = detect_series(&model, &frame(40, 5.0), &cfg).unwrap();
        assert_eq!(a.raw, b.raw);
        assert_eq!(a.reconstruction, b.reconstruction);
        let mean = a.reconstruction.sum() / a.reconstruction.len() as f64;
        assert!((mean - 5.0).abs() < 3.0, "{mean}");
        let wrong = SeriesFrame::from_values("x", Tensor::zeros(&[3, 40])).unwrap();
        assert!(detect_series(&model, &wrong, &cfg).is_err());
    }

    #[test]
    fn training_occlusion_hides_cells() {
        let mut cfg = small_cfg();
        let (_, clean) = prepare_train(&frame(80, 2.0), &cfg).unwrap();
        cfg.occlusion_p = 1.0;
        let (f, st) = prepare_train(&frame(80, 2.0), &cfg).unwrap();
        assert_eq!(f.mask.count_observed(), 0);
        assert_eq!(st, clean);
        cfg.occlusion_p = 0.5;
        let (f, _) = prepare_train(&frame(80, 0.0), &cfg).unwrap();
        assert!(f.mask.count_observed() < 160);
    }
}
