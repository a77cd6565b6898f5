//! Flat `key = value` run configuration.
//!
//! Lines starting with `#` and blank lines are ignored. Every key has a
//! default; unknown keys are rejected. [`RunConfig::to_text`] writes every
//! key, and parsing that text gives back an identical configuration.

use std::fmt::Display;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::generator::GeneratorArch;
use crate::hierarchy::HierarchySpec;
use crate::langevin::LangevinConfig;
use crate::rng::{derive_seed, Stream};
use crate::tasks::OcclusionSpec;
use crate::trainer::TrainConfig;
use crate::window::Windowing;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub levels: Vec<usize>,
    pub dims: Vec<usize>,
    pub sub_window_len: usize,
    pub step: usize,
    pub filter_multiplier: usize,
    pub max_filters: usize,
    pub langevin_train_steps: usize,
    pub langevin_test_steps: usize,
    pub step_size: f64,
    pub sigma: f64,
    pub lr: f64,
    pub iterations: usize,
    pub batch_size: usize,
    pub lr_decay: f64,
    pub n_decays: usize,
    pub masks_enabled: bool,
    pub standardize: bool,
    pub downsample: usize,
    pub occlusion_r: usize,
    pub occlusion_p: f64,
    pub occlude_train: bool,
    pub occlude_test: bool,
    /// Feature indices entering the score; empty means all.
    pub channels: Vec<usize>,
    pub workers: usize,
    pub checkpoint_every: usize,
    pub knn_k: usize,
    /// Observed prefix for forecasting; 0 means half the window.
    pub forecast_observed: usize,
    pub per_feature_scores: bool,
    pub adjusted: bool,
    pub single_threshold: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            levels: vec![1, 4],
            dims: vec![20, 5],
            sub_window_len: 64,
            step: 256,
            filter_multiplier: 32,
            max_filters: 256,
            langevin_train_steps: 25,
            langevin_test_steps: 500,
            step_size: 0.001,
            sigma: 0.025,
            lr: 1e-3,
            iterations: 1000,
            batch_size: 4,
            lr_decay: 0.8,
            n_decays: 3,
            masks_enabled: true,
            standardize: true,
            downsample: 1,
            occlusion_r: 5,
            occlusion_p: 0.0,
            occlude_train: true,
            occlude_test: false,
            channels: Vec::new(),
            workers: 1,
            checkpoint_every: 0,
            knn_k: 1,
            forecast_observed: 0,
            per_feature_scores: false,
            adjusted: false,
            single_threshold: false,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Validation(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Validation(format!("invalid boolean {value:?} for {key}"))),
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn list<T: Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key.trim() {
            "seed" => self.seed = parse(key, value)?,
            "levels" => self.levels = parse_list(key, value)?,
            "dims" => self.dims = parse_list(key, value)?,
            "sub_window_len" => self.sub_window_len = parse(key, value)?,
            "step" => self.step = parse(key, value)?,
            "filter_multiplier" => self.filter_multiplier = parse(key, value)?,
            "max_filters" => self.max_filters = parse(key, value)?,
            "langevin_train_steps" => self.langevin_train_steps = parse(key, value)?,
            "langevin_test_steps" => self.langevin_test_steps = parse(key, value)?,
            "step_size" => self.step_size = parse(key, value)?,
            "sigma" => self.sigma = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "iterations" => self.iterations = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "lr_decay" => self.lr_decay = parse(key, value)?,
            "n_decays" => self.n_decays = parse(key, value)?,
            "masks_enabled" => self.masks_enabled = parse_bool(key, value)?,
            "standardize" => self.standardize = parse_bool(key, value)?,
            "downsample" => self.downsample = parse(key, value)?,
            "occlusion_r" => self.occlusion_r = parse(key, value)?,
            "occlusion_p" => self.occlusion_p = parse(key, value)?,
            "occlude_train" => self.occlude_train = parse_bool(key, value)?,
            "occlude_test" => self.occlude_test = parse_bool(key, value)?,
            "channels" => self.channels = parse_list(key, value)?,
            "workers" => self.workers = parse(key, value)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, value)?,
            "knn_k" => self.knn_k = parse(key, value)?,
            "forecast_observed" => self.forecast_observed = parse(key, value)?,
            "per_feature_scores" => self.per_feature_scores = parse_bool(key, value)?,
            "adjusted" => self.adjusted = parse_bool(key, value)?,
            "single_threshold" => self.single_threshold = parse_bool(key, value)?,
            other => return Err(Error::Validation(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Every key with its current value, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("seed", self.seed.to_string()),
            ("levels", list(&self.levels)),
            ("dims", list(&self.dims)),
            ("sub_window_len", self.sub_window_len.to_string()),
            ("step", self.step.to_string()),
            ("filter_multiplier", self.filter_multiplier.to_string()),
            ("max_filters", self.max_filters.to_string()),
            ("langevin_train_steps", self.langevin_train_steps.to_string()),
            ("langevin_test_steps", self.langevin_test_steps.to_string()),
            ("step_size", self.step_size.to_string()),
            ("sigma", self.sigma.to_string()),
            ("lr", self.lr.to_string()),
            ("iterations", self.iterations.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("lr_decay", self.lr_decay.to_string()),
            ("n_decays", self.n_decays.to_string()),
            ("masks_enabled", self.masks_enabled.to_string()),
            ("standardize", self.standardize.to_string()),
            ("downsample", self.downsample.to_string()),
            ("occlusion_r", self.occlusion_r.to_string()),
            ("occlusion_p", self.occlusion_p.to_string()),
            ("occlude_train", self.occlude_train.to_string()),
            ("occlude_test", self.occlude_test.to_string()),
            ("channels", list(&self.channels)),
            ("workers", self.workers.to_string()),
            ("checkpoint_every", self.checkpoint_every.to_string()),
            ("knn_k", self.knn_k.to_string()),
            ("forecast_observed", self.forecast_observed.to_string()),
            ("per_feature_scores", self.per_feature_scores.to_string()),
            ("adjusted", self.adjusted.to_string()),
            ("single_threshold", self.single_threshold.to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Applies the lines of a config file on top of `self`.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.into(),
                line: n + 1,
                msg: "expected key = value".into(),
            })?;
            self.set(k, v).map_err(|e| Error::Parse {
                path: origin.into(),
                line: n + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text, "<config>")?;
        Ok(cfg)
    }

    pub fn hierarchy(&self) -> Result<HierarchySpec> {
        HierarchySpec::new(self.levels.clone(), self.dims.clone(), self.sub_window_len)
    }

    pub fn windowing(&self) -> Windowing {
        Windowing {
            window_len: self.levels.last().copied().unwrap_or(0) * self.sub_window_len,
            step: self.step,
        }
    }

    pub fn arch(&self, n_features: usize) -> GeneratorArch {
        GeneratorArch {
            n_features,
            sub_window_len: self.sub_window_len,
            filter_multiplier: self.filter_multiplier,
            max_filters: self.max_filters,
            state_dim: self.dims.iter().sum(),
        }
    }

    pub fn langevin_train(&self) -> LangevinConfig {
        LangevinConfig {
            n_steps: self.langevin_train_steps,
            step_size: self.step_size,
            sigma: self.sigma,
            noise_enabled: true,
        }
    }

    pub fn langevin_test(&self) -> LangevinConfig {
        LangevinConfig {
            n_steps: self.langevin_test_steps,
            step_size: self.step_size,
            sigma: self.sigma,
            noise_enabled: false,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            iterations: self.iterations,
            batch_size: self.batch_size,
            lr: self.lr,
            lr_decay: self.lr_decay,
            n_decays: self.n_decays,
            langevin: self.langevin_train(),
            masks_enabled: self.masks_enabled,
            seed: self.seed,
        }
    }

    /// Occlusion of the training split (`index` 0) or the test split (1).
    pub fn occlusion(&self, index: u64) -> OcclusionSpec {
        OcclusionSpec {
            r: self.occlusion_r,
            p: self.occlusion_p,
            seed: derive_seed(self.seed, Stream::Occlusion, index),
        }
    }

    pub fn channels(&self) -> Option<&[usize]> {
        (!self.channels.is_empty()).then_some(&self.channels)
    }

    pub fn validate(&self) -> Result<()> {
        let spec = self.hierarchy()?;
        self.arch(1).validate()?;
        self.train_config().validate()?;
        self.langevin_test().validate()?;
        self.occlusion(0).validate()?;
        let w = spec.window_len();
        let checks = [
            (self.step >= 1, "step must be >= 1".to_string()),
            (self.downsample >= 1, "downsample must be >= 1".into()),
            (self.workers >= 1, "workers must be >= 1".into()),
            (self.knn_k >= 1, "knn_k must be >= 1".into()),
            (
                self.forecast_observed < w,
                format!("forecast_observed must be below the window length {w}"),
            ),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::Validation(msg));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_hyperparameters() {
        let c = RunConfig::default();
        assert_eq!(c.sub_window_len, 64);
        assert_eq!(c.levels, vec![1, 4]);
        assert_eq!(c.dims, vec![20, 5]);
        assert_eq!(c.step, 256);
        assert_eq!((c.filter_multiplier, c.max_filters), (32, 256));
        assert_eq!((c.langevin_train_steps, c.langevin_test_steps), (25, 500));
        assert_eq!((c.step_size, c.sigma), (0.001, 0.025));
        assert_eq!((c.lr, c.iterations, c.batch_size), (1e-3, 1000, 4));
        assert_eq!((c.lr_decay, c.n_decays), (0.8, 3));
        assert_eq!(c.windowing().window_len, 256);
        c.validate().unwrap();
    }

    #[test]
    fn text_roundtrip() {
        let mut c = RunConfig::default();
        c.set("channels", "0, 3").unwrap();
        c.set("lr", "0.00037").unwrap();
        c.set("occlusion_p", "0.1").unwrap();
        let back = RunConfig::from_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn file_syntax() {
        let c = RunConfig::from_text("# comment\n\nseed = 9\n  batch_size=2  \n").unwrap();
        assert_eq!((c.seed, c.batch_size), (9, 2));
        let err = RunConfig::from_text("seed = 1\nbogus = 2\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(RunConfig::from_text("seed 1").is_err());
        assert!(RunConfig::from_text("masks_enabled = maybe").is_err());
    }

    #[test]
    fn validation_catches_bad_values() {
        for (k, v) in [
            ("levels", "4,1"),
            ("lr_decay", "1.5"),
            ("step", "0"),
            ("occlusion_p", "2"),
            ("batch_size", "0"),
        ] {
            let mut c = RunConfig::default();
            c.set(k, v).unwrap();
            assert!(c.validate().is_err(), "{k} = {v}");
        }
    }
}
