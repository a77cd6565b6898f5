use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;

use hierlat::baselines::{baseline_knn, baseline_mean_deviation};
use hierlat::config::RunConfig;
use hierlat::data::{load_dataset, load_frame, read_labels, write_dataset, EntityData, SeriesFrame};
use hierlat::detect::{normalize_scores, write_scores_csv, ScoreSeries};
use hierlat::eval::{best_f1, best_f1_multi, evaluate_at, format_report, EvalReport};
use hierlat::hierarchy::write_latents;
use hierlat::langevin::map_reconstruct;
use hierlat::pipeline::{build_trainer, detect_series, finish_model, prepare_test, prepare_train, write_model, Model};
use hierlat::rng::{stream_rng, Stream};
use hierlat::tasks::{
    forecast as forecast_window, interpolate_latents, make_occlusion_mask, occlude as occlude_frame, synth_generate,
    SynthSpec,
};
use hierlat::trainer::write_loss_csv;
use hierlat::window::make_windows;
use hierlat::{Error, Tensor};

use crate::error::CliError;
use crate::files::{create, load_model, model_path, open, parallel_map, write_with};
use crate::BaselineKind;

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset directory (train/, test/, ...) or a single CSV file.
    #[arg(long)]
    data: PathBuf,
    /// Output directory for models, loss curves, latents and checkpoints.
    #[arg(long)]
    out: PathBuf,
    /// Only this entity.
    #[arg(long)]
    entity: Option<String>,
    /// Continue from `<out>/<entity>.ckpt` when it exists.
    #[arg(long)]
    resume: bool,
    /// Training iterations (same as --set iterations=N).
    #[arg(long)]
    iterations: Option<usize>,
    /// Checkpoint every N iterations (same as --set checkpoint_every=N).
    #[arg(long)]
    checkpoint_every: Option<usize>,
}

impl TrainArgs {
    pub fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut v = Vec::new();
        if let Some(n) = self.iterations {
            v.push(("iterations", n.to_string()));
        }
        if let Some(n) = self.checkpoint_every {
            v.push(("checkpoint_every", n.to_string()));
        }
        v
    }
}

fn select<'a>(entities: &'a [EntityData], only: Option<&str>) -> Result<Vec<&'a EntityData>, CliError> {
    let picked: Vec<&EntityData> = entities.iter().filter(|e| only.is_none_or(|id| e.id == id)).collect();
    if picked.is_empty() {
        return Err(Error::Data(format!("no entity {:?} in the dataset", only.unwrap_or(""))).into());
    }
    Ok(picked)
}

pub fn train(args: &TrainArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let data = load_dataset(&args.data)?;
    let entities = select(&data, args.entity.as_deref())?;
    let entities: Vec<&EntityData> = entities.into_iter().filter(|e| e.train.is_some()).collect();
    if entities.is_empty() {
        return Err(Error::Data("dataset has no training series".into()).into());
    }
    fs::create_dir_all(&args.out)?;
    write_with(&args.out.join("config.txt"), |w| {
        Ok(w.write_all(cfg.to_text().as_bytes())?)
    })?;
    parallel_map(&entities, cfg.workers, |e| train_entity(e, args, cfg))?;
    Ok(())
}

fn train_entity(e: &EntityData, args: &TrainArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let frame = e.train.as_ref().expect("filtered");
    log::info!(
        "entity {}: training on {} timestamps x {} features",
        e.id,
        frame.len(),
        frame.n_features()
    );
    let (mut trainer, st) = build_trainer(frame, cfg)?;
    let ckpt = args.out.join(format!("{}.ckpt", e.id));
    if args.resume && ckpt.is_file() {
        trainer.restore_checkpoint(&mut open(&ckpt)?)?;
        log::info!("entity {}: resumed at iteration {}", e.id, trainer.iteration);
    }
    let every = cfg.checkpoint_every;
    let run = trainer.run_with(every, |tr| {
        let mut w = create(&ckpt).map_err(|e| Error::Data(e.to_string()))?;
        tr.save_checkpoint(&mut w)?;
        w.flush()?;
        log::debug!("checkpoint at iteration {}", tr.iteration);
        Ok(())
    })?;
    log::info!(
        "entity {}: final loss {:.6}, inference {:.1}s, learning {:.1}s",
        e.id,
        run.loss_history.last().copied().unwrap_or(f64::NAN),
        run.inference_seconds,
        run.learning_seconds
    );
    let model = finish_model(cfg, st, &run)?;
    write_with(&args.out.join(format!("{}.model", e.id)), |w| write_model(w, &model))?;
    write_with(&args.out.join(format!("{}.loss.csv", e.id)), |w| {
        write_loss_csv(w, &run)
    })?;
    write_with(&args.out.join(format!("{}.latents", e.id)), |w| {
        write_latents(w, &run.latents, &model.spec.layout())
    })?;
    Ok(())
}

#[derive(Args, Debug)]
pub struct DetectArgs {
    /// Model directory written by `train`, or one model file.
    #[arg(long)]
    model: PathBuf,
    /// Dataset directory or a single CSV file of test values.
    #[arg(long)]
    data: PathBuf,
    /// Output directory for `<entity>.scores.csv`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    entity: Option<String>,
    /// Also write `<entity>.recon.csv` with the reconstruction.
    #[arg(long)]
    reconstruction: bool,
}

/// Test frame of an entity; a bare CSV file counts as test data here.
fn test_frame(e: &EntityData, data: &Path) -> Option<SeriesFrame> {
    if data.is_file() {
        e.train.clone()
    } else {
        e.test.clone()
    }
}

pub fn detect(args: &DetectArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let data = load_dataset(&args.data)?;
    let entities: Vec<(String, SeriesFrame)> = select(&data, args.entity.as_deref())?
        .into_iter()
        .filter_map(|e| test_frame(e, &args.data).map(|f| (e.id.clone(), f)))
        .collect();
    if entities.is_empty() {
        return Err(Error::Data("dataset has no test series".into()).into());
    }
    fs::create_dir_all(&args.out)?;
    parallel_map(&entities, cfg.workers, |(id, frame)| {
        let model = load_model(&model_path(&args.model, id))?;
        log::info!("entity {id}: scoring {} timestamps", frame.len());
        let det = detect_series(&model, frame, cfg)?;
        write_with(&args.out.join(format!("{id}.scores.csv")), |w| {
            write_scores_csv(w, &det.raw, &det.normalized, cfg.per_feature_scores)
        })?;
        if args.reconstruction {
            let mut recon = SeriesFrame::from_values(id.as_str(), det.reconstruction.clone())?;
            recon.feature_names = frame.feature_names.clone();
            write_with(&args.out.join(format!("{id}.recon.csv")), |w| {
                hierlat::data::write_values_csv(w, &recon)
            })?;
        }
        Ok(())
    })?;
    Ok(())
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Directory of `<entity>.scores.csv` files, or one score file.
    #[arg(long)]
    scores: PathBuf,
    /// Label directory (or dataset root with test_label/), or one label file.
    #[arg(long)]
    labels: PathBuf,
    /// Apply point adjustment.
    #[arg(long)]
    adjusted: bool,
    /// One threshold over all entities' normalized scores.
    #[arg(long = "single-threshold-across-entities")]
    single_threshold: bool,
    /// Also write the report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl EvaluateArgs {
    pub fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut v = Vec::new();
        if self.adjusted {
            v.push(("adjusted", "true".into()));
        }
        if self.single_threshold {
            v.push(("single_threshold", "true".into()));
        }
        v
    }
}

struct ScoreFile {
    id: String,
    raw: Vec<f64>,
    normalized: Vec<f64>,
}

fn read_score_file(path: &Path, id: String) -> Result<ScoreFile, CliError> {
    let text = fs::read_to_string(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut raw = Vec::new();
    let mut normalized = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if n == 0 && line.starts_with("timestamp") || line.trim().is_empty() {
            continue;
        }
        let bad = |msg: &str| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            msg: msg.into(),
        };
        let mut it = line.split(',').skip(1);
        let mut next = || -> Result<f64, Error> {
            it.next()
                .ok_or_else(|| bad("missing score column"))?
                .trim()
                .parse()
                .map_err(|_| bad("score is not a number"))
        };
        raw.push(next()?);
        normalized.push(next()?);
    }
    Ok(ScoreFile { id, raw, normalized })
}

fn score_files(path: &Path) -> Result<Vec<ScoreFile>, CliError> {
    if path.is_file() {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("entity");
        let id = name.strip_suffix(".scores.csv").unwrap_or(name).to_owned();
        return Ok(vec![read_score_file(path, id)?]);
    }
    let mut out = Vec::new();
    let dir = fs::read_dir(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut paths: Vec<PathBuf> = dir.filter_map(|e| e.ok().map(|e| e.path())).collect();
    paths.sort();
    for p in paths {
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("").to_owned();
        if let Some(id) = name.strip_suffix(".scores.csv") {
            out.push(read_score_file(&p, id.to_owned())?);
        }
    }
    if out.is_empty() {
        return Err(Error::Data(format!("{}: no *.scores.csv files", path.display())).into());
    }
    Ok(out)
}

fn label_file(labels: &Path, id: &str) -> Result<PathBuf, CliError> {
    if labels.is_file() {
        return Ok(labels.to_path_buf());
    }
    for dir in [labels.to_path_buf(), labels.join("test_label")] {
        for ext in ["csv", "txt"] {
            let p = dir.join(format!("{id}.{ext}"));
            if p.is_file() {
                return Ok(p);
            }
        }
    }
    Err(Error::Data(format!("no label file for entity {id} under {}", labels.display())).into())
}

/// Labels at score resolution: OR-pooled when scores were downsampled.
fn align_labels(labels: Vec<bool>, n_scores: usize, factor: usize, id: &str) -> Result<Vec<bool>, CliError> {
    if labels.len() == n_scores {
        return Ok(labels);
    }
    if factor > 1 && labels.len().div_ceil(factor) == n_scores {
        return Ok(labels.chunks(factor).map(|c| c.iter().any(|&l| l)).collect());
    }
    Err(Error::Data(format!("entity {id}: {} labels for {n_scores} scores", labels.len())).into())
}

pub fn evaluate(_args: &EvaluateArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let args = _args;
    let files = score_files(&args.scores)?;
    let labels: Vec<Vec<bool>> = files
        .iter()
        .map(|f| {
            align_labels(
                read_labels(&label_file(&args.labels, &f.id)?)?,
                f.raw.len(),
                cfg.downsample,
                &f.id,
            )
        })
        .collect::<Result<_, _>>()?;
    let adjusted = cfg.adjusted;
    let (overall, per_entity) = if cfg.single_threshold {
        let pairs: Vec<(&[f64], &[bool])> = files
            .iter()
            .zip(&labels)
            .map(|(f, l)| (&f.normalized[..], &l[..]))
            .collect();
        let best = best_f1_multi(&pairs, adjusted)?;
        let per = files
            .iter()
            .zip(&labels)
            .map(|(f, l)| Ok((f.id.clone(), evaluate_at(&f.normalized, l, best.threshold, adjusted)?)))
            .collect::<Result<Vec<_>, Error>>()?;
        (best, per)
    } else {
        let per = files
            .iter()
            .zip(&labels)
            .map(|(f, l)| {
                let scores = if files.len() == 1 { &f.raw } else { &f.normalized };
                Ok((f.id.clone(), best_f1(scores, l, adjusted)?))
            })
            .collect::<Result<Vec<_>, Error>>()?;
        let (tp, fp, fn_) = per
            .iter()
            .fold((0, 0, 0), |a, (_, r)| (a.0 + r.tp, a.1 + r.fp, a.2 + r.fn_));
        let threshold = if per.len() == 1 { per[0].1.threshold } else { f64::NAN };
        (EvalReport::from_counts(tp, fp, fn_, threshold, adjusted), per)
    };
    let report = format_report(&overall, &per_entity);
    print!("{report}");
    if let Some(out) = &args.out {
        write_with(out, |w| Ok(w.write_all(report.as_bytes())?))?;
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct OccludeArgs {
    #[arg(long)]
    data: PathBuf,
    /// Output dataset directory (same layout, with mask files).
    #[arg(long)]
    out: PathBuf,
    /// Number of segments (same as --set occlusion_r=N).
    #[arg(long)]
    r: Option<usize>,
    /// Occlusion probability (same as --set occlusion_p=P).
    #[arg(long)]
    p: Option<f64>,
}

impl OccludeArgs {
    pub fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut v = Vec::new();
        if let Some(r) = self.r {
            v.push(("occlusion_r", r.to_string()));
        }
        if let Some(p) = self.p {
            v.push(("occlusion_p", p.to_string()));
        }
        v
    }
}

pub fn occlude(args: &OccludeArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let data = load_dataset(&args.data)?;
    let apply = |f: &Option<SeriesFrame>, on: bool, index: u64| -> Result<Option<SeriesFrame>, Error> {
        match f {
            Some(frame) if on => {
                let mask = make_occlusion_mask(frame.n_features(), frame.len(), &cfg.occlusion(index))?;
                Ok(Some(occlude_frame(frame, &mask)?))
            }
            other => Ok(other.clone()),
        }
    };
    let out: Vec<EntityData> = data
        .iter()
        .map(|e| {
            Ok(EntityData {
                id: e.id.clone(),
                train: apply(&e.train, cfg.occlude_train, 0)?,
                test: apply(&e.test, cfg.occlude_test, 1)?,
            })
        })
        .collect::<Result<_, Error>>()?;
    let hidden: usize = out
        .iter()
        .flat_map(|e| [&e.train, &e.test])
        .flatten()
        .map(|f| f.mask.as_slice().len() - f.mask.count_observed())
        .sum();
    write_dataset(&args.out, &out)?;
    log::info!("wrote {} ({hidden} hidden cells)", args.out.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct ForecastArgs {
    /// Model file (or directory plus --entity).
    #[arg(long)]
    model: PathBuf,
    /// CSV file with the series to forecast from.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    entity: Option<String>,
    /// Window index within the series.
    #[arg(long, default_value_t = 0)]
    window: usize,
    /// Observed prefix length (same as --set forecast_observed=N; 0 = half).
    #[arg(long)]
    observed: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

impl ForecastArgs {
    pub fn overrides(&self) -> Vec<(&'static str, String)> {
        self.observed
            .map(|n| vec![("forecast_observed", n.to_string())])
            .unwrap_or_default()
    }
}

fn single_series(data: &Path, id: Option<&str>) -> Result<(String, SeriesFrame), CliError> {
    if data.is_file() {
        let id = id
            .map(str::to_owned)
            .unwrap_or_else(|| data.file_stem().and_then(|s| s.to_str()).unwrap_or("entity").to_owned());
        let frame = load_frame(data, None, None, &id)?;
        return Ok((id, frame));
    }
    let ds = load_dataset(data)?;
    let e = select(&ds, id)?[0];
    let frame = e
        .test
        .clone()
        .or_else(|| e.train.clone())
        .expect("loaded entity has a series");
    Ok((e.id.clone(), frame))
}

fn window_of(model: &Model, frame: &SeriesFrame, index: usize) -> Result<Tensor, CliError> {
    let windows = make_windows(frame, model.windowing())?;
    let n = windows.len();
    windows
        .into_iter()
        .nth(index)
        .map(|w| w.values)
        .ok_or_else(|| Error::Index { index, limit: n }.into())
}

fn original_units(model: &Model, x: &Tensor) -> Tensor {
    match &model.standardizer {
        Some(st) => st.invert_values(x),
        None => x.clone(),
    }
}

pub fn forecast(args: &ForecastArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let (id, frame) = single_series(&args.data, args.entity.as_deref())?;
    let model = load_model(&model_path(&args.model, &id))?;
    let prepared = prepare_test(&frame, &model, cfg)?;
    let window = window_of(&model, &prepared, args.window)?;
    let w = model.spec.window_len();
    let observed = if cfg.forecast_observed == 0 {
        w / 2
    } else {
        cfg.forecast_observed
    };
    let mut rng = stream_rng(cfg.seed, Stream::Detect, args.window as u64);
    let fc = forecast_window(
        &window,
        observed,
        &model.params,
        &model.spec,
        &cfg.langevin_test(),
        &mut rng,
    )?;
    let m = model.n_features();
    let hidden = (m * (w - observed)) as f64;
    let mse: f64 = (0..m)
        .flat_map(|i| (observed..w).map(move |c| (i, c)))
        .map(|(i, c)| (fc.at2(i, c) - window.at2(i, c)).powi(2))
        .sum::<f64>()
        / hidden;
    log::info!(
        "forecast of {} steps, standardized MSE over the hidden part {mse:.6}",
        w - observed
    );
    let actual = original_units(&model, &window);
    let fc = original_units(&model, &fc);
    write_with(&args.out, |out| {
        let mut header = vec!["offset".to_string(), "observed".to_string()];
        header.extend((0..m).map(|i| format!("actual_{i}")));
        header.extend((0..m).map(|i| format!("forecast_{i}")));
        writeln!(out, "{}", header.join(","))?;
        for c in 0..w {
            let mut row = vec![c.to_string(), u8::from(c < observed).to_string()];
            row.extend((0..m).map(|i| actual.at2(i, c).to_string()));
            row.extend((0..m).map(|i| fc.at2(i, c).to_string()));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    })
}

#[derive(Args, Debug)]
pub struct InterpolateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    entity: Option<String>,
    /// First window index.
    #[arg(long)]
    from: usize,
    /// Second window index.
    #[arg(long)]
    to: usize,
    /// Comma-separated mixing weights; values outside [0, 1] extrapolate.
    #[arg(
        long,
        value_delimiter = ',',
        allow_negative_numbers = true,
        default_value = "0,0.25,0.5,0.75,1"
    )]
    alphas: Vec<f64>,
    #[arg(long)]
    out: PathBuf,
}

pub fn interpolate(args: &InterpolateArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let (id, frame) = single_series(&args.data, args.entity.as_deref())?;
    let model = load_model(&model_path(&args.model, &id))?;
    let prepared = prepare_test(&frame, &model, cfg)?;
    let layout = model.spec.layout();
    let infer = |k: usize| -> Result<_, CliError> {
        let w = window_of(&model, &prepared, k)?;
        let mask = hierlat::Mask::observed(w.shape()[0], w.shape()[1]);
        let mut rng = stream_rng(cfg.seed, Stream::Detect, k as u64);
        Ok(map_reconstruct(&w, &mask, &model.params, &layout, &cfg.langevin_test(), &mut rng)?.0)
    };
    let za = infer(args.from)?;
    let zb = infer(args.to)?;
    let windows = interpolate_latents(&za, &zb, &args.alphas, &model.params)?;
    let m = model.n_features();
    write_with(&args.out, |out| {
        let mut header = vec!["alpha".to_string(), "offset".to_string()];
        header.extend((0..m).map(|i| format!("feature_{i}")));
        writeln!(out, "{}", header.join(","))?;
        for (alpha, w) in args.alphas.iter().zip(&windows) {
            let w = original_units(&model, w);
            for c in 0..w.shape()[1] {
                let mut row = vec![alpha.to_string(), c.to_string()];
                row.extend((0..m).map(|i| w.at2(i, c).to_string()));
                writeln!(out, "{}", row.join(","))?;
            }
        }
        Ok(())
    })
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = SynthSpec::default().m)]
    features: usize,
    #[arg(long, default_value_t = SynthSpec::default().t_train)]
    train_len: usize,
    #[arg(long, default_value_t = SynthSpec::default().t_test)]
    test_len: usize,
    #[arg(long, default_value_t = SynthSpec::default().n_spikes)]
    spikes: usize,
    #[arg(long, default_value_t = SynthSpec::default().n_level_shifts)]
    level_shifts: usize,
    #[arg(long, default_value_t = SynthSpec::default().noise_std)]
    noise_std: f64,
    /// Spike size in units of the noise standard deviation.
    #[arg(long, default_value_t = SynthSpec::default().spike_magnitude)]
    spike_magnitude: f64,
    /// Level-shift size in units of the noise standard deviation.
    #[arg(long, default_value_t = SynthSpec::default().shift_magnitude)]
    shift_magnitude: f64,
    /// Entity name used for the file names.
    #[arg(long, default_value = "synthetic")]
    name: String,
}

pub fn synth(args: &SynthArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let spec = SynthSpec {
        m: args.features,
        t_train: args.train_len,
        t_test: args.test_len,
        n_spikes: args.spikes,
        n_level_shifts: args.level_shifts,
        noise_std: args.noise_std,
        spike_magnitude: args.spike_magnitude,
        shift_magnitude: args.shift_magnitude,
        seed: cfg.seed,
        ..SynthSpec::default()
    };
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    log::info!("synthetic spec: {spec:?}");
    let data = synth_generate(&spec)?;
    let rename = |mut f: SeriesFrame| {
        f.entity_id = args.name.clone();
        f
    };
    write_dataset(
        &args.out,
        &[EntityData {
            id: args.name.clone(),
            train: Some(rename(data.train)),
            test: Some(rename(data.test)),
        }],
    )?;
    log::info!("wrote {} with {} anomalies", args.out.display(), data.anomalies.len());
    Ok(())
}

#[derive(Args, Debug)]
pub struct BaselineArgs {
    #[arg(value_enum)]
    kind: BaselineKind,
    /// Dataset directory with train/ and test/.
    #[arg(long)]
    data: PathBuf,
    /// Output directory for `<entity>.scores.csv`.
    #[arg(long)]
    out: PathBuf,
    /// Neighbours for knn (same as --set knn_k=N).
    #[arg(long)]
    k: Option<usize>,
}

impl BaselineArgs {
    pub fn overrides(&self) -> Vec<(&'static str, String)> {
        self.k.map(|k| vec![("knn_k", k.to_string())]).unwrap_or_default()
    }
}

pub fn baseline(args: &BaselineArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let data = load_dataset(&args.data)?;
    let pairs: Vec<(&EntityData, &SeriesFrame, &SeriesFrame)> = data
        .iter()
        .filter_map(|e| Some((e, e.train.as_ref()?, e.test.as_ref()?)))
        .collect();
    if pairs.is_empty() {
        return Err(Error::Data("baselines need entities with both train and test series".into()).into());
    }
    fs::create_dir_all(&args.out)?;
    let wing = cfg.windowing();
    parallel_map(&pairs, cfg.workers, |(e, train, test)| {
        let (train, st) = prepare_train(train, cfg)?;
        let mut test = hierlat::data::downsample(test, cfg.downsample)?;
        if let Some(st) = &st {
            test = st.apply(&test)?;
        }
        let raw: ScoreSeries = match args.kind {
            BaselineKind::MeanDeviation => baseline_mean_deviation(&train, &test)?,
            BaselineKind::Knn => baseline_knn(&train, &test, wing, cfg.knn_k)?,
        };
        let (normalized, _) = normalize_scores(&raw, wing)?;
        write_with(&args.out.join(format!("{}.scores.csv", e.id)), |w| {
            write_scores_csv(w, &raw, &normalized, false)
        })
    })?;
    Ok(())
}
