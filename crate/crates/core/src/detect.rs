//! Streaming reconstruction and anomaly scoring.

use crate::data::SeriesFrame;
use crate::error::{Error, Result};
use crate::hierarchy::HierarchySpec;
use crate::langevin::{map_reconstruct, LangevinConfig, WindowGenerator};
use crate::rng::{stream_rng, Stream};
use crate::tensor::Tensor;
use crate::window::{make_windows, window_origins, Windowing};

pub const STD_FLOOR: f64 = 1e-8;

/// Per-timestamp anomaly scores. `per_feature[i, t]` is feature `i`'s share
/// of `scores[t]`, so each score is the column sum of `per_feature`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSeries {
    pub scores: Vec<f64>,
    pub per_feature: Tensor,
    /// Number of windows covering each timestamp.
    pub coverage: Vec<usize>,
    /// Number of observed, selected features entering each score.
    pub scored_features: Vec<usize>,
}

impl ScoreSeries {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Builds scores from `[m, T]` squared residuals. Cells where `include`
    /// is false do not enter the mean.
    pub fn from_squared_residuals(sq: &Tensor, include: impl Fn(usize, usize) -> bool, coverage: Vec<usize>) -> Self {
        let [m, t_len] = *sq.shape() else { unreachable!() };
        let mut per_feature = Tensor::zeros(&[m, t_len]);
        let mut scores = vec![0.0; t_len];
        let mut counts = vec![0; t_len];
        for t in 0..t_len {
            let n = (0..m).filter(|&i| include(i, t)).count();
            counts[t] = n;
            if n == 0 || coverage[t] == 0 {
                continue;
            }
            for i in (0..m).filter(|&i| include(i, t)) {
                let c = sq.at2(i, t) / n as f64;
                per_feature.set2(i, t, c);
                scores[t] += c;
            }
        }
        Self {
            scores,
            per_feature,
            coverage,
            scored_features: counts,
        }
    }
}

/// Reconstructs `series` window by window with MAP inference, averages
/// overlapping reconstructions, and scores the averaged reconstruction.
///
/// Window `k` starts from a prior draw of its own RNG stream, so results do
/// not depend on processing order. `channels` restricts which features
/// enter the score; all features still drive inference.
pub fn reconstruct_stream<G: WindowGenerator>(
    series: &SeriesFrame,
    generator: &G,
    spec: &HierarchySpec,
    windowing: Windowing,
    cfg: &LangevinConfig,
    channels: Option<&[usize]>,
    seed: u64,
) -> Result<(Tensor, ScoreSeries)> {
    let m = series.n_features();
    let t_len = series.len();
    if windowing.window_len != spec.window_len() {
        return Err(Error::Validation(format!(
            "window length {} does not match the hierarchy ({})",
            windowing.window_len,
            spec.window_len()
        )));
    }
    let mut selected = vec![channels.is_none(); m];
    for &c in channels.unwrap_or(&[]) {
        if c >= m {
            return Err(Error::Index { index: c, limit: m });
        }
        selected[c] = true;
    }
    let layout = spec.layout();
    let windows = make_windows(series, windowing)?;
    let mut sum = Tensor::zeros(&[m, t_len]);
    let mut coverage = vec![0usize; t_len];
    for (k, w) in windows.iter().enumerate() {
        let mut rng = stream_rng(seed, Stream::Detect, k as u64);
        let (_, fz) = map_reconstruct(&w.values, &w.mask, generator, &layout, cfg, &mut rng)?;
        if fz.shape() != w.values.shape() {
            return Err(Error::shape("reconstruction", fz.shape(), w.values.shape()));
        }
        for c in w.pad..windowing.window_len {
            let t = (w.origin + c as isize) as usize;
            coverage[t] += 1;
            for i in 0..m {
                let v = sum.at2(i, t) + fz.at2(i, c);
                sum.set2(i, t, v);
            }
        }
    }
    let mut recon = sum;
    let mut sq = Tensor::zeros(&[m, t_len]);
    for t in 0..t_len {
        let cov = coverage[t].max(1) as f64;
        for i in 0..m {
            let r = recon.at2(i, t) / cov;
            recon.set2(i, t, r);
            let d = series.values.at2(i, t) - r;
            sq.set2(i, t, d * d);
        }
    }
    let scores = ScoreSeries::from_squared_residuals(&sq, |i, t| selected[i] && series.mask.get(i, t), coverage);
    Ok((recon, scores))
}

/// Timestamp ranges owned by each window for normalization: window `k`
/// owns `[start_k, start_{k+1})`, where `start_k` is its first real column.
pub fn window_blocks(len: usize, windowing: Windowing) -> Result<Vec<(usize, usize)>> {
    let starts: Vec<usize> = window_origins(len, windowing)?
        .into_iter()
        .map(|(o, pad)| (o + pad as isize) as usize)
        .collect();
    Ok(starts
        .iter()
        .enumerate()
        .map(|(k, &s)| (s, starts.get(k + 1).copied().unwrap_or(len)))
        .filter(|(s, e)| s < e)
        .collect())
}

/// Running mean/variance (Welford).
#[derive(Debug, Clone, Copy, Default)]
struct Running {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Running {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Population standard deviation.
    fn std(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.m2 / self.n as f64).sqrt()
        }
    }
}

/// Causal normalization: the scores of each window block are divided by the
/// standard deviation of all raw scores in earlier blocks (the first block
/// by its own), floored at [`STD_FLOOR`]. Returns the scaled series and the
/// divisor used for each block.
pub fn normalize_scores(raw: &ScoreSeries, windowing: Windowing) -> Result<(ScoreSeries, Vec<f64>)> {
    if raw.is_empty() {
        return Err(Error::Data("no scores to normalize".into()));
    }
    let blocks = window_blocks(raw.len(), windowing)?;
    let mut out = raw.clone();
    let mut acc = Running::default();
    let mut divisors = Vec::with_capacity(blocks.len());
    for (k, &(s, e)) in blocks.iter().enumerate() {
        let div = if k == 0 {
            let mut own = Running::default();
            raw.scores[s..e].iter().for_each(|&x| own.push(x));
            own.std()
        } else {
            acc.std()
        }
        .max(STD_FLOOR);
        divisors.push(div);
        for t in s..e {
            out.scores[t] = raw.scores[t] / div;
            for i in 0..raw.per_feature.shape()[0] {
                out.per_feature.set2(i, t, raw.per_feature.at2(i, t) / div);
            }
        }
        raw.scores[s..e].iter().for_each(|&x| acc.push(x));
    }
    Ok((out, divisors))
}

/// Writes `timestamp,raw_score,normalized_score[,feature columns]`.
pub fn write_scores_csv(
    w: &mut impl std::io::Write,
    raw: &ScoreSeries,
    normalized: &ScoreSeries,
    per_feature: bool,
) -> Result<()> {
    let m = raw.per_feature.shape()[0];
    write!(w, "timestamp,raw_score,normalized_score")?;
    if per_feature {
        for i in 0..m {
            write!(w, ",feature_{i}")?;
        }
    }
    writeln!(w)?;
    for t in 0..raw.len() {
        write!(w, "{t},{},{}", raw.scores[t], normalized.scores[t])?;
        if per_feature {
            for i in 0..m {
                write!(w, ",{}", raw.per_feature.at2(i, t))?;
            }
        }
        writeln!(w)?;
    }
    Ok(())
}
