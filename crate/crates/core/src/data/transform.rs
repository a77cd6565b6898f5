use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::io_util::{read_f64s, read_u64, write_f64s};
use crate::mask::Mask;
use crate::tensor::Tensor;

use super::SeriesFrame;

pub const STD_FLOOR: f64 = 1e-8;

/// Per-feature z-score statistics fitted on observed training values.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(train: &SeriesFrame) -> Result<Self> {
        let (m, t_len) = (train.n_features(), train.len());
        let mut mean = Vec::with_capacity(m);
        let mut std = Vec::with_capacity(m);
        for i in 0..m {
            let obs: Vec<f64> = (0..t_len)
                .filter(|&t| train.mask.get(i, t))
                .map(|t| train.values.at2(i, t))
                .collect();
            if obs.is_empty() {
                let name = train
                    .feature_names
                    .as_ref()
                    .and_then(|n| n.get(i).cloned())
                    .unwrap_or_else(|| format!("#{i}"));
                return Err(Error::Data(format!(
                    "entity {}: feature {name} has no observed training values",
                    train.entity_id
                )));
            }
            let mu = obs.iter().sum::<f64>() / obs.len() as f64;
            let var = obs.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / obs.len() as f64;
            mean.push(mu);
            std.push(var.sqrt().max(STD_FLOOR));
        }
        Ok(Self { mean, std })
    }

    fn check(&self, frame: &SeriesFrame) -> Result<()> {
        if frame.n_features() != self.mean.len() {
            return Err(Error::shape("standardizer", &[frame.n_features()], &[self.mean.len()]));
        }
        Ok(())
    }

    /// Observed entries become `(x - mean) / std`; hidden ones stay 0.
    pub fn apply(&self, frame: &SeriesFrame) -> Result<SeriesFrame> {
        self.check(frame)?;
        Ok(self.map(frame, |i, x| (x - self.mean[i]) / self.std[i]))
    }

    pub fn invert(&self, frame: &SeriesFrame) -> Result<SeriesFrame> {
        self.check(frame)?;
        Ok(self.map(frame, |i, x| x * self.std[i] + self.mean[i]))
    }

    /// Inverse transform of a bare `[m, T]` tensor (every entry mapped).
    pub fn invert_values(&self, values: &Tensor) -> Tensor {
        let t_len = values.shape()[1];
        Tensor::from_fn(values.shape(), |k| {
            let i = k / t_len;
            values.data()[k] * self.std[i] + self.mean[i]
        })
    }

    fn map(&self, frame: &SeriesFrame, f: impl Fn(usize, f64) -> f64) -> SeriesFrame {
        let t_len = frame.len();
        let values = Tensor::from_fn(frame.values.shape(), |k| {
            let (i, t) = (k / t_len, k % t_len);
            if frame.mask.get(i, t) {
                f(i, frame.values.data()[k])
            } else {
                0.0
            }
        });
        SeriesFrame {
            values,
            ..frame.clone()
        }
    }

    pub fn write(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(&(self.mean.len() as u64).to_le_bytes())?;
        write_f64s(w, &self.mean)?;
        write_f64s(w, &self.std)?;
        Ok(())
    }

    pub fn read(r: &mut impl Read) -> Result<Self> {
        let m = read_u64(r)? as usize;
        let mean = read_f64s(r, m)?;
        let std = read_f64s(r, m)?;
        Ok(Self { mean, std })
    }
}

/// Fits on `train` and applies the same statistics to every frame.
pub fn standardize(
    train: &SeriesFrame,
    others: &[SeriesFrame],
) -> Result<(SeriesFrame, Vec<SeriesFrame>, Standardizer)> {
    let st = Standardizer::fit(train)?;
    let tr = st.apply(train)?;
    let rest = others.iter().map(|f| st.apply(f)).collect::<Result<_>>()?;
    Ok((tr, rest, st))
}

/// Non-overlapping mean pooling over observed values. Fully hidden blocks
/// stay hidden, labels are OR-pooled, and a short last block is pooled over
/// what it has.
pub fn downsample(series: &SeriesFrame, factor: usize) -> Result<SeriesFrame> {
    if factor == 0 {
        return Err(Error::Validation("downsample factor must be >= 1".into()));
    }
    if factor == 1 {
        return Ok(series.clone());
    }
    let (m, t_len) = (series.n_features(), series.len());
    let n = t_len.div_ceil(factor);
    let mut values = Tensor::zeros(&[m, n]);
    let mut mask = Mask::full(m, n, false);
    for i in 0..m {
        for b in 0..n {
            let (s, e) = (b * factor, ((b + 1) * factor).min(t_len));
            let obs: Vec<f64> = (s..e)
                .filter(|&t| series.mask.get(i, t))
                .map(|t| series.values.at2(i, t))
                .collect();
            if !obs.is_empty() {
                values.set2(i, b, obs.iter().sum::<f64>() / obs.len() as f64);
                mask.set(i, b, true);
            }
        }
    }
    let labels = series.labels.as_ref().map(|l| {
        (0..n)
            .map(|b| l[b * factor..((b + 1) * factor).min(t_len)].iter().any(|&x| x))
            .collect()
    });
    Ok(SeriesFrame {
        values,
        mask,
        labels,
        entity_id: series.entity_id.clone(),
        feature_names: series.feature_names.clone(),
    })
}
