use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::tensor::Tensor;

/// A multivariate series: `values` is `[n_features, len]`, `mask` marks
/// observed cells.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesFrame {
    pub values: Tensor,
    pub mask: Mask,
    pub labels: Option<Vec<bool>>,
    pub entity_id: String,
    pub feature_names: Option<Vec<String>>,
}

impl SeriesFrame {
    /// Fully observed, unlabeled frame.
    pub fn from_values(entity_id: impl Into<String>, values: Tensor) -> Result<Self> {
        let [m, t] = *values.shape() else {
            return Err(Error::shape("SeriesFrame", values.shape(), &[0, 0]));
        };
        let frame = Self {
            values,
            mask: Mask::observed(m, t),
            labels: None,
            entity_id: entity_id.into(),
            feature_names: None,
        };
        frame.validate()?;
        Ok(frame)
    }

    pub fn n_features(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn len(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.shape().len() != 2 {
            return Err(Error::shape("SeriesFrame values", self.values.shape(), &[0, 0]));
        }
        let (m, t) = (self.n_features(), self.len());
        if self.mask.shape() != [m, t] {
            return Err(Error::shape("SeriesFrame mask", &self.mask.shape(), &[m, t]));
        }
        if let Some(l) = &self.labels {
            if l.len() != t {
                return Err(Error::Data(format!(
                    "entity {}: {} labels for {} timestamps",
                    self.entity_id,
                    l.len(),
                    t
                )));
            }
        }
        for i in 0..m {
            for j in 0..t {
                if self.mask.get(i, j) && !self.values.at2(i, j).is_finite() {
                    return Err(Error::Data(format!(
                        "entity {}: non-finite observed value at feature {i}, timestamp {j}",
                        self.entity_id
                    )));
                }
            }
        }
        Ok(())
    }

    /// Columns `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> SeriesFrame {
        let m = self.n_features();
        let n = end - start;
        let values = Tensor::from_fn(&[m, n], |i| self.values.at2(i / n, start + i % n));
        let mask =
            Mask::from_vec(m, n, (0..m * n).map(|i| self.mask.get(i / n, start + i % n)).collect()).expect("sized");
        SeriesFrame {
            values,
            mask,
            labels: self.labels.as_ref().map(|l| l[start..end].to_vec()),
            entity_id: self.entity_id.clone(),
            feature_names: self.feature_names.clone(),
        }
    }
}
