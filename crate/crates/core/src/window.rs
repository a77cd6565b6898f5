//! Rolling windows over a series.

use crate::data::SeriesFrame;
use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Windowing {
    pub window_len: usize,
    pub step: usize,
}

/// One `[m, window_len]` window. Column `c` holds timestamp `origin + c`;
/// the first `pad` columns are zero padding and are always unobserved.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub origin: isize,
    pub pad: usize,
    pub values: Tensor,
    pub mask: Mask,
}

impl Window {
    /// Timestamp range `[start, end)` covered by real (non-pad) columns.
    pub fn span(&self) -> (usize, usize) {
        let start = (self.origin + self.pad as isize) as usize;
        (start, (self.origin + self.values.shape()[1] as isize) as usize)
    }

    /// Mask with only the padding hidden.
    pub fn pad_mask(&self) -> Mask {
        let [m, w] = *self.values.shape() else { unreachable!() };
        let mut mask = Mask::observed(m, w);
        for i in 0..m {
            for c in 0..self.pad {
                mask.set(i, c, false);
            }
        }
        mask
    }
}

/// Window start offsets: `0, s, 2s, ...` while the window fits, plus one
/// trailing left-padded window if the full windows stop short of the end.
/// A series shorter than one window yields a single left-padded window.
pub fn window_origins(len: usize, windowing: Windowing) -> Result<Vec<(isize, usize)>> {
    let Windowing { window_len: sw, step } = windowing;
    if step == 0 || sw == 0 {
        return Err(Error::Validation("window length and step must be >= 1".into()));
    }
    if len == 0 {
        return Err(Error::Data("cannot window an empty series".into()));
    }
    if len < sw {
        return Ok(vec![(len as isize - sw as isize, sw - len)]);
    }
    let mut out: Vec<(isize, usize)> = (0..=len - sw).step_by(step).map(|s| (s as isize, 0)).collect();
    let last_end = out.last().unwrap().0 as usize + sw;
    if last_end < len {
        let next = out.last().unwrap().0 as usize + step;
        out.push(((len - sw) as isize, sw - (len - next)));
    }
    Ok(out)
}

pub fn make_windows(series: &SeriesFrame, windowing: Windowing) -> Result<Vec<Window>> {
    let m = series.n_features();
    let sw = windowing.window_len;
    window_origins(series.len(), windowing)?
        .into_iter()
        .map(|(origin, pad)| {
            let mut values = Tensor::zeros(&[m, sw]);
            let mut mask = Mask::full(m, sw, false);
            for c in pad..sw {
                let t = (origin + c as isize) as usize;
                for i in 0..m {
                    values.set2(i, c, series.values.at2(i, t));
                    mask.set(i, c, series.mask.get(i, t));
                }
            }
            Ok(Window {
                origin,
                pad,
                values,
                mask,
            })
        })
        .collect()
}
