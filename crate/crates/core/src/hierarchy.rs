//! Hierarchical latent factors.
//!
//! A window is split into `a_L` sub-windows. On level `l` one latent vector
//! of dimension `d_l` is shared by `a_l` consecutive sub-windows, so the level
//! holds `a_L / a_l` vectors. Sub-window `j` is driven by the concatenation of
//! `z^l[j / a_l]` over all levels.

use std::io::{Read, Write};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::io_util::{read_f64s, read_u32, read_u64, write_f64s};
use crate::rng::seeded;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HierarchySpec {
    /// `a`: number of consecutive sub-windows tied on each level.
    pub levels: Vec<usize>,
    /// `d`: latent dimension of each level.
    pub dims: Vec<usize>,
    /// Timestamps per sub-window.
    pub sub_window_len: usize,
}

impl HierarchySpec {
    pub fn new(levels: Vec<usize>, dims: Vec<usize>, sub_window_len: usize) -> Result<Self> {
        let spec = Self {
            levels,
            dims,
            sub_window_len,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        if self.levels.is_empty() {
            return bad("hierarchy needs at least one level".into());
        }
        if self.levels.len() != self.dims.len() {
            return bad(format!(
                "hierarchy has {} levels but {} latent dims",
                self.levels.len(),
                self.dims.len()
            ));
        }
        if self.levels[0] < 1 {
            return bad("a_1 must be >= 1".into());
        }
        if self.levels.windows(2).any(|w| w[1] < w[0]) {
            return bad(format!("hierarchy {:?} must be non-decreasing", self.levels));
        }
        let top = self.top();
        if let Some(a) = self.levels.iter().find(|&&a| top % a != 0) {
            return bad(format!("level size {a} does not divide a_L = {top}"));
        }
        if self.dims.contains(&0) {
            return bad("latent dims must be >= 1".into());
        }
        if self.sub_window_len == 0 {
            return bad("sub_window_len must be >= 1".into());
        }
        Ok(())
    }

    /// `a_L`, the number of sub-windows per window.
    pub fn top(&self) -> usize {
        *self.levels.last().expect("validated")
    }

    pub fn n_sub_windows(&self) -> usize {
        self.top()
    }

    pub fn window_len(&self) -> usize {
        self.top() * self.sub_window_len
    }

    pub fn state_dim(&self) -> usize {
        self.dims.iter().sum()
    }

    pub fn layout(&self) -> LatentLayout {
        latent_layout(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatentLayout {
    /// Number of latent vectors on each level (`a_L / a_l`).
    pub counts: Vec<usize>,
    pub dims: Vec<usize>,
    pub levels: Vec<usize>,
    /// Offset of each level's block in the flat buffer.
    pub offsets: Vec<usize>,
    pub total: usize,
}

pub fn latent_layout(spec: &HierarchySpec) -> LatentLayout {
    let top = spec.top();
    let counts: Vec<usize> = spec.levels.iter().map(|a| top / a).collect();
    let mut offsets = Vec::with_capacity(counts.len());
    let mut total = 0;
    for (c, d) in counts.iter().zip(&spec.dims) {
        offsets.push(total);
        total += c * d;
    }
    LatentLayout {
        counts,
        dims: spec.dims.clone(),
        levels: spec.levels.clone(),
        offsets,
        total,
    }
}

impl LatentLayout {
    pub fn n_levels(&self) -> usize {
        self.counts.len()
    }

    pub fn state_dim(&self) -> usize {
        self.dims.iter().sum()
    }

    pub fn n_sub_windows(&self) -> usize {
        *self.levels.last().expect("non-empty")
    }

    fn range(&self, level: usize, index: usize) -> std::ops::Range<usize> {
        let start = self.offsets[level] + index * self.dims[level];
        start..start + self.dims[level]
    }
}

/// All latent vectors of one window, stored level-major in one flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    layout: LatentLayout,
    data: Vec<f64>,
}

impl LatentState {
    pub fn zeros(layout: &LatentLayout) -> Self {
        Self {
            layout: layout.clone(),
            data: vec![0.0; layout.total],
        }
    }

    pub fn from_vec(layout: &LatentLayout, data: Vec<f64>) -> Result<Self> {
        if data.len() != layout.total {
            return Err(Error::shape("LatentState::from_vec", &[layout.total], &[data.len()]));
        }
        Ok(Self {
            layout: layout.clone(),
            data,
        })
    }

    /// Draw every coordinate from the standard normal prior.
    pub fn sample_prior(layout: &LatentLayout, rng: &mut impl Rng) -> Self {
        let data = (0..layout.total)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self {
            layout: layout.clone(),
            data,
        }
    }

    pub fn layout(&self) -> &LatentLayout {
        &self.layout
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// `z^level[index]`
    pub fn vector(&self, level: usize, index: usize) -> &[f64] {
        &self.data[self.layout.range(level, index)]
    }

    pub fn vector_mut(&mut self, level: usize, index: usize) -> &mut [f64] {
        let r = self.layout.range(level, index);
        &mut self.data[r]
    }

    /// Concatenation over levels of `z^l[j / a_l]`.
    pub fn state_vector(&self, j: usize) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.layout.state_dim());
        self.write_state_vector(j, &mut out)?;
        Ok(out)
    }

    pub(crate) fn write_state_vector(&self, j: usize, out: &mut Vec<f64>) -> Result<()> {
        let limit = self.layout.n_sub_windows();
        if j >= limit {
            return Err(Error::Index { index: j, limit });
        }
        for (l, &a) in self.layout.levels.iter().enumerate() {
            out.extend_from_slice(self.vector(l, j / a));
        }
        Ok(())
    }

    /// Adds a gradient w.r.t. the state vector of sub-window `j` into the
    /// (tied) latent vectors that produced it.
    pub fn accumulate_state_grad(&mut self, j: usize, grad: &[f64]) {
        debug_assert_eq!(grad.len(), self.layout.state_dim());
        let mut off = 0;
        for l in 0..self.layout.n_levels() {
            let a = self.layout.levels[l];
            let d = self.layout.dims[l];
            for (z, g) in self.vector_mut(l, j / a).iter_mut().zip(&grad[off..off + d]) {
                *z += g;
            }
            off += d;
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// `(1 - alpha) * self + alpha * other`
    pub fn lerp(&self, other: &LatentState, alpha: f64) -> Result<LatentState> {
        if self.layout != other.layout {
            return Err(Error::Validation("latent states have different layouts".into()));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (1.0 - alpha) * a + alpha * b)
            .collect();
        Ok(LatentState {
            layout: self.layout.clone(),
            data,
        })
    }
}

/// One prior draw per window, all from a single stream seeded by `seed`.
pub fn init_latents(spec: &HierarchySpec, n_windows: usize, seed: u64) -> Vec<LatentState> {
    let layout = spec.layout();
    let mut rng: ChaCha8Rng = seeded(seed);
    (0..n_windows)
        .map(|_| LatentState::sample_prior(&layout, &mut rng))
        .collect()
}

const LATENT_MAGIC: &[u8; 4] = b"HLZS";
const LATENT_VERSION: u32 = 1;

/// Binary record: magic, version, level count, `(count, dim)` per level,
/// number of states, then the little-endian `f64` payload.
pub fn write_latents(w: &mut impl Write, states: &[LatentState], layout: &LatentLayout) -> Result<()> {
    w.write_all(LATENT_MAGIC)?;
    w.write_all(&LATENT_VERSION.to_le_bytes())?;
    w.write_all(&(layout.n_levels() as u32).to_le_bytes())?;
    for l in 0..layout.n_levels() {
        w.write_all(&(layout.levels[l] as u64).to_le_bytes())?;
        w.write_all(&(layout.counts[l] as u64).to_le_bytes())?;
        w.write_all(&(layout.dims[l] as u64).to_le_bytes())?;
    }
    w.write_all(&(states.len() as u64).to_le_bytes())?;
    for s in states {
        if s.layout != *layout {
            return Err(Error::Validation("latent state does not match layout".into()));
        }
        write_f64s(w, &s.data)?;
    }
    Ok(())
}

pub fn read_latents(r: &mut impl Read) -> Result<(LatentLayout, Vec<LatentState>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != LATENT_MAGIC {
        return Err(Error::Format("not a latent-state record".into()));
    }
    let version = read_u32(r)?;
    if version != LATENT_VERSION {
        return Err(Error::Format(format!("unsupported latent record version {version}")));
    }
    let n_levels = read_u32(r)? as usize;
    let mut levels = Vec::with_capacity(n_levels);
    let mut dims = Vec::with_capacity(n_levels);
    let mut counts = Vec::with_capacity(n_levels);
    for _ in 0..n_levels {
        levels.push(read_u64(r)? as usize);
        counts.push(read_u64(r)? as usize);
        dims.push(read_u64(r)? as usize);
    }
    let top = *levels.last().ok_or_else(|| Error::Format("no levels".into()))?;
    let spec = HierarchySpec::new(levels, dims, 1).map_err(|e| Error::Format(e.to_string()))?;
    let layout = spec.layout();
    if layout.counts != counts || layout.n_sub_windows() != top {
        return Err(Error::Format("level counts inconsistent with hierarchy".into()));
    }
    let n = read_u64(r)? as usize;
    let mut states = Vec::with_capacity(n);
    for _ in 0..n {
        let data = read_f64s(r, layout.total)?;
        states.push(LatentState {
            layout: layout.clone(),
            data,
        });
    }
    Ok((layout, states))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(a: &[usize], d: &[usize]) -> HierarchySpec {
        HierarchySpec::new(a.to_vec(), d.to_vec(), 8).unwrap()
    }

    #[test]
    fn layout_counts() {
        assert_eq!(spec(&[1, 3, 6], &[2, 2, 2]).layout().counts, vec![6, 2, 1]);
        let l = spec(&[1, 4], &[20, 5]).layout();
        assert_eq!(l.counts, vec![4, 1]);
        assert_eq!(l.total, 85);
        let l = spec(&[1], &[8]).layout();
        assert_eq!((l.counts.clone(), l.total), (vec![1], 8));
    }

    #[test]
    fn validation_errors() {
        assert!(HierarchySpec::new(vec![1, 4], vec![3], 8).is_err());
        assert!(HierarchySpec::new(vec![4, 2], vec![1, 1], 8).is_err());
        assert!(HierarchySpec::new(vec![1, 3, 4], vec![1, 1, 1], 8).is_err());
        assert!(HierarchySpec::new(vec![0, 4], vec![1, 1], 8).is_err());
        assert!(HierarchySpec::new(vec![], vec![], 8).is_err());
        assert!(HierarchySpec::new(vec![2, 2], vec![1, 1], 8).is_ok());
    }

    fn labelled(s: &HierarchySpec) -> LatentState {
        // coordinate value = 100*level + 10*index + position
        let layout = s.layout();
        let mut z = LatentState::zeros(&layout);
        for l in 0..layout.n_levels() {
            for i in 0..layout.counts[l] {
                for (p, v) in z.vector_mut(l, i).iter_mut().enumerate() {
                    *v = (100 * l + 10 * i + p) as f64;
                }
            }
        }
        z
    }

    #[test]
    fn state_vector_indexing() {
        let s = spec(&[1, 3, 6], &[1, 1, 1]);
        let z = labelled(&s);
        assert_eq!(z.state_vector(4).unwrap(), vec![40.0, 110.0, 200.0]);
        assert_eq!(z.state_vector(5).unwrap(), vec![50.0, 110.0, 200.0]);
        assert!(matches!(z.state_vector(6), Err(Error::Index { index: 6, limit: 6 })));

        let s = spec(&[1, 4], &[2, 1]);
        let z = labelled(&s);
        assert_eq!(z.state_vector(0).unwrap(), vec![0.0, 1.0, 100.0]);
    }

    #[test]
    fn tying_and_locality() {
        let s = spec(&[1, 2, 4], &[2, 2, 2]);
        let z = labelled(&s);
        for j in 0..4 {
            for jp in 0..4 {
                let (a, b) = (z.state_vector(j).unwrap(), z.state_vector(jp).unwrap());
                for (l, &al) in s.levels.iter().enumerate() {
                    if j / al == jp / al {
                        assert_eq!(a[2 * l..2 * l + 2], b[2 * l..2 * l + 2]);
                    }
                }
            }
        }
        let mut z2 = z.clone();
        z2.vector_mut(0, 1)[0] += 1.0;
        for j in 0..4 {
            assert_eq!(z.state_vector(j).unwrap() != z2.state_vector(j).unwrap(), j == 1);
        }
        let mut z3 = z.clone();
        z3.vector_mut(2, 0)[1] -= 1.0;
        for j in 0..4 {
            assert_ne!(z.state_vector(j).unwrap(), z3.state_vector(j).unwrap());
        }
    }

    #[test]
    fn state_grad_sums_over_ties() {
        let s = spec(&[1, 2], &[1, 1]);
        let mut g = LatentState::zeros(&s.layout());
        g.accumulate_state_grad(0, &[1.0, 10.0]);
        g.accumulate_state_grad(1, &[2.0, 20.0]);
        assert_eq!(g.as_slice(), &[1.0, 2.0, 30.0]);
    }

    #[test]
    fn init_is_reproducible() {
        let s = spec(&[1, 4], &[20, 5]);
        assert_eq!(init_latents(&s, 3, 7), init_latents(&s, 3, 7));
        assert_ne!(init_latents(&s, 3, 7), init_latents(&s, 3, 8));
        assert!(init_latents(&s, 0, 7).is_empty());
    }

    #[test]
    fn prior_moments() {
        let s = spec(&[1], &[1000]);
        let z = init_latents(&s, 100, 42);
        let n = 100_000.0;
        let mean: f64 = z.iter().flat_map(|s| s.as_slice()).sum::<f64>() / n;
        let var: f64 = z
            .iter()
            .flat_map(|s| s.as_slice())
            .map(|x| (x - mean).powi(2))
            .sum::<f64>()
            / n;
        assert!(mean.abs() < 0.02, "{mean}");
        assert!((var - 1.0).abs() < 0.02, "{var}");
    }

    #[test]
    fn latent_record_roundtrip() {
        let s = spec(&[1, 3, 6], &[3, 2, 4]);
        let z = init_latents(&s, 4, 1);
        let mut buf = Vec::new();
        write_latents(&mut buf, &z, &s.layout()).unwrap();
        let (layout, back) = read_latents(&mut buf.as_slice()).unwrap();
        assert_eq!(layout, s.layout());
        assert_eq!(back, z);
        buf[0] = b'X';
        assert!(read_latents(&mut buf.as_slice()).is_err());
    }
}
