//! Erase masks: which frames the generator has to fill.
//!
//! A mask always erases whole frames. It is stored as a sorted list of
//! disjoint, non-adjacent half-open intervals; the dense `L x N` view is
//! derived on demand.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::anim::Animation;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, t: usize) -> bool {
        self.start <= t && t < self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    len: usize,
    segments: Vec<Segment>,
}

impl Mask {
    pub fn empty(len: usize) -> Self {
        Self {
            len,
            segments: Vec::new(),
        }
    }

    pub fn full(len: usize) -> Self {
        Self {
            len,
            segments: if len > 0 {
                vec![Segment::new(0, len)]
            } else {
                Vec::new()
            },
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    /// True when no frame is erased.
    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn is_masked(&self, t: usize) -> bool {
        self.segments.iter().any(|s| s.contains(t))
    }

    /// Per-frame erase flags.
    pub fn frame_flags(&self) -> Vec<bool> {
        let mut flags = vec![false; self.len];
        for s in &self.segments {
            flags[s.start..s.end].iter_mut().for_each(|f| *f = true);
        }
        flags
    }

    pub fn masked_frames(&self) -> usize {
        self.segments.iter().map(Segment::len).sum()
    }

    /// `L x n` matrix with all-ones rows at erased frames.
    pub fn dense(&self, n: usize) -> Array2<f64> {
        let mut m = Array2::zeros((self.len, n));
        for s in &self.segments {
            m.slice_mut(ndarray::s![s.start..s.end, ..]).fill(1.0);
        }
        m
    }

    /// Inverse of [`Mask::dense`]. Rows must be uniformly 0 or 1.
    pub fn from_dense(dense: &Array2<f64>) -> Result<Self> {
        let mut flags = Vec::with_capacity(dense.nrows());
        for (t, row) in dense.outer_iter().enumerate() {
            let first = row.first().copied().unwrap_or(0.0);
            if !(first == 0.0 || first == 1.0) || row.iter().any(|&v| v != first) {
                return Err(Error::InvalidSegment(format!(
                    "dense mask row {t} is not uniformly 0 or 1"
                )));
            }
            flags.push(first == 1.0);
        }
        Ok(Self::from_flags(&flags))
    }

    pub fn from_flags(flags: &[bool]) -> Self {
        let mut segments = Vec::new();
        let mut start = None;
        for (t, &f) in flags.iter().enumerate() {
            match (f, start) {
                (true, None) => start = Some(t),
                (false, Some(s)) => {
                    segments.push(Segment::new(s, t));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            segments.push(Segment::new(s, flags.len()));
        }
        Self {
            len: flags.len(),
            segments,
        }
    }
}

/// Build a mask from user intervals, merging overlapping or touching ones.
pub fn segments_to_mask(segments: &[Segment], len: usize) -> Result<Mask> {
    for s in segments {
        if s.start >= s.end {
            return Err(Error::InvalidSegment(format!(
                "[{}, {}) is empty or reversed",
                s.start, s.end
            )));
        }
        if s.end > len {
            return Err(Error::InvalidSegment(format!(
                "[{}, {}) exceeds sequence length {len}",
                s.start, s.end
            )));
        }
    }
    let mut sorted = segments.to_vec();
    sorted.sort();
    let mut merged: Vec<Segment> = Vec::with_capacity(sorted.len());
    for s in sorted {
        match merged.last_mut() {
            Some(last) if s.start <= last.end => last.end = last.end.max(s.end),
            _ => merged.push(s),
        }
    }
    Ok(Mask {
        len,
        segments: merged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskSamplerConfig {
    pub min_segments: usize,
    pub max_segments: usize,
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for MaskSamplerConfig {
    /// 1 to 3 segments of 5 to 75 frames (0.2 s to 3 s at 25 fps).
    fn default() -> Self {
        Self {
            min_segments: 1,
            max_segments: 3,
            min_len: 5,
            max_len: 75,
        }
    }
}

impl MaskSamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_segments > self.max_segments {
            return Err(Error::InvalidConfig(format!(
                "min_segments {} > max_segments {}",
                self.min_segments, self.max_segments
            )));
        }
        if self.min_len > self.max_len || self.min_len == 0 {
            return Err(Error::InvalidConfig(format!(
                "segment length range [{}, {}] is invalid",
                self.min_len, self.max_len
            )));
        }
        Ok(())
    }
}

/// Sample a training mask: a uniform number of segments, each of uniform
/// length and uniform placement, merged where they overlap.
pub fn random_training_mask<R: Rng + ?Sized>(
    len: usize,
    cfg: &MaskSamplerConfig,
    rng: &mut R,
) -> Result<Mask> {
    cfg.validate()?;
    if len == 0 {
        return Err(Error::InvalidSegment("sequence length must be positive".into()));
    }
    if cfg.min_len > len {
        return Err(Error::InvalidSegment(format!(
            "minimum segment length {} exceeds sequence length {len}",
            cfg.min_len
        )));
    }
    let count = rng.random_range(cfg.min_segments..=cfg.max_segments);
    let max_len = cfg.max_len.min(len);
    let mut segments = Vec::with_capacity(count);
    for _ in 0..count {
        let seg_len = rng.random_range(cfg.min_len..=max_len);
        let start = rng.random_range(0..=len - seg_len);
        segments.push(Segment::new(start, start + seg_len));
    }
    segments_to_mask(&segments, len)
}

fn check_len(anim: &Animation, mask: &Mask) -> Result<()> {
    if anim.len() != mask.len() {
        return Err(Error::Dimension(format!(
            "animation has {} frames, mask has {}",
            anim.len(),
            mask.len()
        )));
    }
    Ok(())
}

/// `(1 - M) ⊙ X`: erased frames become zero vectors.
pub fn apply_mask(anim: &Animation, mask: &Mask) -> Result<Animation> {
    check_len(anim, mask)?;
    let mut frames = anim.frames().clone();
    for s in mask.segments() {
        frames.slice_mut(ndarray::s![s.start..s.end, ..]).fill(0.0);
    }
    anim.with_frames(frames)
}

/// `(1 - M) ⊙ X + M ⊙ G`: erased frames come from `generated`, the rest from
/// `base`, copied exactly.
pub fn recompose(base: &Animation, mask: &Mask, generated: &Animation) -> Result<Animation> {
    check_len(base, mask)?;
    if generated.len() != base.len() || generated.n_channels() != base.n_channels() {
        return Err(Error::Dimension(format!(
            "base is {}x{}, generated is {}x{}",
            base.len(),
            base.n_channels(),
            generated.len(),
            generated.n_channels()
        )));
    }
    let mut frames = base.frames().clone();
    for s in mask.segments() {
        frames
            .slice_mut(ndarray::s![s.start..s.end, ..])
            .assign(&generated.frames().slice(ndarray::s![s.start..s.end, ..]));
    }
    base.with_frames(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn constant(len: usize, n: usize, v: f64) -> Animation {
        let names = (0..n).map(|i| format!("s{i}")).collect();
        Animation::new(25.0, names, Array2::from_elem((len, n), v)).unwrap()
    }

    #[test]
    fn single_segment_dense_view() {
        let m = segments_to_mask(&[Segment::new(10, 20)], 200).unwrap();
        let d = m.dense(34);
        for t in 0..200 {
            let expected = if (10..20).contains(&t) { 1.0 } else { 0.0 };
            assert!(d.row(t).iter().all(|&v| v == expected));
        }
        assert_eq!(m.masked_frames(), 10);
    }

    #[test]
    fn overlapping_segments_merge() {
        let m = segments_to_mask(&[Segment::new(15, 30), Segment::new(10, 20)], 200).unwrap();
        assert_eq!(m.segments(), &[Segment::new(10, 30)]);
        let m = segments_to_mask(&[Segment::new(10, 20), Segment::new(20, 25)], 200).unwrap();
        assert_eq!(m.segments(), &[Segment::new(10, 25)]);
        assert!(segments_to_mask(&[], 50).unwrap().is_empty());
    }

    #[test]
    fn bad_segments_rejected() {
        assert!(segments_to_mask(&[Segment::new(5, 5)], 10).is_err());
        assert!(segments_to_mask(&[Segment::new(6, 5)], 10).is_err());
        assert!(segments_to_mask(&[Segment::new(5, 11)], 10).is_err());
    }

    #[test]
    fn sampler_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let full_cfg = MaskSamplerConfig {
            min_segments: 1,
            max_segments: 1,
            min_len: 40,
            max_len: 40,
        };
        let m = random_training_mask(40, &full_cfg, &mut rng).unwrap();
        assert_eq!(m, Mask::full(40));
        assert!(m.dense(3).iter().all(|&v| v == 1.0));

        let none_cfg = MaskSamplerConfig {
            min_segments: 0,
            max_segments: 0,
            ..Default::default()
        };
        let m = random_training_mask(200, &none_cfg, &mut rng).unwrap();
        assert!(m.is_empty());
        assert!(m.dense(34).iter().all(|&v| v == 0.0));

        let too_long = MaskSamplerConfig {
            min_len: 50,
            max_len: 60,
            ..Default::default()
        };
        assert!(random_training_mask(20, &too_long, &mut rng).is_err());
    }

    #[test]
    fn sampler_is_deterministic() {
        let cfg = MaskSamplerConfig::default();
        let a = random_training_mask(200, &cfg, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        let b = random_training_mask(200, &cfg, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn apply_mask_cases() {
        let a = constant(10, 3, 0.5);
        assert_eq!(apply_mask(&a, &Mask::empty(10)).unwrap(), a);
        assert!(apply_mask(&a, &Mask::full(10)).unwrap().frames().iter().all(|&v| v == 0.0));
        let m = segments_to_mask(&[Segment::new(5, 7)], 10).unwrap();
        let out = apply_mask(&a, &m).unwrap();
        let dense = m.dense(3);
        for ((idx, &v), &mv) in out.frames().indexed_iter().zip(dense.iter()) {
            assert_eq!(v, (1.0 - mv) * a.frames()[idx]);
        }
        assert!(apply_mask(&a, &Mask::empty(9)).is_err());
    }

    #[test]
    fn recompose_extremes() {
        let a = constant(8, 2, 0.25);
        let g = constant(8, 2, 0.75);
        assert_eq!(recompose(&a, &Mask::empty(8), &g).unwrap(), a);
        assert_eq!(recompose(&a, &Mask::full(8), &g).unwrap(), g);
        assert!(recompose(&a, &Mask::full(8), &constant(7, 2, 0.0)).is_err());
    }

    fn arb_mask(len: usize) -> impl Strategy<Value = Mask> {
        prop::collection::vec((0..len, 1..len), 0..4).prop_map(move |raw| {
            let segs: Vec<Segment> = raw
                .into_iter()
                .map(|(s, l)| Segment::new(s, (s + l).min(len)))
                .filter(|s| !s.is_empty())
                .collect();
            segments_to_mask(&segs, len).unwrap()
        })
    }

    proptest! {
        #[test]
        fn dense_and_segments_agree(m in arb_mask(60)) {
            let back = Mask::from_dense(&m.dense(4)).unwrap();
            prop_assert_eq!(back, m.clone());
            for w in m.segments().windows(2) {
                prop_assert!(w[0].end < w[1].start);
            }
        }

        #[test]
        fn apply_mask_idempotent_and_recompose_exact(
            m in arb_mask(30),
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let names: Vec<String> = (0..5).map(|i| format!("s{i}")).collect();
            let x = Animation::new(25.0, names.clone(), Array2::from_shape_fn((30, 5), |_| rng.random::<f64>())).unwrap();
            let g = Animation::new(25.0, names, Array2::from_shape_fn((30, 5), |_| rng.random::<f64>())).unwrap();
            let once = apply_mask(&x, &m).unwrap();
            prop_assert_eq!(apply_mask(&once, &m).unwrap(), once);
            let r = recompose(&x, &m, &g).unwrap();
            let dense = m.dense(5);
            for ((idx, &v), &mv) in r.frames().indexed_iter().zip(dense.iter()) {
                let oracle = (1.0 - mv) * x.frames()[idx] + mv * g.frames()[idx];
                prop_assert_eq!(v.to_bits(), oracle.to_bits());
            }
        }
    }
}
