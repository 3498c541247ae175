//! Conditioning matrices `C = M̃ ⊙ C_gt` for the guided editing modes.
//!
//! `M̃` has all-ones rows at exactly the erased frames of the paired mask, so
//! guidance never leaks outside the region being regenerated. For keyframes
//! a zero row inside the mask means "no keyframe here"; this is ambiguous with
//! a keyframe at the neutral pose, which is how the representation is defined.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::anim::Animation;
use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::viseme::{VisemeVocabulary, N_VISEMES};

/// Longest gap between sampled training keyframes, in seconds.
pub const MAX_KEYFRAME_GAP_SECONDS: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintKind {
    None,
    Keyframes,
    Noisy,
    Visemes,
}

impl ConstraintKind {
    pub const ALL: [ConstraintKind; 4] = [
        ConstraintKind::None,
        ConstraintKind::Keyframes,
        ConstraintKind::Noisy,
        ConstraintKind::Visemes,
    ];

    /// Feature width of the constraint channel for an `n_shapes` rig.
    pub fn n_feat(self, n_shapes: usize) -> usize {
        match self {
            ConstraintKind::None => 0,
            ConstraintKind::Keyframes | ConstraintKind::Noisy => n_shapes,
            ConstraintKind::Visemes => N_VISEMES,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ConstraintKind::None => "none",
            ConstraintKind::Keyframes => "keyframes",
            ConstraintKind::Noisy => "noisy",
            ConstraintKind::Visemes => "visemes",
        }
    }
}

impl fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConstraintKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ConstraintKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown constraint kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintMatrix {
    pub kind: ConstraintKind,
    /// `C`, `L x n_feat`.
    pub values: Array2<f64>,
    /// `M̃`, `L x n_feat`.
    pub cmask: Array2<f64>,
}

impl ConstraintMatrix {
    pub fn n_feat(&self) -> usize {
        self.values.ncols()
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    /// The empty constraint of the unguided network.
    pub fn none(mask: &Mask) -> Self {
        Self {
            kind: ConstraintKind::None,
            values: Array2::zeros((mask.len(), 0)),
            cmask: Array2::zeros((mask.len(), 0)),
        }
    }

    fn from_raw(kind: ConstraintKind, raw: Array2<f64>, mask: &Mask) -> Self {
        let cmask = mask.dense(raw.ncols());
        let values = &raw * &cmask;
        Self {
            kind,
            values,
            cmask,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub frame: usize,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KeyframeSpec {
    pub entries: Vec<Keyframe>,
}

impl KeyframeSpec {
    pub fn frames(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|k| k.frame)
    }
}

/// Largest keyframe gap in frames at the given rate (20 at 25 fps).
pub fn max_keyframe_gap(fps: f64) -> usize {
    (MAX_KEYFRAME_GAP_SECONDS * fps).round() as usize
}

/// Random keyframes inside every erased segment, copied from ground truth.
///
/// Each segment is walked forward from its start with integer gaps drawn
/// uniformly from `[0, max_keyframe_gap(fps)]`; repeated positions from zero
/// gaps collapse into one keyframe.
pub fn sample_training_keyframes<R: Rng + ?Sized>(
    gt: &Animation,
    mask: &Mask,
    rng: &mut R,
) -> KeyframeSpec {
    let max_gap = max_keyframe_gap(gt.fps());
    let mut entries: Vec<Keyframe> = Vec::new();
    for seg in mask.segments() {
        let mut pos = seg.start + rng.random_range(0..=max_gap);
        while pos < seg.end {
            if entries.last().map(|k| k.frame) != Some(pos) {
                entries.push(Keyframe {
                    frame: pos,
                    weights: gt.frame(pos).to_vec(),
                });
            }
            pos += rng.random_range(0..=max_gap);
        }
    }
    KeyframeSpec { entries }
}

pub fn build_keyframe_constraint(
    spec: &KeyframeSpec,
    mask: &Mask,
    n_shapes: usize,
) -> Result<ConstraintMatrix> {
    let mut raw = Array2::zeros((mask.len(), n_shapes));
    let mut last: Option<usize> = None;
    for k in &spec.entries {
        if last.is_some_and(|l| k.frame <= l) {
            return Err(Error::InvalidSegment(format!(
                "keyframe frames must be strictly increasing (frame {})",
                k.frame
            )));
        }
        last = Some(k.frame);
        if k.frame >= mask.len() || !mask.is_masked(k.frame) {
            return Err(Error::InvalidSegment(format!(
                "keyframe at frame {} lies outside every edited segment",
                k.frame
            )));
        }
        if k.weights.len() != n_shapes {
            return Err(Error::Dimension(format!(
                "keyframe at frame {} has {} weights, expected {n_shapes}",
                k.frame,
                k.weights.len()
            )));
        }
        if k.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidAnimation(format!(
                "keyframe at frame {} has non-finite weights",
                k.frame
            )));
        }
        raw.row_mut(k.frame).assign(&ndarray::ArrayView1::from(&k.weights[..]));
    }
    Ok(ConstraintMatrix::from_raw(ConstraintKind::Keyframes, raw, mask))
}

pub fn build_noisy_constraint(noisy: &Animation, mask: &Mask) -> Result<ConstraintMatrix> {
    if noisy.len() != mask.len() {
        return Err(Error::Dimension(format!(
            "noisy animation has {} frames, mask has {}",
            noisy.len(),
            mask.len()
        )));
    }
    Ok(ConstraintMatrix::from_raw(
        ConstraintKind::Noisy,
        noisy.frames().clone(),
        mask,
    ))
}

/// One-hot viseme rows inside the mask, zero rows elsewhere.
pub fn build_viseme_constraint(
    timeline: &[String],
    vocab: &VisemeVocabulary,
    mask: &Mask,
) -> Result<ConstraintMatrix> {
    let classes = vocab.encode(timeline)?;
    viseme_constraint_from_classes(&classes, mask)
}

pub fn viseme_constraint_from_classes(classes: &[usize], mask: &Mask) -> Result<ConstraintMatrix> {
    if classes.len() != mask.len() {
        return Err(Error::Dimension(format!(
            "timeline has {} frames, mask has {}",
            classes.len(),
            mask.len()
        )));
    }
    let mut raw = Array2::zeros((mask.len(), N_VISEMES));
    for (t, &c) in classes.iter().enumerate() {
        if c >= N_VISEMES {
            return Err(Error::Dimension(format!("viseme class {c} out of range")));
        }
        raw[[t, c]] = 1.0;
    }
    Ok(ConstraintMatrix::from_raw(ConstraintKind::Visemes, raw, mask))
}
