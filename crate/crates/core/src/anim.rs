//! Blendshape animations: an `L x N` matrix of weights sampled at a fixed
//! frame rate, plus JSON I/O and resampling.

use std::path::Path;

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{read_json, write_json};

pub const CANONICAL_FPS: f64 = 25.0;

/// A blendshape animation.
///
/// Rows are frames, columns are blendshape channels. Weights are finite;
/// the `[0, 1]` range is enforced when reading files (see [`load_animation`]).
#[derive(Debug, Clone, PartialEq)]
pub struct Animation {
    fps: f64,
    names: Vec<String>,
    frames: Array2<f64>,
}

#[derive(Serialize, Deserialize)]
struct AnimationFile {
    fps: f64,
    names: Vec<String>,
    frames: Vec<Vec<f64>>,
}

impl Animation {
    pub fn new(fps: f64, names: Vec<String>, frames: Array2<f64>) -> Result<Self> {
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::InvalidAnimation(format!("fps must be positive, got {fps}")));
        }
        if frames.nrows() == 0 {
            return Err(Error::InvalidAnimation("animation has no frames".into()));
        }
        if frames.ncols() != names.len() {
            return Err(Error::InvalidAnimation(format!(
                "{} channel names but {} columns",
                names.len(),
                frames.ncols()
            )));
        }
        if let Some(((t, c), v)) = frames.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidAnimation(format!(
                "non-finite weight {v} at frame {t}, channel {c}"
            )));
        }
        Ok(Self { fps, names, frames })
    }

    /// All-zero animation of `len` frames.
    pub fn neutral(fps: f64, names: Vec<String>, len: usize) -> Result<Self> {
        let n = names.len();
        Self::new(fps, names, Array2::zeros((len, n)))
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn frames(&self) -> &Array2<f64> {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.nrows()
    }

    /// Never true for a constructed animation; provided for API symmetry.
    pub fn is_empty(&self) -> bool {
        self.frames.nrows() == 0
    }

    pub fn n_channels(&self) -> usize {
        self.frames.ncols()
    }

    pub fn frame(&self, t: usize) -> ArrayView1<'_, f64> {
        self.frames.row(t)
    }

    pub fn duration(&self) -> f64 {
        (self.len() - 1) as f64 / self.fps
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Same metadata, new frame matrix.
    pub fn with_frames(&self, frames: Array2<f64>) -> Result<Self> {
        Self::new(self.fps, self.names.clone(), frames)
    }

    pub fn into_frames(self) -> Array2<f64> {
        self.frames
    }

    pub fn clamped(mut self) -> Self {
        self.frames.mapv_inplace(|v| v.clamp(0.0, 1.0));
        self
    }

    fn check_range(&self) -> Result<()> {
        match self
            .frames
            .indexed_iter()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            Some(((frame, channel), &value)) => Err(Error::OutOfRange {
                frame,
                channel,
                value,
            }),
            None => Ok(()),
        }
    }

    pub fn from_json_str(text: &str, clamp: bool) -> Result<Self> {
        let file: AnimationFile =
            serde_json::from_str(text).map_err(|e| Error::json("<string>", e))?;
        Self::from_file(file, clamp)
    }

    fn from_file(file: AnimationFile, clamp: bool) -> Result<Self> {
        let n = file.names.len();
        let len = file.frames.len();
        let mut data = Vec::with_capacity(len * n);
        for (t, row) in file.frames.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidAnimation(format!(
                    "frame {t} has {} weights, expected {n}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        let frames = Array2::from_shape_vec((len, n), data)
            .map_err(|e| Error::InvalidAnimation(e.to_string()))?;
        let anim = Self::new(file.fps, file.names, frames)?;
        if clamp {
            Ok(anim.clamped())
        } else {
            anim.check_range()?;
            Ok(anim)
        }
    }

    fn to_file(&self) -> AnimationFile {
        AnimationFile {
            fps: self.fps,
            names: self.names.clone(),
            frames: self.frames.outer_iter().map(|r| r.to_vec()).collect(),
        }
    }
}

/// Read an animation from its JSON form.
///
/// Out-of-range weights are clamped to `[0, 1]` when `clamp` is set and
/// rejected otherwise. No resampling is applied.
pub fn load_animation(path: &Path, clamp: bool) -> Result<Animation> {
    let file: AnimationFile = read_json(path)?;
    Animation::from_file(file, clamp).map_err(|e| match e {
        Error::InvalidAnimation(msg) => {
            Error::InvalidAnimation(format!("{}: {msg}", path.display()))
        }
        other => other,
    })
}

/// Write an animation as JSON. Weights are written with shortest round-trip
/// formatting, so a reload reproduces them exactly.
pub fn save_animation(anim: &Animation, path: &Path) -> Result<()> {
    write_json(&anim.to_file(), path)
}

/// Per-channel linear interpolation onto a uniform grid at `target_fps`
/// covering the same duration.
pub fn resample(anim: &Animation, target_fps: f64) -> Result<Animation> {
    if !(target_fps.is_finite() && target_fps > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "target fps must be positive, got {target_fps}"
        )));
    }
    if target_fps == anim.fps {
        return Ok(anim.clone());
    }
    let src = anim.frames();
    let last = anim.len() - 1;
    // Small slack so an exact multiple of the frame period is not lost to rounding.
    let out_len = (anim.duration() * target_fps + 1e-9).floor() as usize + 1;
    let ratio = anim.fps / target_fps;
    let mut out = Array2::zeros((out_len, anim.n_channels()));
    for (k, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        let pos = (k as f64 * ratio).min(last as f64);
        let i0 = pos.floor() as usize;
        let frac = pos - i0 as f64;
        if frac == 0.0 || i0 == last {
            row.assign(&src.row(i0));
        } else {
            let a = src.row(i0);
            let b = src.row(i0 + 1);
            for ((o, &x0), &x1) in row.iter_mut().zip(a.iter()).zip(b.iter()) {
                *o = x0 + (x1 - x0) * frac;
            }
        }
    }
    Animation::new(target_fps, anim.names.clone(), out)
}
