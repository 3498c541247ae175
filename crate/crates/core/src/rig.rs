//! The canonical 34-shape blendshape rig and the affine operator mapping a
//! weight vector to six salient inter-vertex distances.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::anim::Animation;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::util::{read_json, write_json};

/// Blendshape channel names of the canonical rig, in column order.
pub const CANONICAL_SHAPES: [&str; 34] = [
    "jawOpen",
    "mouthClose",
    "mouthFunnel",
    "mouthPucker",
    "mouthSmileLeft",
    "mouthSmileRight",
    "mouthStretchLeft",
    "mouthStretchRight",
    "mouthPressLeft",
    "mouthPressRight",
    "mouthUpperUpLeft",
    "mouthUpperUpRight",
    "mouthLowerDownLeft",
    "mouthLowerDownRight",
    "mouthRollLower",
    "mouthRollUpper",
    "mouthFrownLeft",
    "mouthFrownRight",
    "eyeBlinkLeft",
    "eyeBlinkRight",
    "eyeSquintLeft",
    "eyeSquintRight",
    "eyeWideLeft",
    "eyeWideRight",
    "browDownLeft",
    "browDownRight",
    "browInnerUp",
    "browOuterUpLeft",
    "browOuterUpRight",
    "cheekPuff",
    "cheekSquintLeft",
    "cheekSquintRight",
    "noseSneerLeft",
    "noseSneerRight",
];

pub const N_SHAPES: usize = CANONICAL_SHAPES.len();
pub const N_DISTANCES: usize = 6;

pub const DISTANCE_NAMES: [&str; N_DISTANCES] = [
    "lip-gap-left",
    "lip-gap-mid",
    "lip-gap-right",
    "mouth-width",
    "eyelid-right",
    "eyelid-left",
];

/// Row indices into a distance vector.
pub mod dist {
    pub const LIP_GAP_LEFT: usize = 0;
    pub const LIP_GAP_MID: usize = 1;
    pub const LIP_GAP_RIGHT: usize = 2;
    pub const MOUTH_WIDTH: usize = 3;
    pub const EYELID_RIGHT: usize = 4;
    pub const EYELID_LEFT: usize = 5;
}

pub fn canonical_names() -> Vec<String> {
    CANONICAL_SHAPES.iter().map(|s| s.to_string()).collect()
}

pub fn shape_index(name: &str) -> Option<usize> {
    CANONICAL_SHAPES.iter().position(|s| *s == name)
}

/// `d(w) = A w + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceRig {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    distance_names: Vec<String>,
    #[serde(skip)]
    matrix: Option<Array2<f64>>,
}

impl DistanceRig {
    pub fn new(a: Array2<f64>, b: Array1<f64>, distance_names: Vec<String>) -> Result<Self> {
        if a.nrows() != N_DISTANCES || b.len() != N_DISTANCES || distance_names.len() != N_DISTANCES {
            return Err(Error::Dimension(format!(
                "rig needs {N_DISTANCES} rows, offsets and names; got {}x{}, {}, {}",
                a.nrows(),
                a.ncols(),
                b.len(),
                distance_names.len()
            )));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("rig contains non-finite entries".into()));
        }
        Ok(Self {
            a: a.outer_iter().map(|r| r.to_vec()).collect(),
            b: b.to_vec(),
            distance_names,
            matrix: Some(a),
        })
    }

    /// The shipped synthetic rig.
    ///
    /// Neutral pose: lip gaps 0.8 / 1.0 / 0.8, mouth width 5.0, eyelids 1.0.
    /// `mouthClose` and the blink shapes cancel their openings exactly, so a
    /// full blink gives eyelid distance 0 and a closed mouth a zero lip gap.
    /// Brow, cheek and nose shapes have all-zero columns.
    pub fn canonical() -> Self {
        let b = Array1::from(vec![0.8, 1.0, 0.8, 5.0, 1.0, 1.0]);
        let mut a = Array2::<f64>::zeros((N_DISTANCES, N_SHAPES));
        let mut set = |shape: &str, column: [f64; N_DISTANCES]| {
            let j = shape_index(shape).expect("canonical shape");
            for (i, v) in column.into_iter().enumerate() {
                a[[i, j]] = v;
            }
        };
        set("jawOpen", [1.6, 2.0, 1.6, -0.3, 0.0, 0.0]);
        set("mouthClose", [-0.8, -1.0, -0.8, 0.0, 0.0, 0.0]);
        set("mouthFunnel", [0.3, 0.3, 0.3, -1.0, 0.0, 0.0]);
        set("mouthPucker", [-0.1, -0.1, -0.1, -1.5, 0.0, 0.0]);
        set("mouthSmileLeft", [0.1, 0.0, 0.0, 0.8, 0.0, 0.0]);
        set("mouthSmileRight", [0.0, 0.0, 0.1, 0.8, 0.0, 0.0]);
        set("mouthStretchLeft", [0.05, 0.0, 0.0, 0.6, 0.0, 0.0]);
        set("mouthStretchRight", [0.0, 0.0, 0.05, 0.6, 0.0, 0.0]);
        set("mouthPressLeft", [0.0, 0.0, 0.0, -0.2, 0.0, 0.0]);
        set("mouthPressRight", [0.0, 0.0, 0.0, -0.2, 0.0, 0.0]);
        set("mouthUpperUpLeft", [0.25, 0.1, 0.0, 0.0, 0.0, 0.0]);
        set("mouthUpperUpRight", [0.0, 0.1, 0.25, 0.0, 0.0, 0.0]);
        set("mouthLowerDownLeft", [0.25, 0.1, 0.0, 0.0, 0.0, 0.0]);
        set("mouthLowerDownRight", [0.0, 0.1, 0.25, 0.0, 0.0, 0.0]);
        set("mouthRollLower", [-0.15, -0.2, -0.15, 0.0, 0.0, 0.0]);
        set("mouthRollUpper", [-0.15, -0.2, -0.15, 0.0, 0.0, 0.0]);
        set("mouthFrownLeft", [0.0, 0.0, 0.0, -0.3, 0.0, 0.0]);
        set("mouthFrownRight", [0.0, 0.0, 0.0, -0.3, 0.0, 0.0]);
        set("eyeBlinkLeft", [0.0, 0.0, 0.0, 0.0, 0.0, -1.0]);
        set("eyeBlinkRight", [0.0, 0.0, 0.0, 0.0, -1.0, 0.0]);
        set("eyeSquintLeft", [0.0, 0.0, 0.0, 0.0, 0.0, -0.3]);
        set("eyeSquintRight", [0.0, 0.0, 0.0, 0.0, -0.3, 0.0]);
        set("eyeWideLeft", [0.0, 0.0, 0.0, 0.0, 0.0, 0.4]);
        set("eyeWideRight", [0.0, 0.0, 0.0, 0.0, 0.4, 0.0]);
        let names = DISTANCE_NAMES.iter().map(|s| s.to_string()).collect();
        Self::new(a, b, names).expect("canonical rig is well formed")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw: DistanceRig = read_json(path)?;
        raw.validated()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(self, path)
    }

    /// Rebuilds the cached matrix after deserialization.
    pub(crate) fn validated(self) -> Result<Self> {
        let rows = self.a.len();
        let cols = self.a.first().map_or(0, Vec::len);
        if self.a.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("rig matrix rows differ in length".into()));
        }
        let flat: Vec<f64> = self.a.iter().flatten().copied().collect();
        let a = Array2::from_shape_vec((rows, cols), flat)
            .map_err(|e| Error::Dimension(e.to_string()))?;
        Self::new(a, Array1::from(self.b), self.distance_names)
    }

    pub fn matrix(&self) -> &Array2<f64> {
        self.matrix.as_ref().expect("rig matrix is built on construction")
    }

    pub fn offset(&self) -> Array1<f64> {
        Array1::from(self.b.clone())
    }

    pub fn distance_names(&self) -> &[String] {
        &self.distance_names
    }

    pub fn n_shapes(&self) -> usize {
        self.matrix().ncols()
    }

    /// Distance vector for one weight vector.
    pub fn distances(&self, w: &[f64]) -> Result<[f64; N_DISTANCES]> {
        if w.len() != self.n_shapes() {
            return Err(Error::Dimension(format!(
                "weight vector has {} entries, rig expects {}",
                w.len(),
                self.n_shapes()
            )));
        }
        let a = self.matrix();
        let mut d = [0.0; N_DISTANCES];
        for (i, di) in d.iter_mut().enumerate() {
            *di = self.b[i] + a.row(i).iter().zip(w).map(|(x, y)| x * y).sum::<f64>();
        }
        Ok(d)
    }

    /// `A` converted to the working scalar type.
    pub fn matrix_as<T: Scalar>(&self) -> Array2<T> {
        self.matrix().mapv(T::lit)
    }

    pub fn offset_as<T: Scalar>(&self) -> Array1<T> {
        Array1::from_iter(self.b.iter().map(|&v| T::lit(v)))
    }

    /// Row-wise `A x_t + b` for an `rows x N` matrix.
    pub fn apply_rows<T: Scalar>(&self, frames: ArrayView2<'_, T>) -> Array2<T> {
        let a = self.matrix_as::<T>();
        let mut out = frames.dot(&a.t());
        out += &self.offset_as::<T>();
        out
    }
}

/// Distance curves over time, `L x 6`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceTrack {
    pub fps: f64,
    pub values: Array2<f64>,
}

pub fn compute_distances(anim: &Animation, rig: &DistanceRig) -> Result<DistanceTrack> {
    if anim.n_channels() != rig.n_shapes() {
        return Err(Error::Dimension(format!(
            "animation has {} channels, rig expects {}",
            anim.n_channels(),
            rig.n_shapes()
        )));
    }
    Ok(DistanceTrack {
        fps: anim.fps(),
        values: rig.apply_rows(anim.frames().view()),
    })
}
