//! Generative inpainting of facial blendshape animation.
//!
//! A bidirectional LSTM generator fills erased frame segments, optionally
//! guided by keyframes, a noisy track or visemes, and is trained against a
//! spectrally normalized convolutional critic. The numeric core is generic
//! over `f32`/`f64`; the aliases below fix the precision used by the CLI.

pub mod anim;
pub mod constraints;
pub mod datagen;
pub mod editing;
pub mod error;
pub mod eval;
pub mod losses;
pub mod mask;
pub mod model;
pub mod nn;
pub mod rig;
pub mod scalar;
pub mod training;
mod util;
pub mod viseme;

pub use anim::Animation;
pub use constraints::{ConstraintKind, ConstraintMatrix};
pub use error::{Error, Result};
pub use mask::{Mask, Segment};
pub use rig::DistanceRig;
pub use scalar::Scalar;

/// Precision used for training and inference.
pub type Real = f32;
pub type Bundle = model::ModelBundle<Real>;
pub type Generator = nn::Generator<Real>;
pub type Discriminator = nn::Discriminator<Real>;
