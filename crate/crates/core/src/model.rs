//! Network inputs, batch layouts, and the checkpointable model bundle.
//!
//! Generator batches are time-major `(L * B, features)`; critic batches are
//! channels-first `(40, B * L)`.

use std::fs;
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt};
use ndarray::{s, Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::anim::Animation;
use crate::constraints::{ConstraintKind, ConstraintMatrix};
use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::nn::{Adam, Discriminator, DiscriminatorConfig, Generator, GeneratorConfig, NormalizedCritic, Parameters};
use crate::rig::DistanceRig;
use crate::scalar::Scalar;
use crate::training::TrainConfig;
use crate::util::write_atomic;

/// One sequence worth of generator input.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorInput<T> {
    /// `X_i`, `L x N`, zero at erased frames.
    pub masked_anim: Array2<T>,
    /// 1 at erased frames.
    pub mask_channel: Array1<T>,
    /// `z`, iid standard normal.
    pub noise: Array1<T>,
    /// `C`, `L x n_feat`.
    pub constraint: Array2<T>,
}

pub fn sample_noise<T: Scalar, R: Rng + ?Sized>(len: usize, rng: &mut R) -> Array1<T> {
    Array1::from_shape_simple_fn(len, || T::lit(rng.sample::<f64, _>(StandardNormal)))
}

impl<T: Scalar> GeneratorInput<T> {
    /// Erase masked frames of `frames`, draw fresh noise and attach the
    /// constraint.
    pub fn build<R: Rng + ?Sized>(
        frames: ArrayView2<'_, T>,
        mask: &Mask,
        constraint: ArrayView2<'_, T>,
        rng: &mut R,
    ) -> Result<Self> {
        let l = frames.nrows();
        if mask.len() != l || constraint.nrows() != l {
            return Err(Error::Dimension(format!(
                "generator input blocks disagree on length: {l}, {}, {}",
                mask.len(),
                constraint.nrows()
            )));
        }
        let flags = mask.frame_flags();
        let mut masked_anim = frames.to_owned();
        for (t, &f) in flags.iter().enumerate() {
            if f {
                masked_anim.row_mut(t).fill(T::zero());
            }
        }
        Ok(Self {
            masked_anim,
            mask_channel: flags.iter().map(|&f| if f { T::one() } else { T::zero() }).collect(),
            noise: sample_noise(l, rng),
            constraint: constraint.to_owned(),
        })
    }

    pub fn from_constraint<R: Rng + ?Sized>(
        anim: &Animation,
        mask: &Mask,
        constraint: &ConstraintMatrix,
        rng: &mut R,
    ) -> Result<Self> {
        Self::build(
            anim.frames().mapv(T::lit).view(),
            mask,
            constraint.values.mapv(T::lit).view(),
            rng,
        )
    }

    pub fn len(&self) -> usize {
        self.masked_anim.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.masked_anim.nrows() == 0
    }

    pub fn width(&self) -> usize {
        self.masked_anim.ncols() + 2 + self.constraint.ncols()
    }

    /// `[X_i | mask | z | C]`, `L x width`.
    pub fn features(&self) -> Array2<T> {
        let n = self.masked_anim.ncols();
        let mut out = Array2::zeros((self.len(), self.width()));
        out.slice_mut(s![.., 0..n]).assign(&self.masked_anim);
        out.column_mut(n).assign(&self.mask_channel);
        out.column_mut(n + 1).assign(&self.noise);
        out.slice_mut(s![.., n + 2..]).assign(&self.constraint);
        out
    }
}

/// Stack equal-length sequences into a time-major batch.
pub fn time_major<T: Scalar>(seqs: &[ArrayView2<'_, T>]) -> Result<Array2<T>> {
    let batch = seqs.len();
    let Some(first) = seqs.first() else {
        return Err(Error::Dimension("empty batch".into()));
    };
    let (l, f) = first.dim();
    if seqs.iter().any(|s| s.dim() != (l, f)) {
        return Err(Error::Dimension("batch sequences differ in shape".into()));
    }
    let mut out = Array2::zeros((l * batch, f));
    for (b, seq) in seqs.iter().enumerate() {
        for t in 0..l {
            out.row_mut(t * batch + b).assign(&seq.row(t));
        }
    }
    Ok(out)
}

/// Inverse of [`time_major`].
pub fn split_time_major<T: Scalar>(x: ArrayView2<'_, T>, steps: usize, batch: usize) -> Vec<Array2<T>> {
    (0..batch)
        .map(|b| {
            let mut seq = Array2::zeros((steps, x.ncols()));
            for t in 0..steps {
                seq.row_mut(t).assign(&x.row(t * batch + b));
            }
            seq
        })
        .collect()
}

/// Critic input: an animation and its distance curves.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorInput<T> {
    pub anim: Array2<T>,
    pub distances: Array2<T>,
}

impl<T: Scalar> DiscriminatorInput<T> {
    pub fn new(anim: ArrayView2<'_, T>, rig: &DistanceRig) -> Self {
        Self {
            distances: rig.apply_rows(anim),
            anim: anim.to_owned(),
        }
    }

    pub fn width(&self) -> usize {
        self.anim.ncols() + self.distances.ncols()
    }

    /// `(width, L)` channels-first block.
    pub fn channels_first(&self) -> Array2<T> {
        let n = self.anim.ncols();
        let mut out = Array2::zeros((self.width(), self.anim.nrows()));
        out.slice_mut(s![0..n, ..]).assign(&self.anim.t());
        out.slice_mut(s![n.., ..]).assign(&self.distances.t());
        out
    }
}

/// Concatenate critic inputs into a `(width, B * L)` batch.
pub fn critic_batch<T: Scalar>(inputs: &[DiscriminatorInput<T>]) -> Result<Array2<T>> {
    let Some(first) = inputs.first() else {
        return Err(Error::Dimension("empty batch".into()));
    };
    let (l, w) = (first.anim.nrows(), first.width());
    let mut out = Array2::zeros((w, l * inputs.len()));
    for (b, inp) in inputs.iter().enumerate() {
        if inp.anim.nrows() != l || inp.width() != w {
            return Err(Error::Dimension("critic batch sequences differ in shape".into()));
        }
        out.slice_mut(s![.., b * l..(b + 1) * l]).assign(&inp.channels_first());
    }
    Ok(out)
}

/// Single-sequence generator evaluation; `dropout_rng` selects training mode.
pub fn generator_forward<T: Scalar, R: Rng + ?Sized>(
    generator: &Generator<T>,
    input: &GeneratorInput<T>,
    dropout_rng: Option<&mut R>,
) -> Result<Array2<T>> {
    let x = input.features();
    generator.forward(x.view(), input.len(), 1, dropout_rng).map(|(y, _)| y)
}

pub fn discriminator_forward<T: Scalar>(critic: &NormalizedCritic<T>, input: &DiscriminatorInput<T>) -> Result<T> {
    let y = input.channels_first();
    Ok(critic.scores(y.view(), 1)?[0])
}

/// Generator, critic, optimizer state and training metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle<T> {
    pub generator: Generator<T>,
    pub discriminator: Discriminator<T>,
    pub gen_opt: Adam<T>,
    pub disc_opt: Adam<T>,
    pub constraint_kind: ConstraintKind,
    pub iteration: u64,
    pub seed: u64,
    pub rig: DistanceRig,
    pub train_config: TrainConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BundleConfigs {
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct OptimizerState {
    config: crate::nn::AdamConfig,
    step: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: [usize; 2],
}

/// JSON manifest embedded at the head of every checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: u32,
    pub dtype: String,
    pub constraint_kind: ConstraintKind,
    pub configs: BundleConfigs,
    pub iteration: u64,
    pub seed: u64,
    pub rig: DistanceRig,
    optimizers: [OptimizerState; 2],
    tensors: Vec<TensorEntry>,
}

const MAGIC: &[u8; 8] = b"FFCKPT01";
const FORMAT: u32 = 1;

impl<T: Scalar> ModelBundle<T> {
    fn named_tensors(&self) -> Vec<(String, &Array2<T>)> {
        let mut out: Vec<(String, &Array2<T>)> = Vec::new();
        out.extend(self.generator.tensor_names().into_iter().zip(self.generator.tensors()));
        let dp = &self.discriminator.params;
        out.extend(dp.tensor_names().into_iter().zip(dp.tensors()));
        for (prefix, opt) in [("generator", &self.gen_opt), ("discriminator", &self.disc_opt)] {
            for (i, m) in opt.m.iter().enumerate() {
                out.push((format!("adam.{prefix}.m{i}"), m));
            }
            for (i, v) in opt.v.iter().enumerate() {
                out.push((format!("adam.{prefix}.v{i}"), v));
            }
        }
        out
    }

    /// Power-iteration vectors, stored as row matrices.
    fn spectral_rows(&self) -> Vec<(String, Array2<T>)> {
        let mut out = Vec::new();
        for (l, st) in self.discriminator.spectral.iter().enumerate() {
            out.push((format!("spectral.conv{l}.u"), st.u.clone().insert_axis(ndarray::Axis(0))));
            out.push((format!("spectral.conv{l}.v"), st.v.clone().insert_axis(ndarray::Axis(0))));
        }
        out
    }

    pub fn manifest(&self) -> CheckpointManifest {
        let spectral = self.spectral_rows();
        let mut tensors: Vec<TensorEntry> = self
            .named_tensors()
            .into_iter()
            .map(|(name, t)| TensorEntry {
                name,
                shape: [t.nrows(), t.ncols()],
            })
            .collect();
        tensors.extend(spectral.iter().map(|(name, t)| TensorEntry {
            name: name.clone(),
            shape: [t.nrows(), t.ncols()],
        }));
        CheckpointManifest {
            format: FORMAT,
            dtype: T::DTYPE.to_string(),
            constraint_kind: self.constraint_kind,
            configs: BundleConfigs {
                generator: self.generator.config.clone(),
                discriminator: self.discriminator.config.clone(),
                train: self.train_config.clone(),
            },
            iteration: self.iteration,
            seed: self.seed,
            rig: self.rig.clone(),
            optimizers: [
                OptimizerState {
                    config: self.gen_opt.config,
                    step: self.gen_opt.step,
                },
                OptimizerState {
                    config: self.disc_opt.config,
                    step: self.disc_opt.step,
                },
            ],
            tensors,
        }
    }

    /// Serialize: magic, manifest length (u64 LE), manifest JSON, then every
    /// tensor in manifest order as little-endian scalars.
    pub fn to_bytes(&self) -> Vec<u8> {
        let manifest = serde_json::to_vec(&self.manifest()).expect("manifest serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend_from_slice(&manifest);
        let spectral = self.spectral_rows();
        let tensors = self
            .named_tensors()
            .into_iter()
            .map(|(_, t)| t)
            .chain(spectral.iter().map(|(_, t)| t));
        for t in tensors {
            for &v in t.iter() {
                v.write_le(&mut out);
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (manifest, mut payload) = split_checkpoint(bytes)?;
        if manifest.dtype != T::DTYPE {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds {} parameters, expected {}",
                manifest.dtype,
                T::DTYPE
            )));
        }
        let rig = manifest.rig.clone().validated()?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut bundle = ModelBundle::<T>::new_with_rng(
            manifest.configs.clone(),
            manifest.constraint_kind,
            rig,
            manifest.seed,
            &mut rng,
        )?;
        bundle.iteration = manifest.iteration;
        bundle.gen_opt.config = manifest.optimizers[0].config;
        bundle.gen_opt.step = manifest.optimizers[0].step;
        bundle.disc_opt.config = manifest.optimizers[1].config;
        bundle.disc_opt.step = manifest.optimizers[1].step;
        let expected = bundle.manifest().tensors;
        if expected.len() != manifest.tensors.len()
            || expected
                .iter()
                .zip(&manifest.tensors)
                .any(|(a, b)| a.name != b.name || a.shape != b.shape)
        {
            return Err(Error::Checkpoint("tensor layout does not match the stored configuration".into()));
        }
        let mut read = |dst: &mut Array2<T>| -> Result<()> {
            for v in dst.iter_mut() {
                if payload.len() < T::BYTES {
                    return Err(Error::Checkpoint("truncated tensor payload".into()));
                }
                *v = T::read_le(payload);
                payload = &payload[T::BYTES..];
            }
            Ok(())
        };
        for t in bundle.generator.tensors_mut() {
            read(t)?;
        }
        for t in bundle.discriminator.params.tensors_mut() {
            read(t)?;
        }
        for opt in [&mut bundle.gen_opt, &mut bundle.disc_opt] {
            for m in opt.m.iter_mut() {
                read(m)?;
            }
            for v in opt.v.iter_mut() {
                read(v)?;
            }
        }
        for st in bundle.discriminator.spectral.iter_mut() {
            for vec in [&mut st.u, &mut st.v] {
                let mut row = vec.clone().insert_axis(ndarray::Axis(0));
                read(&mut row)?;
                *vec = row.row(0).to_owned();
            }
        }
        if !payload.is_empty() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", payload.len())));
        }
        Ok(bundle)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Canonical architectures for `train.constraint_kind` and the rig.
    pub fn canonical(train: TrainConfig, rig: DistanceRig) -> Result<Self> {
        let n = rig.n_shapes();
        let configs = BundleConfigs {
            generator: GeneratorConfig::for_kind(train.constraint_kind, n),
            discriminator: DiscriminatorConfig::canonical(n + rig.distance_names().len(), train.seq_len),
            train,
        };
        Self::new(configs, rig)
    }

    /// Parameters are initialized from `configs.train.seed`.
    pub fn new(configs: BundleConfigs, rig: DistanceRig) -> Result<Self> {
        let seed = configs.train.seed;
        let kind = configs.train.constraint_kind;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::MAX);
        Self::new_with_rng(configs, kind, rig, seed, &mut rng)
    }

    pub(crate) fn new_with_rng<R: Rng + ?Sized>(
        configs: BundleConfigs,
        constraint_kind: ConstraintKind,
        rig: DistanceRig,
        seed: u64,
        rng: &mut R,
    ) -> Result<Self> {
        let expected_in = rig.n_shapes() + 2 + constraint_kind.n_feat(rig.n_shapes());
        if configs.generator.input_width != expected_in {
            return Err(Error::InvalidConfig(format!(
                "generator input width {} does not match {constraint_kind} constraints ({expected_in})",
                configs.generator.input_width
            )));
        }
        if configs.discriminator.in_channels != rig.n_shapes() + rig.distance_names().len() {
            return Err(Error::InvalidConfig("critic input width does not match the rig".into()));
        }
        let generator = Generator::new(configs.generator, rng)?;
        let discriminator = Discriminator::new(configs.discriminator, rng)?;
        let adam = configs.train.adam();
        let gen_opt = Adam::new(adam, &generator.tensors());
        let disc_opt = Adam::new(adam, &discriminator.params.tensors());
        Ok(Self {
            generator,
            discriminator,
            gen_opt,
            disc_opt,
            constraint_kind,
            iteration: 0,
            seed,
            rig,
            train_config: configs.train,
        })
    }
}

/// Parse the embedded manifest without materializing tensors.
pub fn read_manifest(path: &Path) -> Result<CheckpointManifest> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    split_checkpoint(&bytes).map(|(m, _)| m)
}

fn split_checkpoint(bytes: &[u8]) -> Result<(CheckpointManifest, &[u8])> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::Checkpoint("not a facefill checkpoint".into()));
    }
    let mut len_bytes = &bytes[8..16];
    let len = len_bytes
        .read_u64::<LittleEndian>()
        .map_err(|e| Error::Checkpoint(e.to_string()))? as usize;
    let body = &bytes[16..];
    if body.len() < len {
        return Err(Error::Checkpoint("truncated manifest".into()));
    }
    let manifest: CheckpointManifest =
        serde_json::from_slice(&body[..len]).map_err(|e| Error::Checkpoint(format!("manifest: {e}")))?;
    if manifest.format != FORMAT {
        return Err(Error::Checkpoint(format!("unsupported format version {}", manifest.format)));
    }
    Ok((manifest, &body[len..]))
}
