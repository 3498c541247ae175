//! Adversarial training: batch assembly, alternating critic/generator
//! updates, loss tracing and checkpointing.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::info;
use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::anim::Animation;
use crate::constraints::{
    build_keyframe_constraint, build_noisy_constraint, sample_training_keyframes, viseme_constraint_from_classes,
    ConstraintKind, ConstraintMatrix,
};
use crate::datagen::CorpusManifest;
use crate::error::{Error, Result};
use crate::losses::{
    dis_loss_grad_rows, dis_loss_rows, feat_loss_grad_rows, feat_loss_rows, loss_discriminator, loss_generator,
    AdversarialBatch, LossWeights,
};
use crate::mask::{random_training_mask, Mask, MaskSamplerConfig};
use crate::model::{critic_batch, split_time_major, time_major, DiscriminatorInput, GeneratorInput, ModelBundle};
use crate::nn::{AdamConfig, GeneratorTrace, NormalizedCritic, Parameters};
use crate::rig::DistanceRig;
use crate::scalar::Scalar;
use crate::util::write_atomic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateOrder {
    DiscriminatorFirst,
    GeneratorFirst,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub constraint_kind: ConstraintKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub iterations: u64,
    /// Training window; longer corpus sequences are cropped at random.
    pub seq_len: usize,
    pub mask: MaskSamplerConfig,
    pub weights: LossWeights,
    pub seed: u64,
    /// Save a checkpoint every this many iterations (0 disables intermediate saves).
    pub checkpoint_every: u64,
    /// Clip the critic margins at zero.
    pub hinge: bool,
    /// Score the generator's adversarial term on the recomposed animation
    /// rather than on the raw generator output.
    pub adversarial_on_rec: bool,
    pub update_order: UpdateOrder,
    /// Critic updates per generator update.
    pub critic_steps: usize,
    /// Power iterations per spectral-norm refresh.
    pub power_iterations: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            constraint_kind: ConstraintKind::None,
            learning_rate: 1e-3,
            batch_size: 16,
            iterations: 2000,
            seq_len: 200,
            mask: MaskSamplerConfig::default(),
            weights: LossWeights::default(),
            seed: 0,
            checkpoint_every: 500,
            hinge: true,
            adversarial_on_rec: true,
            update_order: UpdateOrder::DiscriminatorFirst,
            critic_steps: 1,
            power_iterations: 1,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.learning_rate,
            ..AdamConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if self.batch_size == 0 || self.seq_len == 0 || self.critic_steps == 0 {
            return Err(Error::InvalidConfig("batch size, sequence length and critic steps must be positive".into()));
        }
        self.mask.validate()?;
        self.weights.validate()
    }
}

/// One training sequence with its guidance sources.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingItem {
    pub clean: Animation,
    pub noisy: Animation,
    pub visemes: Vec<usize>,
}

impl TrainingItem {
    pub fn new(clean: Animation, noisy: Animation, visemes: Vec<usize>) -> Result<Self> {
        let l = clean.len();
        if noisy.len() != l || visemes.len() != l || noisy.n_channels() != clean.n_channels() {
            return Err(Error::Dimension("clean, noisy and viseme tracks disagree in shape".into()));
        }
        Ok(Self { clean, noisy, visemes })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingData {
    pub items: Vec<TrainingItem>,
}

impl TrainingData {
    pub fn new(items: Vec<TrainingItem>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::InvalidConfig("training data is empty".into()));
        }
        Ok(Self { items })
    }

    /// Load the training split listed in a corpus manifest.
    pub fn from_manifest(path: &Path) -> Result<Self> {
        let manifest = CorpusManifest::load(path)?;
        Self::new(manifest.load_items(path, &manifest.items)?)
    }

    pub fn min_len(&self) -> usize {
        self.items.iter().map(|i| i.clean.len()).min().unwrap_or(0)
    }
}

/// Per-iteration loss values, one CSV row each.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub iter: u64,
    pub loss_g: f64,
    pub loss_d: f64,
    pub loss_feat: f64,
    pub loss_dis: f64,
    pub gp: f64,
    pub score_gt: f64,
    pub score_rec: f64,
    /// Mean absolute error of the raw generator output over erased entries.
    pub masked_l1: f64,
}

pub const CSV_HEADER: &str = "iter,loss_G,loss_D,loss_feat,loss_dis,gp,score_gt,score_rec";

impl LossRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.iter, self.loss_g, self.loss_d, self.loss_feat, self.loss_dis, self.gp, self.score_gt, self.score_rec
        )
    }

    pub fn is_finite(&self) -> bool {
        [
            self.loss_g,
            self.loss_d,
            self.loss_feat,
            self.loss_dis,
            self.gp,
            self.score_gt,
            self.score_rec,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Fresh bundle with canonical architectures sized for `cfg`.
pub fn init_bundle<T: Scalar>(cfg: &TrainConfig, rig: DistanceRig) -> Result<ModelBundle<T>> {
    cfg.validate()?;
    ModelBundle::canonical(cfg.clone(), rig)
}

/// The random stream of one iteration. Deriving it from `(seed, iteration)`
/// makes a resumed run draw exactly what an uninterrupted run would.
pub fn iteration_rng(seed: u64, iteration: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration);
    rng
}

/// A sampled batch: masks, generator inputs and ground truth.
struct Batch<T> {
    steps: usize,
    masks: Vec<Vec<bool>>,
    gt: Vec<Array2<T>>,
    input: Array2<T>,
}

fn window(anim: &Animation, start: usize, len: usize) -> Result<Animation> {
    anim.with_frames(anim.frames().slice(s![start..start + len, ..]).to_owned())
}

/// Build the constraint a network of `kind` sees during training.
pub fn training_constraint<R: Rng + ?Sized>(
    kind: ConstraintKind,
    item: &TrainingItem,
    mask: &Mask,
    rng: &mut R,
) -> Result<ConstraintMatrix> {
    match kind {
        ConstraintKind::None => Ok(ConstraintMatrix::none(mask)),
        ConstraintKind::Keyframes => {
            let spec = sample_training_keyframes(&item.clean, mask, rng);
            build_keyframe_constraint(&spec, mask, item.clean.n_channels())
        }
        ConstraintKind::Noisy => build_noisy_constraint(&item.noisy, mask),
        ConstraintKind::Visemes => viseme_constraint_from_classes(&item.visemes, mask),
    }
}

fn crop(item: &TrainingItem, start: usize, len: usize) -> Result<TrainingItem> {
    if start == 0 && item.clean.len() == len {
        return Ok(item.clone());
    }
    TrainingItem::new(
        window(&item.clean, start, len)?,
        window(&item.noisy, start, len)?,
        item.visemes[start..start + len].to_vec(),
    )
}

fn sample_batch<T: Scalar, R: Rng + ?Sized>(
    data: &TrainingData,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<Batch<T>> {
    let steps = cfg.seq_len;
    let mut masks = Vec::with_capacity(cfg.batch_size);
    let mut gt = Vec::with_capacity(cfg.batch_size);
    let mut feats = Vec::with_capacity(cfg.batch_size);
    for _ in 0..cfg.batch_size {
        let item = &data.items[rng.random_range(0..data.items.len())];
        let len = item.clean.len();
        if len < steps {
            return Err(Error::SequenceTooShort { len, min: steps });
        }
        let start = if len > steps { rng.random_range(0..=len - steps) } else { 0 };
        let item = crop(item, start, steps)?;
        let mask = random_training_mask(steps, &cfg.mask, rng)?;
        let constraint = training_constraint(cfg.constraint_kind, &item, &mask, rng)?;
        let input = GeneratorInput::<T>::from_constraint(&item.clean, &mask, &constraint, rng)?;
        feats.push(input.features());
        masks.push(mask.frame_flags());
        gt.push(item.clean.frames().mapv(T::lit));
    }
    let views: Vec<_> = feats.iter().map(|f| f.view()).collect();
    Ok(Batch {
        steps,
        masks,
        input: time_major(&views)?,
        gt,
    })
}

fn recompose_rows<T: Scalar>(gt: &Array2<T>, gen: &Array2<T>, erased: &[bool]) -> Array2<T> {
    let mut out = gt.clone();
    for (t, &m) in erased.iter().enumerate() {
        if m {
            out.row_mut(t).assign(&gen.row(t));
        }
    }
    out
}

fn to_f64<T: Scalar>(v: T) -> f64 {
    v.to_f64_lossy()
}

fn mean<T: Scalar>(v: &[T]) -> f64 {
    v.iter().map(|&x| to_f64(x)).sum::<f64>() / v.len().max(1) as f64
}

struct CriticOutcome {
    loss_d: f64,
    gp: f64,
    score_gt: f64,
    score_rec: f64,
}

fn critic_update<T: Scalar, R: Rng + ?Sized>(
    bundle: &mut ModelBundle<T>,
    cfg: &TrainConfig,
    y_gt: &Array2<T>,
    y_rec: &Array2<T>,
    masks: &[Vec<bool>],
    rng: &mut R,
) -> Result<CriticOutcome> {
    let batch = masks.len();
    let critic = bundle.discriminator.normalize(cfg.power_iterations)?;
    let (s_gt, tr_gt) = critic.forward(y_gt.view(), batch)?;
    let (s_rec, tr_rec) = critic.forward(y_rec.view(), batch)?;
    let inv_b = T::lit(1.0 / batch as f64);
    let active = |margin: T| !cfg.hinge || margin > T::zero();
    let d_gt: Vec<T> = s_gt
        .iter()
        .map(|&s| if active(T::one() - s) { -inv_b } else { T::zero() })
        .collect();
    let d_rec: Vec<T> = s_rec
        .iter()
        .map(|&s| if active(T::one() + s) { inv_b } else { T::zero() })
        .collect();
    let mut grad = bundle.discriminator.params.zeros_like();
    critic.backward(&tr_gt, &d_gt, Some(&mut grad));
    critic.backward(&tr_rec, &d_rec, Some(&mut grad));
    let t: Vec<T> = (0..batch).map(|_| T::lit(rng.random::<f64>())).collect();
    let adv = AdversarialBatch::new(y_gt.clone(), y_rec.clone(), t, masks)?;
    let w_gp = T::lit(cfg.weights.w_gp);
    let gp = if cfg.weights.w_gp > 0.0 {
        critic.gradient_penalty(adv.u.view(), adv.mask_ext.view(), batch, w_gp, Some(&mut grad))?
    } else {
        critic.gradient_penalty(adv.u.view(), adv.mask_ext.view(), batch, w_gp, None)?
    };
    let loss_d = loss_discriminator(&s_gt, &s_rec, gp, &cfg.weights, cfg.hinge);
    let out = CriticOutcome {
        loss_d: to_f64(loss_d),
        gp: to_f64(gp),
        score_gt: mean(&s_gt),
        score_rec: mean(&s_rec),
    };
    if !(out.loss_d.is_finite() && out.gp.is_finite()) {
        return Err(Error::NonFinite {
            iteration: bundle.iteration,
            detail: format!(
                "loss_D={} gp={} score_gt={} score_rec={}",
                out.loss_d, out.gp, out.score_gt, out.score_rec
            ),
        });
    }
    let grad = critic.unnormalize_grad(grad);
    let params = &mut bundle.discriminator.params;
    bundle.disc_opt.update(params.tensors_mut(), grad.tensors());
    Ok(out)
}

/// Gradient of `mean_b(1 − D(Y_b))` w.r.t. each sequence's animation block,
/// with the distance channels folded back through the rig.
fn adversarial_gradient<T: Scalar>(
    critic: &NormalizedCritic<T>,
    y: &Array2<T>,
    a: &Array2<T>,
    batch: usize,
) -> Result<(Vec<T>, Array2<T>)> {
    let (scores, trace) = critic.forward(y.view(), batch)?;
    let d = vec![-T::lit(1.0 / batch as f64); batch];
    let dy = critic.backward(&trace, &d, None);
    let n = a.ncols();
    let mut d_anim = dy.slice(s![0..n, ..]).to_owned();
    d_anim += &a.t().dot(&dy.slice(s![n.., ..]));
    Ok((scores, d_anim))
}

struct GeneratorOutcome {
    loss_g: f64,
    loss_feat: f64,
    loss_dis: f64,
}

fn generator_update<T: Scalar>(
    bundle: &mut ModelBundle<T>,
    cfg: &TrainConfig,
    trace: &GeneratorTrace<T>,
    gen: &[Array2<T>],
    batch_data: &Batch<T>,
    y_rec: &Array2<T>,
) -> Result<GeneratorOutcome> {
    let batch = gen.len();
    let steps = batch_data.steps;
    let a = bundle.rig.matrix_as::<T>();
    let critic = bundle.discriminator.frozen()?;
    let y_adv = if cfg.adversarial_on_rec {
        y_rec.clone()
    } else {
        let inputs: Vec<_> = gen.iter().map(|g| DiscriminatorInput::new(g.view(), &bundle.rig)).collect();
        critic_batch(&inputs)?
    };
    let (scores, d_anim) = adversarial_gradient(&critic, &y_adv, &a, batch)?;
    let alpha = T::lit(cfg.weights.alpha_gt);
    let inv_b = T::lit(1.0 / batch as f64);
    let w_feat = T::lit(cfg.weights.w_feat) * inv_b;
    let w_dis = T::lit(cfg.weights.w_dis) * inv_b;
    let mut d_out = Array2::<T>::zeros((steps * batch, gen[0].ncols()));
    let (mut l_feat, mut l_dis) = (T::zero(), T::zero());
    for (b, g) in gen.iter().enumerate() {
        let gt = &batch_data.gt[b];
        let erased = &batch_data.masks[b];
        l_feat += feat_loss_rows(g.view(), gt.view(), erased, alpha)? * inv_b;
        l_dis += dis_loss_rows(g.view(), gt.view(), &a)? * inv_b;
        let mut d = feat_loss_grad_rows(g.view(), gt.view(), erased, alpha, w_feat);
        d += &dis_loss_grad_rows(g.view(), gt.view(), &a, w_dis);
        for t in 0..steps {
            let mut row = d.row_mut(t);
            if !cfg.adversarial_on_rec || erased[t] {
                row += &d_anim.column(b * steps + t);
            }
            d_out.row_mut(t * batch + b).assign(&row);
        }
    }
    let loss_g = loss_generator(&scores, l_feat, l_dis, &cfg.weights);
    let out = GeneratorOutcome {
        loss_g: to_f64(loss_g),
        loss_feat: to_f64(l_feat),
        loss_dis: to_f64(l_dis),
    };
    if !(out.loss_g.is_finite() && out.loss_feat.is_finite() && out.loss_dis.is_finite()) {
        return Err(Error::NonFinite {
            iteration: bundle.iteration,
            detail: format!("loss_G={} loss_feat={} loss_dis={}", out.loss_g, out.loss_feat, out.loss_dis),
        });
    }
    let mut grad = bundle.generator.zeros_like();
    bundle.generator.backward(trace, d_out.view(), &mut grad);
    bundle.gen_opt.update(bundle.generator.tensors_mut(), grad.tensors());
    Ok(out)
}

fn masked_l1<T: Scalar>(gen: &[Array2<T>], gt: &[Array2<T>], masks: &[Vec<bool>]) -> f64 {
    let (mut total, mut count) = (0.0, 0usize);
    for ((g, x), m) in gen.iter().zip(gt).zip(masks) {
        for (t, &erased) in m.iter().enumerate() {
            if erased {
                total += g.row(t).iter().zip(x.row(t)).map(|(&a, &b)| to_f64((a - b).abs())).sum::<f64>();
                count += g.ncols();
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

/// One adversarial iteration on a freshly sampled batch.
pub fn train_step<T: Scalar>(bundle: &mut ModelBundle<T>, data: &TrainingData, cfg: &TrainConfig) -> Result<LossRecord> {
    if cfg.constraint_kind != bundle.constraint_kind {
        return Err(Error::KindMismatch {
            model: bundle.constraint_kind,
            request: cfg.constraint_kind,
        });
    }
    let mut rng = iteration_rng(bundle.seed, bundle.iteration);
    let batch = sample_batch::<T, _>(data, cfg, &mut rng)?;
    let b = cfg.batch_size;
    let (out, trace) = bundle.generator.forward(batch.input.view(), batch.steps, b, Some(&mut rng))?;
    let gen = split_time_major(out.view(), batch.steps, b);
    let rec: Vec<_> = (0..b).map(|i| recompose_rows(&batch.gt[i], &gen[i], &batch.masks[i])).collect();
    let to_critic = |seqs: &[Array2<T>]| -> Result<Array2<T>> {
        let inputs: Vec<_> = seqs.iter().map(|x| DiscriminatorInput::new(x.view(), &bundle.rig)).collect();
        critic_batch(&inputs)
    };
    let y_gt = to_critic(&batch.gt)?;
    let y_rec = to_critic(&rec)?;

    let critic_phase = |bundle: &mut ModelBundle<T>, rng: &mut ChaCha8Rng| -> Result<CriticOutcome> {
        let mut last = critic_update(bundle, cfg, &y_gt, &y_rec, &batch.masks, rng)?;
        for _ in 1..cfg.critic_steps {
            last = critic_update(bundle, cfg, &y_gt, &y_rec, &batch.masks, rng)?;
        }
        Ok(last)
    };
    let (c, g) = match cfg.update_order {
        UpdateOrder::DiscriminatorFirst => {
            let c = critic_phase(bundle, &mut rng)?;
            let g = generator_update(bundle, cfg, &trace, &gen, &batch, &y_rec)?;
            (c, g)
        }
        UpdateOrder::GeneratorFirst => {
            let g = generator_update(bundle, cfg, &trace, &gen, &batch, &y_rec)?;
            (critic_phase(bundle, &mut rng)?, g)
        }
    };
    bundle.iteration += 1;
    Ok(LossRecord {
        iter: bundle.iteration,
        loss_g: g.loss_g,
        loss_d: c.loss_d,
        loss_feat: g.loss_feat,
        loss_dis: g.loss_dis,
        gp: c.gp,
        score_gt: c.score_gt,
        score_rec: c.score_rec,
        masked_l1: masked_l1(&gen, &batch.gt, &batch.masks),
    })
}

/// Mean absolute error over erased entries of an inference-mode fill on a
/// fixed probe set: masks, noise and constraints are drawn from `probe_seed`
/// so successive calls see identical inputs.
pub fn probe_masked_l1<T: Scalar>(
    bundle: &ModelBundle<T>,
    data: &TrainingData,
    cfg: &TrainConfig,
    probe_seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(probe_seed);
    let mut probe_cfg = cfg.clone();
    probe_cfg.batch_size = data.items.len();
    let batch = sample_batch::<T, _>(data, &probe_cfg, &mut rng)?;
    let out = bundle.generator.predict(batch.input.view(), batch.steps, probe_cfg.batch_size)?;
    let gen = split_time_major(out.view(), batch.steps, probe_cfg.batch_size);
    Ok(masked_l1(&gen, &batch.gt, &batch.masks))
}

pub const LATEST_CHECKPOINT: &str = "latest.ckpt";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const LOSS_TRACE: &str = "loss_trace.csv";

/// Keep only trace rows up to `iteration` so a resumed run appends cleanly.
fn truncate_trace(path: &Path, iteration: u64) -> Result<()> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut kept = String::new();
    for (i, line) in text.lines().enumerate() {
        let keep = i == 0
            || line
                .split(',')
                .next()
                .and_then(|v| v.parse::<u64>().ok())
                .is_some_and(|it| it <= iteration);
        if keep {
            kept.push_str(line);
            kept.push('\n');
        }
    }
    write_atomic(path, kept.as_bytes())
}

fn write_dump<T: Scalar>(out_dir: &Path, bundle: &ModelBundle<T>, err: &Error, history: &[LossRecord]) {
    let dump = serde_json::json!({
        "error": err.to_string(),
        "iteration": bundle.iteration,
        "constraint_kind": bundle.constraint_kind,
        "recent_losses": history,
    });
    let path = out_dir.join("diagnostic.json");
    if let Ok(text) = serde_json::to_vec_pretty(&dump) {
        let _ = write_atomic(&path, &text);
    }
    let _ = bundle.save(&out_dir.join("diverged.ckpt"));
}

/// Run the configured iteration budget, resuming from `out_dir/latest.ckpt`
/// when present. Returns the path of the final checkpoint.
pub fn train<T: Scalar>(cfg: &TrainConfig, data: &TrainingData, rig: DistanceRig, out_dir: &Path) -> Result<PathBuf> {
    cfg.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let latest = out_dir.join(LATEST_CHECKPOINT);
    let trace_path = out_dir.join(LOSS_TRACE);
    let mut bundle = if latest.exists() {
        let bundle = ModelBundle::<T>::load(&latest)?;
        if bundle.constraint_kind != cfg.constraint_kind {
            return Err(Error::KindMismatch {
                model: bundle.constraint_kind,
                request: cfg.constraint_kind,
            });
        }
        info!("resuming from {} at iteration {}", latest.display(), bundle.iteration);
        if trace_path.exists() {
            truncate_trace(&trace_path, bundle.iteration)?;
        }
        bundle
    } else {
        init_bundle::<T>(cfg, rig)?
    };
    bundle.train_config = cfg.clone();
    if !trace_path.exists() {
        fs::write(&trace_path, format!("{CSV_HEADER}\n")).map_err(|e| Error::io(&trace_path, e))?;
    }
    let mut trace = fs::OpenOptions::new()
        .append(true)
        .open(&trace_path)
        .map_err(|e| Error::io(&trace_path, e))?;
    let mut history: Vec<LossRecord> = Vec::new();
    while bundle.iteration < cfg.iterations {
        let rec = match train_step(&mut bundle, data, cfg) {
            Ok(r) => r,
            Err(e @ Error::NonFinite { .. }) => {
                write_dump(out_dir, &bundle, &e, &history);
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        writeln!(trace, "{}", rec.csv_row()).map_err(|e| Error::io(&trace_path, e))?;
        if history.len() == 20 {
            history.remove(0);
        }
        history.push(rec);
        if rec.iter % 50 == 0 || rec.iter == cfg.iterations {
            info!(
                "iter {} loss_G {:.4} loss_D {:.4} feat {:.4} dis {:.4} gp {:.4}",
                rec.iter, rec.loss_g, rec.loss_d, rec.loss_feat, rec.loss_dis, rec.gp
            );
        }
        if cfg.checkpoint_every > 0 && rec.iter % cfg.checkpoint_every == 0 {
            trace.flush().map_err(|e| Error::io(&trace_path, e))?;
            bundle.save(&latest)?;
        }
    }
    trace.flush().map_err(|e| Error::io(&trace_path, e))?;
    bundle.save(&latest)?;
    let fin = out_dir.join(FINAL_CHECKPOINT);
    bundle.save(&fin)?;
    Ok(fin)
}
