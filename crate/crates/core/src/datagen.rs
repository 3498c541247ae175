//! Procedural corpus: speech-driven mouth motion, blinks, expression ramps,
//! and a simulated tracker for noisy variants.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::anim::{load_animation, save_animation, Animation, CANONICAL_FPS};
use crate::error::{Error, Result};
use crate::rig::{canonical_names, shape_index, N_SHAPES};
use crate::training::TrainingItem;
use crate::util::{read_json, write_json};
use crate::viseme::{PhonemeTimeline, VisemeVocabulary, BILABIAL, N_VISEMES, SILENCE, VISEME_TABLE};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub jitter_std: f64,
    pub spike_prob: f64,
    pub spike_scale: f64,
    pub drift_std: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            jitter_std: 0.03,
            spike_prob: 0.02,
            spike_scale: 0.3,
            drift_std: 0.005,
        }
    }
}

impl NoiseConfig {
    pub fn zero() -> Self {
        Self {
            jitter_std: 0.0,
            spike_prob: 0.0,
            spike_scale: 0.0,
            drift_std: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.jitter_std, self.spike_prob, self.spike_scale, self.drift_std];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || self.spike_prob > 1.0 {
            return Err(Error::InvalidConfig(format!("invalid noise config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub n_sequences: usize,
    /// Held-out sequences written next to the training set.
    pub n_test: usize,
    pub length: usize,
    pub fps: f64,
    pub seed: u64,
    /// Blinks per minute.
    pub blink_rate: f64,
    /// Phoneme rate range in Hz; `None` keeps the mouth at rest.
    pub speech_band: Option<[f64; 2]>,
    /// Probability that the next speech unit is a pause.
    pub pause_prob: f64,
    /// Expression events per minute.
    pub expression_rate: f64,
    /// Natural frequency of the critically damped mouth dynamics, rad/s.
    pub mouth_omega: f64,
    /// Frames by which bilabial closures start before their label.
    pub bilabial_lead: usize,
    pub noise: NoiseConfig,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            n_sequences: 64,
            n_test: 8,
            length: 200,
            fps: CANONICAL_FPS,
            seed: 0,
            blink_rate: 15.0,
            speech_band: Some([5.0, 10.0]),
            pause_prob: 0.1,
            expression_rate: 6.0,
            mouth_omega: 30.0,
            bilabial_lead: 4,
            noise: NoiseConfig::default(),
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        let rates_ok = [self.blink_rate, self.expression_rate]
            .iter()
            .all(|r| r.is_finite() && *r >= 0.0);
        let band_ok = self
            .speech_band
            .is_none_or(|[lo, hi]| lo > 0.0 && hi >= lo && hi.is_finite());
        if self.length == 0 || !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::InvalidConfig("corpus length and fps must be positive".into()));
        }
        if !rates_ok || !band_ok || !(0.0..1.0).contains(&self.pause_prob) || !(self.mouth_omega > 0.0) {
            return Err(Error::InvalidConfig(format!("invalid corpus config {self:?}")));
        }
        self.noise.validate()
    }

    /// Clean, neutral-everywhere generator settings.
    pub fn silent(length: usize, seed: u64) -> Self {
        Self {
            length,
            seed,
            blink_rate: 0.0,
            speech_band: None,
            expression_rate: 0.0,
            ..Self::default()
        }
    }
}

/// Mouth pose per viseme class as (shape, weight) pairs; paired left/right
/// shapes are listed once by their left name and mirrored.
fn viseme_pose(class: usize) -> &'static [(&'static str, f64)] {
    match class {
        0 => &[],
        1 => &[("jawOpen", 0.55), ("mouthFunnel", 0.4)],
        2 => &[("jawOpen", 0.7), ("mouthStretchLeft", 0.2)],
        3 => &[("jawOpen", 0.4), ("mouthStretchLeft", 0.35), ("mouthSmileLeft", 0.1)],
        4 => &[("jawOpen", 0.2), ("mouthStretchLeft", 0.45), ("mouthSmileLeft", 0.25)],
        5 => &[("jawOpen", 0.45), ("mouthFunnel", 0.6), ("mouthPucker", 0.2)],
        6 => &[("jawOpen", 0.45)],
        7 => &[("jawOpen", 0.15), ("mouthPucker", 0.7), ("mouthFunnel", 0.3)],
        8 => &[("jawOpen", 0.15), ("mouthFunnel", 0.5), ("mouthUpperUpLeft", 0.2)],
        9 => &[("jawOpen", 0.3)],
        10 => &[("jawOpen", 0.2), ("mouthLowerDownLeft", 0.15)],
        11 => &[("jawOpen", 0.08), ("mouthStretchLeft", 0.3), ("mouthSmileLeft", 0.15)],
        12 => &[("jawOpen", 0.12), ("mouthFunnel", 0.6), ("mouthPucker", 0.2)],
        13 => &[("jawOpen", 0.15), ("mouthLowerDownLeft", 0.2)],
        14 => &[("jawOpen", 0.05), ("mouthRollLower", 0.6), ("mouthUpperUpLeft", 0.3)],
        BILABIAL => &[("mouthClose", 1.0), ("mouthPressLeft", 0.4)],
        16 => &[("jawOpen", 0.1), ("mouthPucker", 0.8)],
        17 => &[("jawOpen", 0.15), ("mouthPucker", 0.35), ("mouthFunnel", 0.3)],
        _ => unreachable!("viseme class out of range"),
    }
}

fn mirror(name: &str) -> Option<String> {
    name.strip_suffix("Left").map(|stem| format!("{stem}Right"))
}

/// Dense target vector over all shapes, scaled by `amp` (bilabial closure is
/// never scaled).
fn viseme_target(class: usize, amp: f64) -> [f64; N_SHAPES] {
    let mut w = [0.0; N_SHAPES];
    let scale = if class == BILABIAL { 1.0 } else { amp };
    for &(name, v) in viseme_pose(class) {
        let v = (v * scale).min(1.0);
        w[shape_index(name).expect("mouth shape")] = v;
        if let Some(right) = mirror(name) {
            w[shape_index(&right).expect("mirrored shape")] = v;
        }
    }
    w
}

/// Per-frame viseme classes and phoneme symbols.
fn sample_speech<R: Rng + ?Sized>(cfg: &CorpusConfig, rng: &mut R) -> (Vec<usize>, Vec<String>) {
    let l = cfg.length;
    let mut classes = Vec::with_capacity(l);
    let mut phonemes = Vec::with_capacity(l);
    let Some([lo, hi]) = cfg.speech_band else {
        return (vec![0; l], vec![SILENCE.to_string(); l]);
    };
    while classes.len() < l {
        let (class, symbol, seconds) = if rng.random::<f64>() < cfg.pause_prob {
            (0, SILENCE, rng.random_range(0.2..=0.6))
        } else {
            let class = rng.random_range(1..N_VISEMES);
            let symbol = *VISEME_TABLE[class].1.choose(rng).expect("non-empty group");
            (class, symbol, 1.0 / rng.random_range(lo..=hi))
        };
        let frames = ((seconds * cfg.fps).round() as usize).max(1);
        for _ in 0..frames.min(l - classes.len()) {
            classes.push(class);
            phonemes.push(symbol.to_string());
        }
    }
    (classes, phonemes)
}

/// Critically damped tracking of piecewise-constant targets, integrated
/// exactly frame to frame and starting at rest on the first target.
fn track_targets(targets: &[[f64; N_SHAPES]], omega: f64, dt: f64) -> Array2<f64> {
    let mut out = Array2::zeros((targets.len(), N_SHAPES));
    let mut x = targets.first().copied().unwrap_or([0.0; N_SHAPES]);
    let mut v = [0.0; N_SHAPES];
    let decay = (-omega * dt).exp();
    for (t, target) in targets.iter().enumerate() {
        for c in 0..N_SHAPES {
            let e0 = x[c] - target[c];
            let k = v[c] + omega * e0;
            x[c] = target[c] + (e0 + k * dt) * decay;
            v[c] = (v[c] - omega * dt * k) * decay;
            out[[t, c]] = x[c];
        }
    }
    out
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

/// Blink weights per frame: pulses of 3 to 5 frames peaking at exactly 1.
fn blink_track<R: Rng + ?Sized>(cfg: &CorpusConfig, rng: &mut R) -> Vec<f64> {
    let l = cfg.length;
    let mut w = vec![0.0; l];
    let p = cfg.blink_rate / 60.0 / cfg.fps;
    let mut t = 0;
    while t < l {
        if p > 0.0 && rng.random::<f64>() < p {
            let d: usize = rng.random_range(3..=5);
            let peak = (std::f64::consts::PI * (d + 1).div_ceil(2) as f64 / (d + 1) as f64).sin();
            for k in 0..d.min(l - t) {
                let s = (std::f64::consts::PI * (k + 1) as f64 / (d + 1) as f64).sin() / peak;
                w[t + k] = s.min(1.0);
            }
            t += d + 2;
        } else {
            t += 1;
        }
    }
    w
}

const EXPRESSION_GROUPS: [&[&str]; 10] = [
    &["browInnerUp"],
    &["browDownLeft", "browDownRight"],
    &["browOuterUpLeft", "browOuterUpRight"],
    &["cheekPuff"],
    &["cheekSquintLeft", "cheekSquintRight"],
    &["noseSneerLeft", "noseSneerRight"],
    &["mouthSmileLeft", "mouthSmileRight"],
    &["mouthFrownLeft", "mouthFrownRight"],
    &["eyeSquintLeft", "eyeSquintRight"],
    &["eyeWideLeft", "eyeWideRight"],
];

/// Smoothstep attack/hold/release events added onto `frames`.
fn add_expressions<R: Rng + ?Sized>(frames: &mut Array2<f64>, cfg: &CorpusConfig, rng: &mut R) {
    let l = cfg.length;
    let p = cfg.expression_rate / 60.0 / cfg.fps;
    if p <= 0.0 {
        return;
    }
    for start in 0..l {
        if rng.random::<f64>() >= p {
            continue;
        }
        let group = EXPRESSION_GROUPS[rng.random_range(0..EXPRESSION_GROUPS.len())];
        let amp = rng.random_range(0.2..=0.8);
        let attack = rng.random_range(0.2..=0.8) * cfg.fps;
        let hold = rng.random_range(0.3..=1.5) * cfg.fps;
        let release = rng.random_range(0.2..=0.8) * cfg.fps;
        for t in start..l {
            let u = (t - start) as f64;
            let env = if u < attack {
                smoothstep(u / attack)
            } else if u < attack + hold {
                1.0
            } else {
                1.0 - smoothstep((u - attack - hold) / release)
            };
            if u >= attack + hold + release {
                break;
            }
            for name in group {
                frames[[t, shape_index(name).expect("expression shape")]] += amp * env;
            }
        }
    }
}

/// One clean sequence and its per-frame phoneme labels.
pub fn synth_sequence<R: Rng + ?Sized>(cfg: &CorpusConfig, rng: &mut R) -> Result<(Animation, PhonemeTimeline)> {
    cfg.validate()?;
    let l = cfg.length;
    let (classes, phonemes) = sample_speech(cfg, rng);
    let mut targets = Vec::with_capacity(l);
    let mut amp = 1.0;
    for t in 0..l {
        if t == 0 || classes[t] != classes[t - 1] {
            amp = rng.random_range(0.8..=1.2);
        }
        let lead = (t..=(t + cfg.bilabial_lead).min(l - 1)).any(|k| classes[k] == BILABIAL);
        let class = if lead { BILABIAL } else { classes[t] };
        targets.push(viseme_target(class, amp));
    }
    let mut frames = track_targets(&targets, cfg.mouth_omega, 1.0 / cfg.fps);
    add_expressions(&mut frames, cfg, rng);
    let blink = blink_track(cfg, rng);
    let lid: Vec<usize> = ["Left", "Right"]
        .iter()
        .map(|s| shape_index(&format!("eyeBlink{s}")).expect("blink shape"))
        .collect();
    let open: Vec<usize> = ["eyeSquintLeft", "eyeSquintRight", "eyeWideLeft", "eyeWideRight"]
        .iter()
        .map(|s| shape_index(s).expect("eye shape"))
        .collect();
    frames.mapv_inplace(|v| v.clamp(0.0, 1.0));
    for (t, &b) in blink.iter().enumerate() {
        for &c in &lid {
            frames[[t, c]] = b;
        }
        for &c in &open {
            frames[[t, c]] *= 1.0 - b;
        }
    }
    let anim = Animation::new(cfg.fps, canonical_names(), frames)?;
    Ok((
        anim,
        PhonemeTimeline {
            fps: cfg.fps,
            phonemes,
        },
    ))
}

/// `clamp(anim + jitter + spikes + drift)`.
pub fn add_tracker_noise<R: Rng + ?Sized>(anim: &Animation, cfg: &NoiseConfig, rng: &mut R) -> Result<Animation> {
    cfg.validate()?;
    let (l, n) = anim.frames().dim();
    let mut frames = anim.frames().clone();
    let jitter = Normal::new(0.0, cfg.jitter_std).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let drift_step = Normal::new(0.0, cfg.drift_std).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut drift = vec![0.0; n];
    for t in 0..l {
        let spike = cfg.spike_prob > 0.0 && rng.random::<f64>() < cfg.spike_prob;
        for c in 0..n {
            let mut d = 0.0;
            if cfg.jitter_std > 0.0 {
                d += jitter.sample(rng);
            }
            if cfg.drift_std > 0.0 {
                drift[c] += drift_step.sample(rng);
                d += drift[c];
            }
            if spike {
                d += if rng.random::<bool>() { cfg.spike_scale } else { -cfg.spike_scale };
            }
            frames[[t, c]] = (frames[[t, c]] + d).clamp(0.0, 1.0);
        }
    }
    anim.with_frames(frames)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub clean: PathBuf,
    pub noisy: PathBuf,
    pub phonemes: PathBuf,
}

/// Paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub seed: u64,
    pub fps: f64,
    pub length: usize,
    pub total_duration_seconds: f64,
    pub items: Vec<CorpusEntry>,
    #[serde(default)]
    pub test_items: Vec<CorpusEntry>,
    pub config: CorpusConfig,
}

impl CorpusManifest {
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(self, path)
    }

    /// Read the listed triples, resolving paths against `manifest_path`.
    pub fn load_items(&self, manifest_path: &Path, entries: &[CorpusEntry]) -> Result<Vec<TrainingItem>> {
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        let vocab = VisemeVocabulary::canonical();
        entries
            .iter()
            .map(|e| {
                let clean = load_animation(&base.join(&e.clean), false)?;
                let noisy = load_animation(&base.join(&e.noisy), false)?;
                let timeline = PhonemeTimeline::load(&base.join(&e.phonemes))?;
                TrainingItem::new(clean, noisy, vocab.encode(&timeline.phonemes)?)
            })
            .collect()
    }
}

/// Independent random stream for sequence `index`; `noisy` selects the
/// tracker-noise stream.
fn sequence_rng(seed: u64, index: u64, noisy: bool) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * index + u64::from(noisy));
    rng
}

/// Clean, noisy and phoneme tracks of sequence `index`.
pub fn synth_item(cfg: &CorpusConfig, index: u64) -> Result<(Animation, Animation, PhonemeTimeline)> {
    let (clean, timeline) = synth_sequence(cfg, &mut sequence_rng(cfg.seed, index, false))?;
    let noisy = add_tracker_noise(&clean, &cfg.noise, &mut sequence_rng(cfg.seed, index, true))?;
    Ok((clean, noisy, timeline))
}

/// In-memory corpus: training items followed by test items.
pub fn synth_items(cfg: &CorpusConfig) -> Result<(Vec<TrainingItem>, Vec<TrainingItem>)> {
    let vocab = VisemeVocabulary::canonical();
    let mut all = Vec::with_capacity(cfg.n_sequences + cfg.n_test);
    for i in 0..(cfg.n_sequences + cfg.n_test) as u64 {
        let (clean, noisy, timeline) = synth_item(cfg, i)?;
        all.push(TrainingItem::new(clean, noisy, vocab.encode(&timeline.phonemes)?)?);
    }
    let test = all.split_off(cfg.n_sequences);
    Ok((all, test))
}

pub const MANIFEST_NAME: &str = "manifest.json";

/// Write every sequence and `manifest.json` into `out_dir`.
pub fn build_corpus(cfg: &CorpusConfig, out_dir: &Path) -> Result<CorpusManifest> {
    cfg.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut items = Vec::new();
    let mut test_items = Vec::new();
    for i in 0..cfg.n_sequences + cfg.n_test {
        let (clean, noisy, timeline) = synth_item(cfg, i as u64)?;
        let (prefix, k) = if i < cfg.n_sequences {
            ("train", i)
        } else {
            ("test", i - cfg.n_sequences)
        };
        let entry = CorpusEntry {
            clean: format!("{prefix}_{k:04}_clean.json").into(),
            noisy: format!("{prefix}_{k:04}_noisy.json").into(),
            phonemes: format!("{prefix}_{k:04}_phonemes.json").into(),
        };
        save_animation(&clean, &out_dir.join(&entry.clean))?;
        save_animation(&noisy, &out_dir.join(&entry.noisy))?;
        timeline.save(&out_dir.join(&entry.phonemes))?;
        if i < cfg.n_sequences {
            items.push(entry);
        } else {
            test_items.push(entry);
        }
    }
    let manifest = CorpusManifest {
        seed: cfg.seed,
        fps: cfg.fps,
        length: cfg.length,
        total_duration_seconds: cfg.n_sequences as f64 * cfg.length as f64 / cfg.fps,
        items,
        test_items,
        config: cfg.clone(),
    };
    manifest.save(&out_dir.join(MANIFEST_NAME))?;
    Ok(manifest)
}
