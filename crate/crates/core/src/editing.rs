//! Inference-time editing: fill user segments with the generator, and the
//! classical interpolation baselines it is compared against.

use std::path::{Path, PathBuf};

use ndarray::{s, Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::anim::{load_animation, Animation};
use crate::constraints::{
    build_keyframe_constraint, build_noisy_constraint, build_viseme_constraint, ConstraintKind, ConstraintMatrix,
    Keyframe, KeyframeSpec,
};
use crate::error::{Error, Result};
use crate::mask::{segments_to_mask, Mask, Segment};
use crate::model::{GeneratorInput, ModelBundle};
use crate::scalar::Scalar;
use crate::util::read_json;
use crate::viseme::{PhonemeTimeline, VisemeVocabulary};

/// Guidance attached to an edit.
#[derive(Debug, Clone, PartialEq)]
pub enum Guidance {
    None,
    Keyframes(KeyframeSpec),
    Noisy(Animation),
    Visemes(PhonemeTimeline),
}

impl Guidance {
    pub fn kind(&self) -> ConstraintKind {
        match self {
            Guidance::None => ConstraintKind::None,
            Guidance::Keyframes(_) => ConstraintKind::Keyframes,
            Guidance::Noisy(_) => ConstraintKind::Noisy,
            Guidance::Visemes(_) => ConstraintKind::Visemes,
        }
    }

    pub fn constraint(&self, mask: &Mask, n_shapes: usize) -> Result<ConstraintMatrix> {
        match self {
            Guidance::None => Ok(ConstraintMatrix::none(mask)),
            Guidance::Keyframes(spec) => build_keyframe_constraint(spec, mask, n_shapes),
            Guidance::Noisy(noisy) => build_noisy_constraint(noisy, mask),
            Guidance::Visemes(tl) => build_viseme_constraint(&tl.phonemes, &VisemeVocabulary::canonical(), mask),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EditRequest<'a, T> {
    pub animation: Animation,
    pub segments: Vec<Segment>,
    pub guidance: Guidance,
    pub model: &'a ModelBundle<T>,
    /// Seed of the latent noise `z`.
    pub seed: u64,
    /// Warp filled segments so they pass through the keyframes exactly.
    pub exact_keyframes: bool,
}

/// Fill `req.segments` with the generator (inference mode), recompose with
/// the untouched frames and clamp generated weights to `[0, 1]`.
pub fn edit<T: Scalar>(req: &EditRequest<'_, T>) -> Result<Animation> {
    let anim = &req.animation;
    let model = req.model;
    if req.guidance.kind() != model.constraint_kind {
        return Err(Error::KindMismatch {
            model: model.constraint_kind,
            request: req.guidance.kind(),
        });
    }
    let n = model.generator.config.output_width;
    if anim.n_channels() != n {
        return Err(Error::Dimension(format!(
            "model generates {n} channels, animation has {}",
            anim.n_channels()
        )));
    }
    let mask = segments_to_mask(&req.segments, anim.len())?;
    let constraint = req.guidance.constraint(&mask, n)?;
    if mask.segments().is_empty() {
        return Ok(anim.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
    let input = GeneratorInput::<T>::from_constraint(anim, &mask, &constraint, &mut rng)?;
    let out = model.generator.predict(input.features().view(), anim.len(), 1)?;
    let mut gen = out.mapv(|v| v.to_f64_lossy());
    if req.exact_keyframes {
        if let Guidance::Keyframes(spec) = &req.guidance {
            warp_to_keyframes(&mut gen, &mask, spec);
        }
    }
    let mut frames = anim.frames().clone();
    for seg in mask.segments() {
        let block = gen.slice(s![seg.start..seg.end, ..]).mapv(|v| v.clamp(0.0, 1.0));
        frames.slice_mut(s![seg.start..seg.end, ..]).assign(&block);
    }
    anim.with_frames(frames)
}

/// Add a piecewise-linear residual per segment that is zero just outside the
/// segment and `keyframe − generated` at every keyframe.
pub fn warp_to_keyframes(gen: &mut Array2<f64>, mask: &Mask, spec: &KeyframeSpec) {
    let n = gen.ncols();
    for seg in mask.segments() {
        let mut anchors: Vec<(f64, Array1<f64>)> = vec![(seg.start as f64 - 1.0, Array1::zeros(n))];
        for k in spec.entries.iter().filter(|k| seg.contains(k.frame)) {
            let target = Array1::from(k.weights.clone());
            anchors.push((k.frame as f64, &target - &gen.row(k.frame)));
        }
        anchors.push((seg.end as f64, Array1::zeros(n)));
        if anchors.len() == 2 {
            continue;
        }
        for t in seg.start..seg.end {
            let x = t as f64;
            let i = anchors.partition_point(|(f, _)| *f <= x) - 1;
            let ((x0, r0), (x1, r1)) = (&anchors[i], &anchors[i + 1]);
            let w = (x - x0) / (x1 - x0);
            let r = r0 * (1.0 - w) + r1 * w;
            let mut row = gen.row_mut(t);
            row += &r;
        }
        for k in spec.entries.iter().filter(|k| seg.contains(k.frame)) {
            gen.row_mut(k.frame).assign(&Array1::from(k.weights.clone()));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    Linear,
    Cubic,
}

impl std::str::FromStr for Interpolation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Interpolation::Linear),
            "cubic" => Ok(Interpolation::Cubic),
            other => Err(Error::InvalidConfig(format!("unknown interpolation {other:?}"))),
        }
    }
}

/// Cubic Hermite curve from `(0, p0)` to `(h, p1)` with end slopes `m0`, `m1`
/// (per unit of the abscissa).
pub fn hermite(p0: f64, m0: f64, p1: f64, m1: f64, h: f64, x: f64) -> f64 {
    let u = x / h;
    let (u2, u3) = (u * u, u * u * u);
    (2.0 * u3 - 3.0 * u2 + 1.0) * p0
        + (u3 - 2.0 * u2 + u) * h * m0
        + (-2.0 * u3 + 3.0 * u2) * p1
        + (u3 - u2) * h * m1
}

/// Boundary values and one-sided finite-difference slopes around a segment.
struct Boundary {
    left: Option<(f64, f64)>,
    right: Option<(f64, f64)>,
}

fn boundary(col: ndarray::ArrayView1<'_, f64>, seg: &Segment) -> Boundary {
    let l = col.len();
    let left = (seg.start > 0).then(|| {
        let a = col[seg.start - 1];
        let slope = if seg.start >= 2 { a - col[seg.start - 2] } else { 0.0 };
        (a, slope)
    });
    let right = (seg.end < l).then(|| {
        let b = col[seg.end];
        let slope = if seg.end + 1 < l { col[seg.end + 1] - b } else { 0.0 };
        (b, slope)
    });
    Boundary { left, right }
}

/// Fill each segment per channel from its boundary frames: a straight line,
/// or a Hermite cubic matching boundary values and one-sided slopes. A
/// segment touching one end of the sequence holds the other boundary value.
pub fn interpolate_baseline(anim: &Animation, segments: &[Segment], method: Interpolation) -> Result<Animation> {
    let mask = segments_to_mask(segments, anim.len())?;
    let mut frames = anim.frames().clone();
    for seg in mask.segments() {
        if seg.start == 0 && seg.end == anim.len() {
            return Err(Error::NoBoundary(format!(
                "segment [{}, {}) covers the whole sequence",
                seg.start, seg.end
            )));
        }
        let n = seg.len();
        let h = (n + 1) as f64;
        for c in 0..anim.n_channels() {
            let bd = boundary(anim.frames().column(c), seg);
            for k in 0..n {
                let x = (k + 1) as f64;
                let v = match (bd.left, bd.right, method) {
                    (Some((a, _)), Some((b, _)), Interpolation::Linear) => a + (b - a) * x / h,
                    (Some((a, m0)), Some((b, m1)), Interpolation::Cubic) => {
                        hermite(a, m0, b, m1, h, x).clamp(0.0, 1.0)
                    }
                    (Some((a, _)), None, _) => a,
                    (None, Some((b, _)), _) => b,
                    (None, None, _) => unreachable!("whole-sequence segments rejected above"),
                };
                frames[[seg.start + k, c]] = v;
            }
        }
    }
    anim.with_frames(frames)
}

/// Guidance as written in an edit spec file. Paths are relative to the spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ConstraintSpec {
    None,
    Keyframes { keyframes: Vec<Keyframe> },
    Noisy { path: PathBuf },
    Visemes { path: PathBuf },
}

/// Edit spec file: `{"segments": [{"start": s, "end": e}, ...], "constraint": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditSpec {
    pub segments: Vec<Segment>,
    #[serde(default = "no_constraint")]
    pub constraint: ConstraintSpec,
}

fn no_constraint() -> ConstraintSpec {
    ConstraintSpec::None
}

impl EditSpec {
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    /// Materialize the guidance, reading referenced files relative to
    /// `spec_path`'s directory.
    pub fn guidance(&self, spec_path: &Path) -> Result<Guidance> {
        let base = spec_path.parent().unwrap_or(Path::new("."));
        Ok(match &self.constraint {
            ConstraintSpec::None => Guidance::None,
            ConstraintSpec::Keyframes { keyframes } => Guidance::Keyframes(KeyframeSpec {
                entries: keyframes.clone(),
            }),
            ConstraintSpec::Noisy { path } => Guidance::Noisy(load_animation(&base.join(path), true)?),
            ConstraintSpec::Visemes { path } => Guidance::Visemes(PhonemeTimeline::load(&base.join(path))?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BundleConfigs;
    use crate::nn::{DiscriminatorConfig, GeneratorConfig};
    use crate::rig::{canonical_names, DistanceRig, N_SHAPES};
    use crate::training::TrainConfig;

    fn ramp_anim(len: usize) -> Animation {
        let frames = Array2::from_shape_fn((len, N_SHAPES), |(t, c)| {
            0.5 + 0.3 * ((t as f64) * 0.11 + c as f64).sin()
        });
        Animation::new(25.0, canonical_names(), frames).unwrap()
    }

    fn tiny_bundle(kind: ConstraintKind) -> ModelBundle<f64> {
        let train = TrainConfig {
            constraint_kind: kind,
            seq_len: 16,
            seed: 4,
            ..TrainConfig::default()
        };
        let mut generator = GeneratorConfig::for_kind(kind, N_SHAPES);
        generator.hidden_units = 8;
        let configs = BundleConfigs {
            generator,
            discriminator: DiscriminatorConfig::canonical(N_SHAPES + 6, 16),
            train,
        };
        ModelBundle::new(configs, DistanceRig::canonical()).unwrap()
    }

    fn request(model: &ModelBundle<f64>, segments: Vec<Segment>, seed: u64) -> EditRequest<'_, f64> {
        EditRequest {
            animation: ramp_anim(60),
            segments,
            guidance: Guidance::None,
            model,
            seed,
            exact_keyframes: false,
        }
    }

    #[test]
    fn empty_segments_return_input() {
        let model = tiny_bundle(ConstraintKind::None);
        let req = request(&model, vec![], 1);
        assert_eq!(edit(&req).unwrap(), req.animation);
    }

    #[test]
    fn full_mask_generates_valid_weights() {
        let model = tiny_bundle(ConstraintKind::None);
        let out = edit(&request(&model, vec![Segment::new(0, 60)], 1)).unwrap();
        assert_eq!(out.frames().dim(), (60, N_SHAPES));
        assert!(out.frames().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn determinism_and_locality() {
        let model = tiny_bundle(ConstraintKind::None);
        let segs = vec![Segment::new(10, 25), Segment::new(40, 44)];
        let a = edit(&request(&model, segs.clone(), 7)).unwrap();
        let b = edit(&request(&model, segs.clone(), 7)).unwrap();
        let c = edit(&request(&model, segs.clone(), 8)).unwrap();
        assert_eq!(a, b);
        let input = ramp_anim(60);
        for t in 0..60 {
            let inside = segs.iter().any(|s| s.contains(t));
            if !inside {
                assert_eq!(a.frame(t), input.frame(t));
                assert_eq!(c.frame(t), input.frame(t));
            }
        }
        assert_ne!(a, c);
    }

    #[test]
    fn kind_mismatch_is_rejected() {
        let model = tiny_bundle(ConstraintKind::Visemes);
        let err = edit(&request(&model, vec![Segment::new(3, 9)], 0)).unwrap_err();
        assert!(matches!(err, Error::KindMismatch { .. }));
    }

    #[test]
    fn exact_keyframes_are_hit() {
        let model = tiny_bundle(ConstraintKind::Keyframes);
        let target = vec![0.25; N_SHAPES];
        let spec = KeyframeSpec {
            entries: vec![
                Keyframe {
                    frame: 15,
                    weights: target.clone(),
                },
                Keyframe {
                    frame: 20,
                    weights: vec![0.75; N_SHAPES],
                },
            ],
        };
        let mut req = request(&model, vec![Segment::new(10, 30)], 3);
        req.guidance = Guidance::Keyframes(spec);
        req.exact_keyframes = true;
        let out = edit(&req).unwrap();
        assert!(out.frame(15).iter().all(|&v| v == 0.25));
        assert!(out.frame(20).iter().all(|&v| v == 0.75));
        req.exact_keyframes = false;
        let raw = edit(&req).unwrap();
        // Outside the segment nothing moves.
        assert_eq!(raw.frame(5), out.frame(5));
    }

    fn single(values: Vec<f64>) -> Animation {
        let l = values.len();
        Animation::new(25.0, vec!["x".into()], Array2::from_shape_vec((l, 1), values).unwrap()).unwrap()
    }

    #[test]
    fn linear_fill_oracle() {
        let mut v = vec![0.0; 30];
        for x in v.iter_mut().skip(20) {
            *x = 1.0;
        }
        let out = interpolate_baseline(&single(v.clone()), &[Segment::new(10, 20)], Interpolation::Linear).unwrap();
        for k in 0..10 {
            assert!((out.frames()[[10 + k, 0]] - (k + 1) as f64 / 11.0).abs() < 1e-12);
        }
        for t in (0..10).chain(20..30) {
            assert_eq!(out.frames()[[t, 0]], v[t]);
        }
    }

    #[test]
    fn cubic_fill_of_flat_boundaries_is_constant() {
        let v = vec![0.4; 25];
        let out = interpolate_baseline(&single(v), &[Segment::new(5, 15)], Interpolation::Cubic).unwrap();
        assert!(out.frames().iter().all(|&x| (x - 0.4).abs() < 1e-12));
    }

    #[test]
    fn cubic_boundary_slopes_match_finite_differences() {
        let v: Vec<f64> = (0..40).map(|t| 0.5 + 0.2 * (t as f64 * 0.2).sin()).collect();
        let (s, e) = (12usize, 25usize);
        let h = (e - s + 1) as f64;
        let (a, m0) = (v[s - 1], v[s - 1] - v[s - 2]);
        let (b, m1) = (v[e], v[e + 1] - v[e]);
        let d = 1e-6;
        let left = (hermite(a, m0, b, m1, h, d) - hermite(a, m0, b, m1, h, 0.0)) / d;
        let right = (hermite(a, m0, b, m1, h, h) - hermite(a, m0, b, m1, h, h - d)) / d;
        assert!((left - m0).abs() < 1e-6 && (right - m1).abs() < 1e-6);
        assert_eq!(hermite(a, m0, b, m1, h, 0.0), a);
        assert!((hermite(a, m0, b, m1, h, h) - b).abs() < 1e-15);
        let out = interpolate_baseline(&single(v.clone()), &[Segment::new(s, e)], Interpolation::Cubic).unwrap();
        for k in 0..(e - s) {
            let x = hermite(a, m0, b, m1, h, (k + 1) as f64);
            assert!((out.frames()[[s + k, 0]] - x).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_boundaries() {
        let v: Vec<f64> = (0..10).map(|t| t as f64 / 10.0).collect();
        let out = interpolate_baseline(&single(v.clone()), &[Segment::new(0, 3)], Interpolation::Linear).unwrap();
        assert!((0..3).all(|t| out.frames()[[t, 0]] == v[3]));
        let out = interpolate_baseline(&single(v.clone()), &[Segment::new(7, 10)], Interpolation::Cubic).unwrap();
        assert!((7..10).all(|t| out.frames()[[t, 0]] == v[6]));
        assert!(matches!(
            interpolate_baseline(&single(v), &[Segment::new(0, 10)], Interpolation::Linear),
            Err(Error::NoBoundary(_))
        ));
    }

    #[test]
    fn edit_spec_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("edit.json");
        std::fs::write(
            &path,
            r#"{"segments": [{"start": 2, "end": 5}], "constraint": {"type": "visemes", "path": "ph.json"}}"#,
        )
        .unwrap();
        PhonemeTimeline {
            fps: 25.0,
            phonemes: vec!["sil".into(); 8],
        }
        .save(&dir.path().join("ph.json"))
        .unwrap();
        let spec = EditSpec::load(&path).unwrap();
        assert_eq!(spec.segments, vec![Segment::new(2, 5)]);
        assert_eq!(spec.guidance(&path).unwrap().kind(), ConstraintKind::Visemes);
        std::fs::write(&path, r#"{"segments": []}"#).unwrap();
        assert_eq!(EditSpec::load(&path).unwrap().constraint, ConstraintSpec::None);
    }
}
