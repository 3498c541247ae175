//! Training objectives.
//!
//! Every elementwise loss is reduced by the mean over all entries, so the
//! weights stay comparable across sequence lengths and batch sizes.

use ndarray::{Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::nn::NormalizedCritic;
use crate::rig::DistanceRig;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub w_feat: f64,
    pub alpha_gt: f64,
    pub w_gp: f64,
    pub w_dis: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w_feat: 1.0,
            alpha_gt: 10.0,
            w_gp: 10.0,
            w_dis: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.w_feat, self.alpha_gt, self.w_gp, self.w_dis];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidConfig(format!("loss weights must be non-negative: {self:?}")));
        }
        Ok(())
    }
}

fn check_same<T>(a: &ArrayView2<'_, T>, b: &ArrayView2<'_, T>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension(format!("{:?} vs {:?}", a.dim(), b.dim())));
    }
    Ok(())
}

#[inline]
fn sign<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Masked reconstruction loss over rows with per-row erase flags:
/// `mean(α (1 − M) ⊙ |Δ| + M ⊙ |Δ|)`.
pub fn feat_loss_rows<T: Scalar>(
    gen: ArrayView2<'_, T>,
    gt: ArrayView2<'_, T>,
    erased: &[bool],
    alpha_gt: T,
) -> Result<T> {
    check_same(&gen, &gt)?;
    if erased.len() != gen.nrows() {
        return Err(Error::Dimension("mask length differs from row count".into()));
    }
    let mut total = T::zero();
    for ((g, x), &m) in gen.outer_iter().zip(gt.outer_iter()).zip(erased) {
        let w = if m { T::one() } else { alpha_gt };
        let row: T = g.iter().zip(x.iter()).map(|(&a, &b)| (a - b).abs()).sum();
        total += w * row;
    }
    Ok(total / T::lit(gen.len() as f64))
}

/// Gradient of [`feat_loss_rows`] w.r.t. `gen`, times `scale`.
pub fn feat_loss_grad_rows<T: Scalar>(
    gen: ArrayView2<'_, T>,
    gt: ArrayView2<'_, T>,
    erased: &[bool],
    alpha_gt: T,
    scale: T,
) -> Array2<T> {
    let inv = scale / T::lit(gen.len() as f64);
    let mut out = Array2::zeros(gen.raw_dim());
    for (t, mut row) in out.outer_iter_mut().enumerate() {
        let w = if erased[t] { T::one() } else { alpha_gt };
        for ((o, &a), &b) in row.iter_mut().zip(gen.row(t)).zip(gt.row(t)) {
            *o = inv * w * sign(a - b);
        }
    }
    out
}

/// Reconstruction loss of one sequence against ground truth.
pub fn loss_feat<T: Scalar>(gen_out: &Array2<T>, gt: &Array2<T>, mask: &Mask, alpha_gt: T) -> Result<T> {
    if mask.len() != gen_out.nrows() {
        return Err(Error::Dimension(format!(
            "mask has {} frames, output has {}",
            mask.len(),
            gen_out.nrows()
        )));
    }
    feat_loss_rows(gen_out.view(), gt.view(), &mask.frame_flags(), alpha_gt)
}

/// Mean absolute difference of the distance curves. The rig offset cancels,
/// so only `A` matters.
pub fn dis_loss_rows<T: Scalar>(gen: ArrayView2<'_, T>, gt: ArrayView2<'_, T>, a: &Array2<T>) -> Result<T> {
    check_same(&gen, &gt)?;
    if a.ncols() != gen.ncols() {
        return Err(Error::Dimension(format!(
            "rig expects {} channels, got {}",
            a.ncols(),
            gen.ncols()
        )));
    }
    let delta = &gen - &gt;
    let d = delta.dot(&a.t());
    Ok(d.iter().map(|v| v.abs()).sum::<T>() / T::lit(d.len() as f64))
}

pub fn dis_loss_grad_rows<T: Scalar>(
    gen: ArrayView2<'_, T>,
    gt: ArrayView2<'_, T>,
    a: &Array2<T>,
    scale: T,
) -> Array2<T> {
    let delta = &gen - &gt;
    let d = delta.dot(&a.t());
    let inv = scale / T::lit(d.len() as f64);
    d.mapv(|v| inv * sign(v)).dot(a)
}

pub fn loss_dis<T: Scalar>(gen_out: &Array2<T>, gt: &Array2<T>, rig: &DistanceRig) -> Result<T> {
    dis_loss_rows(gen_out.view(), gt.view(), &rig.matrix_as::<T>())
}

/// `mean(1 − D) + w_feat L_feat + w_dis L_dis`.
pub fn loss_generator<T: Scalar>(d_scores: &[T], l_feat: T, l_dis: T, weights: &LossWeights) -> T {
    let n = T::lit(d_scores.len().max(1) as f64);
    let adv = d_scores.iter().map(|&s| T::one() - s).sum::<T>() / n;
    adv + T::lit(weights.w_feat) * l_feat + T::lit(weights.w_dis) * l_dis
}

/// `mean(max(0, 1 − D(Y_gt))) + mean(max(0, 1 + D(Y_rec))) + w_gp L_gp`.
/// With `hinge = false` the margins are not clipped.
pub fn loss_discriminator<T: Scalar>(
    scores_gt: &[T],
    scores_rec: &[T],
    gp: T,
    weights: &LossWeights,
    hinge: bool,
) -> T {
    let clip = |v: T| if hinge { v.max(T::zero()) } else { v };
    let mean = |s: &[T], f: &dyn Fn(T) -> T| s.iter().map(|&v| f(v)).sum::<T>() / T::lit(s.len().max(1) as f64);
    mean(scores_gt, &|s| clip(T::one() - s)) + mean(scores_rec, &|s| clip(T::one() + s)) + T::lit(weights.w_gp) * gp
}

/// Anything whose input gradient can be evaluated on a channels-first batch.
pub trait Critic<T: Scalar> {
    fn input_gradient(&self, y: ArrayView2<'_, T>, batch: usize) -> Result<Array2<T>>;
}

impl<T: Scalar> Critic<T> for NormalizedCritic<T> {
    fn input_gradient(&self, y: ArrayView2<'_, T>, batch: usize) -> Result<Array2<T>> {
        NormalizedCritic::input_gradient(self, y, batch)
    }
}

/// Real and recomposed critic inputs with their interpolates.
#[derive(Debug, Clone)]
pub struct AdversarialBatch<T> {
    pub y_gt: Array2<T>,
    pub y_rec: Array2<T>,
    /// One interpolation weight per sample.
    pub t: Vec<T>,
    /// `U = t Y_gt + (1 − t) Y_rec`.
    pub u: Array2<T>,
    /// Frame mask repeated across every input channel.
    pub mask_ext: Array2<T>,
    pub batch: usize,
    pub steps: usize,
}

impl<T: Scalar> AdversarialBatch<T> {
    pub fn new(y_gt: Array2<T>, y_rec: Array2<T>, t: Vec<T>, erased: &[Vec<bool>]) -> Result<Self> {
        if y_gt.dim() != y_rec.dim() {
            return Err(Error::Dimension("real and recomposed batches differ in shape".into()));
        }
        let batch = t.len();
        if batch == 0 || erased.len() != batch || !y_gt.ncols().is_multiple_of(batch) {
            return Err(Error::Dimension("batch size disagrees across adversarial inputs".into()));
        }
        let steps = y_gt.ncols() / batch;
        if erased.iter().any(|m| m.len() != steps) {
            return Err(Error::Dimension("mask length differs from sequence length".into()));
        }
        let mut u = Array2::zeros(y_gt.raw_dim());
        Zip::indexed(&mut u)
            .and(&y_gt)
            .and(&y_rec)
            .for_each(|(_, col), u, &g, &r| {
                let tb = t[col / steps];
                *u = tb * g + (T::one() - tb) * r;
            });
        let mask_ext = Array2::from_shape_fn(y_gt.raw_dim(), |(_, col)| {
            if erased[col / steps][col % steps] {
                T::one()
            } else {
                T::zero()
            }
        });
        Ok(Self {
            y_gt,
            y_rec,
            t,
            u,
            mask_ext,
            batch,
            steps,
        })
    }
}

/// Per-sample `‖g_b ⊙ M_b‖₂` of a channels-first gradient.
pub fn masked_gradient_norms<T: Scalar>(grad: ArrayView2<'_, T>, mask_ext: ArrayView2<'_, T>, batch: usize) -> Vec<T> {
    let steps = grad.ncols() / batch;
    let mut sq = vec![T::zero(); batch];
    Zip::indexed(grad).and(mask_ext).for_each(|(_, col), &g, &m| {
        let v = g * m;
        sq[col / steps] += v * v;
    });
    sq.into_iter().map(|s| s.sqrt()).collect()
}

/// `mean_b (‖∇_U D(U_b) ⊙ M_b‖₂ − 1)²`.
pub fn gradient_penalty<T: Scalar, C: Critic<T> + ?Sized>(critic: &C, batch: &AdversarialBatch<T>) -> Result<T> {
    let g = critic.input_gradient(batch.u.view(), batch.batch)?;
    if g.dim() != batch.u.dim() {
        return Err(Error::Dimension("critic gradient has the wrong shape".into()));
    }
    let norms = masked_gradient_norms(g.view(), batch.mask_ext.view(), batch.batch);
    let n = T::lit(batch.batch as f64);
    Ok(norms.into_iter().map(|v| (v - T::one()) * (v - T::one())).sum::<T>() / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::{segments_to_mask, Segment};
    use crate::rig::{shape_index, N_SHAPES};
    use proptest::prelude::*;

    #[test]
    fn feat_examples() {
        let a = Array2::from_shape_fn((5, 3), |(i, j)| (i * 3 + j) as f64 * 0.1);
        assert_eq!(loss_feat(&a, &a, &Mask::full(5), 10.0).unwrap(), 0.0);
        let b = &a + 0.25;
        assert!((loss_feat(&b, &a, &Mask::full(5), 10.0).unwrap() - 0.25).abs() < 1e-15);
        // L=2, N=1: frame 0 kept, frame 1 erased.
        let gen = Array2::from_shape_vec((2, 1), vec![0.2, 0.4]).unwrap();
        let gt = Array2::zeros((2, 1));
        let m = segments_to_mask(&[Segment::new(1, 2)], 2).unwrap();
        assert!((loss_feat::<f64>(&gen, &gt, &m, 10.0).unwrap() - 1.2).abs() < 1e-12);
        assert!(loss_feat(&gen, &gt, &Mask::full(3), 10.0).is_err());
    }

    #[test]
    fn dis_examples() {
        let rig = DistanceRig::canonical();
        let a = Array2::from_elem((4, N_SHAPES), 0.3);
        assert_eq!(loss_dis(&a, &a, &rig).unwrap(), 0.0);
        let mut b = a.clone();
        b.column_mut(shape_index("browInnerUp").unwrap()).fill(0.9);
        assert_eq!(loss_dis(&b, &a, &rig).unwrap(), 0.0);
        // A single distance row with unit weight on channel 0.
        let mut m = Array2::<f64>::zeros((6, 2));
        m[[0, 0]] = 1.0;
        let gen = Array2::from_shape_vec((1, 2), vec![0.6, 0.0]).unwrap();
        let gt = Array2::zeros((1, 2));
        assert!((dis_loss_rows(gen.view(), gt.view(), &m).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn generator_loss_examples() {
        let w = LossWeights::default();
        assert_eq!(loss_generator(&[1.0], 0.0, 0.0, &w), 0.0);
        assert!((loss_generator::<f64>(&[0.0], 0.5, 0.1, &w) - 1.6).abs() < 1e-15);
        let zero = LossWeights {
            w_feat: 0.0,
            alpha_gt: 0.0,
            w_gp: 0.0,
            w_dis: 0.0,
        };
        assert_eq!(loss_generator(&[0.37], 5.0, 7.0, &zero), 1.0 - 0.37);
    }

    #[test]
    fn discriminator_loss_examples() {
        let w = LossWeights::default();
        assert_eq!(loss_discriminator(&[1.0], &[-1.0], 0.0, &w, true), 0.0);
        assert_eq!(loss_discriminator(&[0.0], &[0.0], 0.0, &w, true), 2.0);
        assert!((loss_discriminator::<f64>(&[1.0], &[-1.0], 0.04, &w, true) - 0.4).abs() < 1e-15);
        // Unhinged form lets confident scores go negative.
        assert_eq!(loss_discriminator(&[3.0], &[-1.0], 0.0, &w, false), -2.0);
        assert_eq!(loss_discriminator(&[3.0], &[-1.0], 0.0, &w, true), 0.0);
    }

    struct Linear(Array2<f64>);
    impl Critic<f64> for Linear {
        fn input_gradient(&self, _: ArrayView2<'_, f64>, batch: usize) -> Result<Array2<f64>> {
            let (c, l) = self.0.dim();
            Ok(Array2::from_shape_fn((c, l * batch), |(i, col)| self.0[[i, col % l]]))
        }
    }

    fn toy_batch(erased: Vec<bool>) -> AdversarialBatch<f64> {
        let l = erased.len();
        let y = Array2::from_shape_fn((4, l), |(i, j)| (i + j) as f64);
        AdversarialBatch::new(y.clone(), y * 0.5, vec![0.3], &[erased]).unwrap()
    }

    #[test]
    fn penalty_of_unit_masked_linear_critic_is_zero() {
        let erased = vec![false, true, true, false, true, false];
        let batch = toy_batch(erased);
        let m = batch.mask_ext.clone();
        let coeff = &m / m.iter().map(|v| v * v).sum::<f64>().sqrt();
        let gp = gradient_penalty(&Linear(coeff), &batch).unwrap();
        assert!(gp < 1e-20);
    }

    #[test]
    fn penalty_of_constant_critic_is_one() {
        let batch = toy_batch(vec![true; 5]);
        let gp = gradient_penalty(&Linear(Array2::zeros((4, 5))), &batch).unwrap();
        assert_eq!(gp, 1.0);
    }

    #[test]
    fn interpolates_are_convex_combinations() {
        let batch = toy_batch(vec![false, true, false]);
        for ((&u, &g), &r) in batch.u.iter().zip(&batch.y_gt).zip(&batch.y_rec) {
            assert_eq!(u, 0.3 * g + 0.7 * r);
        }
        for col in 0..3 {
            let expected = if col == 1 { 1.0 } else { 0.0 };
            assert!(batch.mask_ext.column(col).iter().all(|&v| v == expected));
        }
    }

    proptest! {
        #[test]
        fn feat_loss_matches_elementwise_oracle(
            vals in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 24),
            flags in prop::collection::vec(any::<bool>(), 6),
            alpha in 0.0f64..20.0,
        ) {
            let gen = Array2::from_shape_fn((6, 4), |(i, j)| vals[i * 4 + j].0);
            let gt = Array2::from_shape_fn((6, 4), |(i, j)| vals[i * 4 + j].1);
            let dense = Mask::from_flags(&flags).dense(4);
            let oracle = (0..6).flat_map(|i| (0..4).map(move |j| (i, j)))
                .map(|(i, j)| {
                    let d = (gen[[i, j]] - gt[[i, j]]).abs();
                    alpha * (1.0 - dense[[i, j]]) * d + dense[[i, j]] * d
                })
                .sum::<f64>() / 24.0;
            let got = loss_feat(&gen, &gt, &Mask::from_flags(&flags), alpha).unwrap();
            prop_assert!((got - oracle).abs() <= 1e-12);
            prop_assert!(got >= 0.0);
        }
    }
}
