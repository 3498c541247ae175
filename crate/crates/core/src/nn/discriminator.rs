//! Strided 1-D convolutional critic over `(animation ++ distances)` time
//! series, with spectral normalization on every convolution kernel.
//!
//! Batches are laid out channels-first as `(channels, batch * length)`,
//! column `b * length + t`. Kernels are stored reshaped to
//! `(out_channels, in_channels * kernel)`.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{uniform, Parameters};
use super::spectral::{spectral_normalize, PowerIteration, SpectralNorm};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    pub in_channels: usize,
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// Sequence length the fully connected head is sized for.
    pub seq_len: usize,
    pub leaky_slope: f64,
}

impl DiscriminatorConfig {
    /// Four layers of 64, 32, 16, 8 channels, kernel 3, stride 2.
    pub fn canonical(in_channels: usize, seq_len: usize) -> Self {
        Self {
            in_channels,
            channels: vec![64, 32, 16, 8],
            kernel: 3,
            stride: 2,
            padding: 1,
            seq_len,
            leaky_slope: 0.2,
        }
    }

    /// Temporal length at the input of every layer and at the output.
    pub fn lengths(&self) -> Result<Vec<usize>> {
        let mut out = vec![self.seq_len];
        let mut l = self.seq_len;
        for _ in &self.channels {
            let padded = l + 2 * self.padding;
            if padded < self.kernel {
                return Err(Error::SequenceTooShort {
                    len: self.seq_len,
                    min: self.min_len(),
                });
            }
            l = (padded - self.kernel) / self.stride + 1;
            out.push(l);
        }
        Ok(out)
    }

    /// Shortest input leaving at least one output step.
    pub fn min_len(&self) -> usize {
        (1..=self.kernel.pow(self.channels.len() as u32 + 1))
            .find(|&l| {
                let mut l = l;
                self.channels.iter().all(|_| {
                    let padded = l + 2 * self.padding;
                    if padded < self.kernel {
                        return false;
                    }
                    l = (padded - self.kernel) / self.stride + 1;
                    true
                })
            })
            .unwrap_or(usize::MAX)
    }

    pub fn flat_features(&self) -> Result<usize> {
        let lens = self.lengths()?;
        Ok(self.channels.last().copied().unwrap_or(self.in_channels) * lens[lens.len() - 1])
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.kernel == 0 || self.stride == 0 || self.in_channels == 0 {
            return Err(Error::InvalidConfig("discriminator sizes must be positive".into()));
        }
        self.lengths().map(|_| ())
    }
}

/// Learnable discriminator tensors. Also used to hold their gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorParams<T> {
    pub conv_w: Vec<Array2<T>>,
    /// `(out_channels, 1)`.
    pub conv_b: Vec<Array2<T>>,
    pub fc_w: Array2<T>,
    pub fc_b: Array2<T>,
}

impl<T: Scalar> Parameters<T> for DiscriminatorParams<T> {
    fn tensors(&self) -> Vec<&Array2<T>> {
        let mut v: Vec<&Array2<T>> = Vec::new();
        for (w, b) in self.conv_w.iter().zip(&self.conv_b) {
            v.push(w);
            v.push(b);
        }
        v.push(&self.fc_w);
        v.push(&self.fc_b);
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Array2<T>> {
        let mut v: Vec<&mut Array2<T>> = Vec::new();
        for (w, b) in self.conv_w.iter_mut().zip(self.conv_b.iter_mut()) {
            v.push(w);
            v.push(b);
        }
        v.push(&mut self.fc_w);
        v.push(&mut self.fc_b);
        v
    }

    fn tensor_names(&self) -> Vec<String> {
        let mut v = Vec::new();
        for l in 0..self.conv_w.len() {
            v.push(format!("discriminator.conv{l}.weight"));
            v.push(format!("discriminator.conv{l}.bias"));
        }
        v.push("discriminator.fc.weight".into());
        v.push("discriminator.fc.bias".into());
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator<T> {
    pub config: DiscriminatorConfig,
    pub params: DiscriminatorParams<T>,
    pub spectral: Vec<PowerIteration<T>>,
}

impl<T: Scalar> Discriminator<T> {
    pub fn new<R: Rng + ?Sized>(config: DiscriminatorConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut conv_w = Vec::new();
        let mut conv_b = Vec::new();
        let mut spectral = Vec::new();
        let mut cin = config.in_channels;
        for &cout in &config.channels {
            let fan_in = cin * config.kernel;
            let k = 1.0 / (fan_in as f64).sqrt();
            conv_w.push(uniform(cout, fan_in, k, rng));
            conv_b.push(Array2::zeros((cout, 1)));
            spectral.push(PowerIteration::new(cout, fan_in, rng));
            cin = cout;
        }
        let f = config.flat_features()?;
        let fc_w = uniform(1, f, 1.0 / (f as f64).sqrt(), rng);
        let fc_b = Array2::zeros((1, 1));
        Ok(Self {
            config,
            params: DiscriminatorParams {
                conv_w,
                conv_b,
                fc_w,
                fc_b,
            },
            spectral,
        })
    }

    /// Advance every power iteration by `n_iter` steps and snapshot the
    /// normalized network.
    pub fn normalize(&mut self, n_iter: usize) -> Result<NormalizedCritic<T>> {
        let sn = self
            .params
            .conv_w
            .iter()
            .zip(self.spectral.iter_mut())
            .map(|(w, st)| spectral_normalize(w.view(), st, n_iter))
            .collect();
        NormalizedCritic::new(&self.config, &self.params, sn)
    }

    /// Snapshot using the current singular vector estimates without
    /// advancing them.
    pub fn frozen(&self) -> Result<NormalizedCritic<T>> {
        let sn = self
            .params
            .conv_w
            .iter()
            .zip(self.spectral.iter())
            .map(|(w, st)| spectral_normalize(w.view(), &mut st.clone(), 0))
            .collect();
        NormalizedCritic::new(&self.config, &self.params, sn)
    }
}

/// A discriminator with its kernels divided by their spectral norm
/// estimates, ready for evaluation.
#[derive(Debug, Clone)]
pub struct NormalizedCritic<T> {
    config: DiscriminatorConfig,
    lengths: Vec<usize>,
    pub sn: Vec<SpectralNorm<T>>,
    conv_b: Vec<Array2<T>>,
    fc_w: Array2<T>,
    fc_b: T,
}

pub struct CriticTrace<T> {
    batch: usize,
    cols: Vec<Array2<T>>,
    /// LeakyReLU derivative of each hidden layer (all but the last).
    slopes: Vec<Array2<T>>,
    last: Array2<T>,
}

fn im2col<T: Scalar>(
    x: ArrayView2<'_, T>,
    batch: usize,
    lin: usize,
    lout: usize,
    cfg: &DiscriminatorConfig,
) -> Array2<T> {
    let cin = x.nrows();
    let k = cfg.kernel;
    let mut cols = Array2::<T>::zeros((cin * k, batch * lout));
    for c in 0..cin {
        for kk in 0..k {
            let mut row = cols.row_mut(c * k + kk);
            for b in 0..batch {
                for j in 0..lout {
                    let pos = (j * cfg.stride + kk) as isize - cfg.padding as isize;
                    if pos >= 0 && (pos as usize) < lin {
                        row[b * lout + j] = x[[c, b * lin + pos as usize]];
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`].
fn col2im<T: Scalar>(
    cols: ArrayView2<'_, T>,
    cin: usize,
    batch: usize,
    lin: usize,
    lout: usize,
    cfg: &DiscriminatorConfig,
) -> Array2<T> {
    let k = cfg.kernel;
    let mut x = Array2::<T>::zeros((cin, batch * lin));
    for c in 0..cin {
        for kk in 0..k {
            let row = cols.row(c * k + kk);
            for b in 0..batch {
                for j in 0..lout {
                    let pos = (j * cfg.stride + kk) as isize - cfg.padding as isize;
                    if pos >= 0 && (pos as usize) < lin {
                        x[[c, b * lin + pos as usize]] += row[b * lout + j];
                    }
                }
            }
        }
    }
    x
}

impl<T: Scalar> NormalizedCritic<T> {
    fn new(
        config: &DiscriminatorConfig,
        params: &DiscriminatorParams<T>,
        sn: Vec<SpectralNorm<T>>,
    ) -> Result<Self> {
        Ok(Self {
            config: config.clone(),
            lengths: config.lengths()?,
            sn,
            conv_b: params.conv_b.clone(),
            fc_w: params.fc_w.clone(),
            fc_b: params.fc_b[[0, 0]],
        })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.config
    }

    fn check_input(&self, y: &ArrayView2<'_, T>, batch: usize) -> Result<()> {
        if y.nrows() != self.config.in_channels || y.ncols() != batch * self.config.seq_len {
            return Err(Error::Dimension(format!(
                "critic expects ({}, {} x {}) input, got ({}, {})",
                self.config.in_channels,
                batch,
                self.config.seq_len,
                y.nrows(),
                y.ncols()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, y: ArrayView2<'_, T>, batch: usize) -> Result<(Vec<T>, CriticTrace<T>)> {
        self.check_input(&y, batch)?;
        let n = self.sn.len();
        let alpha = T::lit(self.config.leaky_slope);
        let mut cols = Vec::with_capacity(n);
        let mut slopes = Vec::with_capacity(n.saturating_sub(1));
        let mut a = y.to_owned();
        for (k, sn) in self.sn.iter().enumerate() {
            let c = im2col(a.view(), batch, self.lengths[k], self.lengths[k + 1], &self.config);
            let mut z = sn.weight.dot(&c);
            z += &self.conv_b[k];
            if k + 1 < n {
                let s = z.mapv(|v| if v > T::zero() { T::one() } else { alpha });
                z *= &s;
                slopes.push(s);
            }
            cols.push(c);
            a = z;
        }
        let l_out = self.lengths[n];
        let mut scores = vec![self.fc_b; batch];
        for (c, row) in a.outer_iter().enumerate() {
            for (b, score) in scores.iter_mut().enumerate() {
                for j in 0..l_out {
                    *score += self.fc_w[[0, c * l_out + j]] * row[b * l_out + j];
                }
            }
        }
        Ok((
            scores,
            CriticTrace {
                batch,
                cols,
                slopes,
                last: a,
            },
        ))
    }

    pub fn scores(&self, y: ArrayView2<'_, T>, batch: usize) -> Result<Vec<T>> {
        self.forward(y, batch).map(|(s, _)| s)
    }

    /// Spread per-sample score gradients over the last feature map.
    fn head_gradient(&self, dscores: &[T]) -> Array2<T> {
        let n = self.sn.len();
        let l_out = self.lengths[n];
        let c_out = self.config.channels[n - 1];
        let batch = dscores.len();
        Array2::from_shape_fn((c_out, batch * l_out), |(c, col)| {
            dscores[col / l_out] * self.fc_w[[0, c * l_out + col % l_out]]
        })
    }

    /// Backpropagate per-sample score gradients. Gradients w.r.t. the
    /// normalized kernels, biases and head are accumulated into `grad` when
    /// given; the input gradient is returned.
    pub fn backward(
        &self,
        trace: &CriticTrace<T>,
        dscores: &[T],
        mut grad: Option<&mut DiscriminatorParams<T>>,
    ) -> Array2<T> {
        let n = self.sn.len();
        let batch = trace.batch;
        let l_out = self.lengths[n];
        if let Some(g) = grad.as_deref_mut() {
            for (c, row) in trace.last.outer_iter().enumerate() {
                for (b, &ds) in dscores.iter().enumerate() {
                    for j in 0..l_out {
                        g.fc_w[[0, c * l_out + j]] += ds * row[b * l_out + j];
                    }
                }
            }
            g.fc_b[[0, 0]] += dscores.iter().copied().sum::<T>();
        }
        let mut g_act = self.head_gradient(dscores);
        for k in (0..n).rev() {
            let gz = if k + 1 < n {
                g_act * &trace.slopes[k]
            } else {
                g_act
            };
            if let Some(g) = grad.as_deref_mut() {
                general_mat_mul(T::one(), &gz, &trace.cols[k].t(), T::one(), &mut g.conv_w[k]);
                g.conv_b[k] += &gz.sum_axis(Axis(1)).insert_axis(Axis(1));
            }
            let dcols = self.sn[k].weight.t().dot(&gz);
            let cin = if k == 0 {
                self.config.in_channels
            } else {
                self.config.channels[k - 1]
            };
            g_act = col2im(dcols.view(), cin, batch, self.lengths[k], self.lengths[k + 1], &self.config);
        }
        g_act
    }

    /// `∇_Y D(Y)` for every sample, same layout as the input.
    pub fn input_gradient(&self, y: ArrayView2<'_, T>, batch: usize) -> Result<Array2<T>> {
        let (_, trace) = self.forward(y, batch)?;
        Ok(self.backward(&trace, &vec![T::one(); batch], None))
    }

    /// `mean_b (‖∇_U D(U_b) ⊙ M_b‖₂ − 1)²` on interpolates `u`.
    ///
    /// With `grad`, also accumulates `scale ·` the penalty's gradient w.r.t.
    /// the normalized kernels and the head weights. LeakyReLU derivatives are
    /// piecewise constant, so the input gradient is multilinear in the
    /// weights and its own derivative has no path through the activations;
    /// biases receive nothing.
    pub fn gradient_penalty(
        &self,
        u: ArrayView2<'_, T>,
        mask_ext: ArrayView2<'_, T>,
        batch: usize,
        scale: T,
        grad: Option<&mut DiscriminatorParams<T>>,
    ) -> Result<T> {
        if mask_ext.dim() != u.dim() {
            return Err(Error::Dimension("gradient-penalty mask shape differs from input".into()));
        }
        let (_, trace) = self.forward(u, batch)?;
        let n = self.sn.len();
        // Replay the input-gradient chain, keeping every pre-activation gradient.
        let mut gz_all: Vec<Array2<T>> = Vec::with_capacity(n);
        let mut g_act = self.head_gradient(&vec![T::one(); batch]);
        for k in (0..n).rev() {
            let gz = if k + 1 < n {
                g_act * &trace.slopes[k]
            } else {
                g_act
            };
            let dcols = self.sn[k].weight.t().dot(&gz);
            let cin = if k == 0 {
                self.config.in_channels
            } else {
                self.config.channels[k - 1]
            };
            g_act = col2im(dcols.view(), cin, batch, self.lengths[k], self.lengths[k + 1], &self.config);
            gz_all.push(gz);
        }
        gz_all.reverse();
        let g0 = g_act;
        let l = self.config.seq_len;
        let bt = T::lit(batch as f64);
        let mut penalty = T::zero();
        let mut coeff = vec![T::zero(); batch];
        for b in 0..batch {
            let mut sq = T::zero();
            for c in 0..g0.nrows() {
                for t in 0..l {
                    let v = g0[[c, b * l + t]] * mask_ext[[c, b * l + t]];
                    sq += v * v;
                }
            }
            let norm = sq.sqrt();
            penalty += (norm - T::one()) * (norm - T::one()) / bt;
            if norm > T::zero() {
                coeff[b] = scale * T::lit(2.0) * (norm - T::one()) / (bt * norm);
            }
        }
        let Some(grad) = grad else {
            return Ok(penalty);
        };
        // r = ∂P/∂g0 = coeff_b · g0 ⊙ M (M is binary).
        let mut r = Array2::from_shape_fn(g0.raw_dim(), |(c, col)| {
            coeff[col / l] * g0[[c, col]] * mask_ext[[c, col]]
        });
        for k in 0..n {
            let rc = im2col(r.view(), batch, self.lengths[k], self.lengths[k + 1], &self.config);
            general_mat_mul(T::one(), &gz_all[k], &rc.t(), T::one(), &mut grad.conv_w[k]);
            let mut q = self.sn[k].weight.dot(&rc);
            if k + 1 < n {
                q *= &trace.slopes[k];
            }
            r = q;
        }
        let l_out = self.lengths[n];
        for (c, row) in r.outer_iter().enumerate() {
            for b in 0..batch {
                for j in 0..l_out {
                    grad.fc_w[[0, c * l_out + j]] += row[b * l_out + j];
                }
            }
        }
        Ok(penalty)
    }

    /// Convert gradients w.r.t. normalized kernels into gradients w.r.t. the
    /// raw kernels.
    pub fn unnormalize_grad(&self, grad: DiscriminatorParams<T>) -> DiscriminatorParams<T> {
        let DiscriminatorParams {
            conv_w,
            conv_b,
            fc_w,
            fc_b,
        } = grad;
        DiscriminatorParams {
            conv_w: conv_w
                .iter()
                .zip(&self.sn)
                .map(|(g, sn)| sn.backward(g))
                .collect(),
            conv_b,
            fc_w,
            fc_b,
        }
    }
}
