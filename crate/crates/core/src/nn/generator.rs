//! Stacked bidirectional LSTM generator with a per-frame dense output layer.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::lstm::{LstmCell, LstmTrace};
use super::params::{uniform, Parameters};
use crate::constraints::ConstraintKind;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n_layers: usize,
    /// State size per direction; the two directions are concatenated.
    pub hidden_units: usize,
    pub input_width: usize,
    pub output_width: usize,
    pub dropout_rate: f64,
}

impl GeneratorConfig {
    /// Input = masked animation + one mask channel + one noise channel +
    /// constraint features.
    pub fn for_kind(kind: ConstraintKind, n_shapes: usize) -> Self {
        Self {
            n_layers: 2,
            hidden_units: 128,
            input_width: n_shapes + 2 + kind.n_feat(n_shapes),
            output_width: n_shapes,
            dropout_rate: 0.3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0 || self.hidden_units == 0 || self.input_width == 0 || self.output_width == 0 {
            return Err(Error::InvalidConfig("generator sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidConfig(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiLstm<T> {
    pub forward: LstmCell<T>,
    pub backward: LstmCell<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator<T> {
    pub config: GeneratorConfig,
    pub layers: Vec<BiLstm<T>>,
    pub w_out: Array2<T>,
    pub b_out: Array2<T>,
}

struct LayerTrace<T> {
    input: Array2<T>,
    forward: LstmTrace<T>,
    backward: LstmTrace<T>,
    /// Inverted-dropout multipliers applied to this layer's output.
    dropout: Option<Array2<T>>,
}

/// Everything the backward pass needs from one forward evaluation.
pub struct GeneratorTrace<T> {
    steps: usize,
    batch: usize,
    layers: Vec<LayerTrace<T>>,
    top: Array2<T>,
}

impl<T: Scalar> Generator<T> {
    pub fn new<R: Rng + ?Sized>(config: GeneratorConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let h = config.hidden_units;
        let mut layers = Vec::with_capacity(config.n_layers);
        for l in 0..config.n_layers {
            let input = if l == 0 { config.input_width } else { 2 * h };
            layers.push(BiLstm {
                forward: LstmCell::new(input, h, rng),
                backward: LstmCell::new(input, h, rng),
            });
        }
        let k = 1.0 / ((2 * h) as f64).sqrt();
        let w_out = uniform(config.output_width, 2 * h, k, rng);
        let b_out = uniform(1, config.output_width, k, rng);
        Ok(Self {
            config,
            layers,
            w_out,
            b_out,
        })
    }

    /// Evaluate on a time-major batch `(steps * batch, input_width)`.
    ///
    /// Dropout is applied between recurrent layers when `dropout_rng` is
    /// given (training mode) and skipped otherwise.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        input: ArrayView2<'_, T>,
        steps: usize,
        batch: usize,
        mut dropout_rng: Option<&mut R>,
    ) -> Result<(Array2<T>, GeneratorTrace<T>)> {
        if input.ncols() != self.config.input_width {
            return Err(Error::Dimension(format!(
                "generator expects {} input features, got {}",
                self.config.input_width,
                input.ncols()
            )));
        }
        if steps == 0 || batch == 0 || input.nrows() != steps * batch {
            return Err(Error::Dimension(format!(
                "input has {} rows, expected {steps} steps x {batch} sequences",
                input.nrows()
            )));
        }
        let h = self.config.hidden_units;
        let keep = 1.0 - self.config.dropout_rate;
        let n = self.layers.len();
        let mut traces = Vec::with_capacity(n);
        let mut x = input.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            let fwd = layer.forward.run(x.view(), steps, batch, false);
            let bwd = layer.backward.run(x.view(), steps, batch, true);
            let mut out = Array2::<T>::zeros((steps * batch, 2 * h));
            out.slice_mut(s![.., 0..h]).assign(&fwd.hidden);
            out.slice_mut(s![.., h..2 * h]).assign(&bwd.hidden);
            let dropout = match dropout_rng.as_deref_mut() {
                Some(rng) if l + 1 < n && self.config.dropout_rate > 0.0 => {
                    let scale = T::lit(1.0 / keep);
                    let m = Array2::from_shape_simple_fn(out.raw_dim(), || {
                        if rng.random::<f64>() < keep {
                            scale
                        } else {
                            T::zero()
                        }
                    });
                    out *= &m;
                    Some(m)
                }
                _ => None,
            };
            traces.push(LayerTrace {
                input: std::mem::replace(&mut x, out),
                forward: fwd,
                backward: bwd,
                dropout,
            });
        }
        let mut y = x.dot(&self.w_out.t());
        y += &self.b_out;
        Ok((
            y,
            GeneratorTrace {
                steps,
                batch,
                layers: traces,
                top: x,
            },
        ))
    }

    /// Inference: no dropout.
    pub fn predict(&self, input: ArrayView2<'_, T>, steps: usize, batch: usize) -> Result<Array2<T>> {
        self.forward::<rand_chacha::ChaCha8Rng>(input, steps, batch, None)
            .map(|(y, _)| y)
    }

    /// Accumulate parameter gradients of a loss with output gradient `d_out`
    /// into `grad`; returns the gradient w.r.t. the input.
    pub fn backward(&self, trace: &GeneratorTrace<T>, d_out: ArrayView2<'_, T>, grad: &mut Generator<T>) -> Array2<T> {
        let (steps, batch) = (trace.steps, trace.batch);
        let h = self.config.hidden_units;
        general_mat_mul(T::one(), &d_out.t(), &trace.top, T::one(), &mut grad.w_out);
        grad.b_out += &d_out.sum_axis(Axis(0)).insert_axis(Axis(0));
        let mut d = d_out.dot(&self.w_out);
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let lt = &trace.layers[l];
            if let Some(m) = &lt.dropout {
                d *= m;
            }
            let d_f = d.slice(s![.., 0..h]).to_owned();
            let d_b = d.slice(s![.., h..2 * h]).to_owned();
            let gl = &mut grad.layers[l];
            let mut dx = layer.forward.backward(
                lt.input.view(),
                &lt.forward,
                d_f.view(),
                steps,
                batch,
                false,
                &mut gl.forward,
            );
            dx += &layer.backward.backward(
                lt.input.view(),
                &lt.backward,
                d_b.view(),
                steps,
                batch,
                true,
                &mut gl.backward,
            );
            d = dx;
        }
        d
    }
}

impl<T: Scalar> Parameters<T> for Generator<T> {
    fn tensors(&self) -> Vec<&Array2<T>> {
        let mut v: Vec<&Array2<T>> = Vec::new();
        for l in &self.layers {
            v.extend(l.forward.tensors());
            v.extend(l.backward.tensors());
        }
        v.push(&self.w_out);
        v.push(&self.b_out);
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Array2<T>> {
        let mut v: Vec<&mut Array2<T>> = Vec::new();
        for l in &mut self.layers {
            v.extend(l.forward.tensors_mut());
            v.extend(l.backward.tensors_mut());
        }
        v.push(&mut self.w_out);
        v.push(&mut self.b_out);
        v
    }

    fn tensor_names(&self) -> Vec<String> {
        let mut v = Vec::new();
        for l in 0..self.layers.len() {
            for dir in ["fwd", "bwd"] {
                for t in ["w_ih", "w_hh", "bias"] {
                    v.push(format!("generator.lstm{l}.{dir}.{t}"));
                }
            }
        }
        v.push("generator.out.weight".into());
        v.push("generator.out.bias".into());
        v
    }
}
