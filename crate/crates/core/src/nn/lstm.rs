//! A single-direction LSTM layer over time-major batches.
//!
//! Sequences are laid out as `(steps * batch, features)` with row
//! `t * batch + b`, so each time step is a contiguous block of rows.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;

use super::params::uniform;
use crate::scalar::Scalar;

/// Gate order along the `4H` axis: input, forget, cell, output.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell<T> {
    pub w_ih: Array2<T>,
    pub w_hh: Array2<T>,
    pub bias: Array2<T>,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct LstmTrace<T> {
    /// Post-activation gates, `(steps * batch, 4H)`.
    pub gates: Array2<T>,
    pub cells: Array2<T>,
    pub hidden: Array2<T>,
}

#[inline]
fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

impl<T: Scalar> LstmCell<T> {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let k = 1.0 / (hidden as f64).sqrt();
        Self {
            w_ih: uniform(4 * hidden, input, k, rng),
            w_hh: uniform(4 * hidden, hidden, k, rng),
            bias: uniform(1, 4 * hidden, k, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.ncols()
    }

    pub fn input(&self) -> usize {
        self.w_ih.ncols()
    }

    pub fn tensors(&self) -> [&Array2<T>; 3] {
        [&self.w_ih, &self.w_hh, &self.bias]
    }

    pub fn tensors_mut(&mut self) -> [&mut Array2<T>; 3] {
        [&mut self.w_ih, &mut self.w_hh, &mut self.bias]
    }

    pub fn run(&self, x: ArrayView2<'_, T>, steps: usize, batch: usize, reverse: bool) -> LstmTrace<T> {
        let h = self.hidden();
        debug_assert_eq!(x.nrows(), steps * batch);
        let mut gates = x.dot(&self.w_ih.t());
        gates += &self.bias;
        let mut cells = Array2::<T>::zeros((steps * batch, h));
        let mut hidden = Array2::<T>::zeros((steps * batch, h));
        let mut h_prev = Array2::<T>::zeros((batch, h));
        let mut c_prev = vec![T::zero(); batch * h];
        for step in 0..steps {
            let t = if reverse { steps - 1 - step } else { step };
            let rows = t * batch..(t + 1) * batch;
            let mut g = gates.slice_mut(s![rows.clone(), ..]);
            if step > 0 {
                general_mat_mul(T::one(), &h_prev, &self.w_hh.t(), T::one(), &mut g);
            }
            let g = g.as_slice_mut().expect("contiguous gate rows");
            let mut c_view = cells.slice_mut(s![rows.clone(), ..]);
            let c_now = c_view.as_slice_mut().expect("contiguous cell rows");
            let mut h_view = hidden.slice_mut(s![rows, ..]);
            let h_now = h_view.as_slice_mut().expect("contiguous hidden rows");
            for b in 0..batch {
                let gr = &mut g[b * 4 * h..(b + 1) * 4 * h];
                for j in 0..h {
                    let i_g = sigmoid(gr[j]);
                    let f_g = sigmoid(gr[h + j]);
                    let c_g = gr[2 * h + j].tanh();
                    let o_g = sigmoid(gr[3 * h + j]);
                    gr[j] = i_g;
                    gr[h + j] = f_g;
                    gr[2 * h + j] = c_g;
                    gr[3 * h + j] = o_g;
                    let c = f_g * c_prev[b * h + j] + i_g * c_g;
                    c_now[b * h + j] = c;
                    h_now[b * h + j] = o_g * c.tanh();
                }
            }
            c_prev.copy_from_slice(c_now);
            h_prev
                .as_slice_mut()
                .expect("contiguous state")
                .copy_from_slice(h_now);
        }
        LstmTrace {
            gates,
            cells,
            hidden,
        }
    }

    /// Backpropagation through time.
    ///
    /// `d_hidden` is the loss gradient w.r.t. every emitted hidden state.
    /// Parameter gradients are accumulated into `grad`; the gradient w.r.t.
    /// the layer input is returned.
    pub fn backward(
        &self,
        x: ArrayView2<'_, T>,
        trace: &LstmTrace<T>,
        d_hidden: ArrayView2<'_, T>,
        steps: usize,
        batch: usize,
        reverse: bool,
        grad: &mut LstmCell<T>,
    ) -> Array2<T> {
        let h = self.hidden();
        let one = T::one();
        let mut d_gates = Array2::<T>::zeros((steps * batch, 4 * h));
        let mut dh_next = Array2::<T>::zeros((batch, h));
        let mut dc_next = vec![T::zero(); batch * h];
        // Hidden state fed into each step, for the recurrent weight gradient.
        let mut h_in = Array2::<T>::zeros((steps * batch, h));
        let order = |step: usize| if reverse { steps - 1 - step } else { step };
        for step in (0..steps).rev() {
            let t = order(step);
            let prev = (step > 0).then(|| order(step - 1));
            let rows = t * batch..(t + 1) * batch;
            if let Some(p) = prev {
                h_in.slice_mut(s![rows.clone(), ..])
                    .assign(&trace.hidden.slice(s![p * batch..(p + 1) * batch, ..]));
            }
            let gates = trace.gates.slice(s![rows.clone(), ..]);
            let gates = gates.as_slice().expect("contiguous gates");
            let cells = trace.cells.slice(s![rows.clone(), ..]);
            let cells = cells.as_slice().expect("contiguous cells");
            let c_prev = prev.map(|p| trace.cells.slice(s![p * batch..(p + 1) * batch, ..]));
            let c_prev = c_prev.as_ref().map(|v| v.as_slice().expect("contiguous cells"));
            let dh_out = d_hidden.slice(s![rows.clone(), ..]);
            let dh_next_s = dh_next.as_slice().expect("contiguous");
            let mut dg_view = d_gates.slice_mut(s![rows.clone(), ..]);
            let dg = dg_view.as_slice_mut().expect("contiguous");
            for b in 0..batch {
                for j in 0..h {
                    let k = b * h + j;
                    let gi = b * 4 * h;
                    let (i_g, f_g, c_g, o_g) = (
                        gates[gi + j],
                        gates[gi + h + j],
                        gates[gi + 2 * h + j],
                        gates[gi + 3 * h + j],
                    );
                    let dh = dh_out[[b, j]] + dh_next_s[k];
                    let tc = cells[k].tanh();
                    let d_o = dh * tc;
                    let dc = dc_next[k] + dh * o_g * (one - tc * tc);
                    let cp = c_prev.map_or(T::zero(), |c| c[k]);
                    dc_next[k] = dc * f_g;
                    dg[gi + j] = dc * c_g * i_g * (one - i_g);
                    dg[gi + h + j] = dc * cp * f_g * (one - f_g);
                    dg[gi + 2 * h + j] = dc * i_g * (one - c_g * c_g);
                    dg[gi + 3 * h + j] = d_o * o_g * (one - o_g);
                }
            }
            let dg = d_gates.slice(s![rows, ..]);
            general_mat_mul(one, &dg, &self.w_hh, T::zero(), &mut dh_next);
        }
        general_mat_mul(one, &d_gates.t(), &h_in, one, &mut grad.w_hh);
        general_mat_mul(one, &d_gates.t(), &x, one, &mut grad.w_ih);
        grad.bias += &d_gates.sum_axis(Axis(0)).insert_axis(Axis(0));
        d_gates.dot(&self.w_ih)
    }
}
