//! Spectral normalization by power iteration.

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::scalar::Scalar;

const EPS: f64 = 1e-12;

/// Persistent left/right singular vector estimates of one weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerIteration<T> {
    pub u: Array1<T>,
    pub v: Array1<T>,
}

/// A normalized weight `W / σ̂` with the quantities its backward pass needs.
#[derive(Debug, Clone)]
pub struct SpectralNorm<T> {
    pub weight: Array2<T>,
    pub sigma: T,
    pub u: Array1<T>,
    pub v: Array1<T>,
}

fn normalized<T: Scalar>(x: Array1<T>) -> Array1<T> {
    let n = x.dot(&x).sqrt();
    let d = if n > T::lit(EPS) { n } else { T::lit(EPS) };
    x / d
}

impl<T: Scalar> PowerIteration<T> {
    pub fn new<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let mut draw = |n: usize| {
            normalized(Array1::from_shape_simple_fn(n, || {
                T::lit(rng.sample::<f64, _>(StandardNormal))
            }))
        };
        let u = draw(rows);
        let v = draw(cols);
        Self { u, v }
    }
}

/// Run `n_iter` power iterations (updating `state`) and return `W / σ̂` with
/// `σ̂ = uᵀ W v`. A zero matrix yields `σ̂ = 0`, guarded by `1e-12` in the
/// division.
pub fn spectral_normalize<T: Scalar>(
    weight: ArrayView2<'_, T>,
    state: &mut PowerIteration<T>,
    n_iter: usize,
) -> SpectralNorm<T> {
    for _ in 0..n_iter {
        state.v = normalized(weight.t().dot(&state.u));
        state.u = normalized(weight.dot(&state.v));
    }
    let sigma = state.u.dot(&weight.dot(&state.v));
    let denom = if sigma.abs() > T::lit(EPS) { sigma } else { T::lit(EPS) };
    SpectralNorm {
        weight: weight.mapv(|w| w / denom),
        sigma: denom,
        u: state.u.clone(),
        v: state.v.clone(),
    }
}

impl<T: Scalar> SpectralNorm<T> {
    /// Map a gradient w.r.t. the normalized weight to one w.r.t. the raw
    /// weight, treating `u` and `v` as constants:
    /// `dW = (G - <G, Ŵ> u vᵀ) / σ̂`.
    pub fn backward(&self, grad_normalized: &Array2<T>) -> Array2<T> {
        let inner: T = grad_normalized
            .iter()
            .zip(self.weight.iter())
            .map(|(&g, &w)| g * w)
            .sum();
        let mut out = grad_normalized.clone();
        for ((i, j), o) in out.indexed_iter_mut() {
            *o = (*o - inner * self.u[i] * self.v[j]) / self.sigma;
        }
        out
    }
}
