use ndarray::Array2;
use rand::Rng;

use crate::scalar::Scalar;

/// A fixed, ordered collection of parameter tensors.
///
/// Gradients are stored in a value of the same type, so optimizers and
/// checkpoints can walk parameters and gradients in lockstep.
pub trait Parameters<T: Scalar> {
    fn tensors(&self) -> Vec<&Array2<T>>;

    fn tensors_mut(&mut self) -> Vec<&mut Array2<T>>;

    fn tensor_names(&self) -> Vec<String>;

    fn zeros_like(&self) -> Self
    where
        Self: Clone,
    {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(T::zero());
        }
        z
    }

    fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Sum of all entries; a cheap fingerprint for freeze checks.
    fn checksum(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|v| v.to_f64_lossy())
            .sum()
    }

    fn max_abs_diff(&self, other: &Self) -> f64 {
        self.tensors()
            .iter()
            .zip(other.tensors())
            .flat_map(|(a, b)| a.iter().zip(b.iter()))
            .map(|(x, y)| (x.to_f64_lossy() - y.to_f64_lossy()).abs())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn uniform<T: Scalar, R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    bound: f64,
    rng: &mut R,
) -> Array2<T> {
    Array2::from_shape_simple_fn((rows, cols), || {
        T::lit(rng.random_range(-bound..=bound))
    })
}
