use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected first and second moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Array2<T>>,
    pub v: Vec<Array2<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, shapes: &[&Array2<T>]) -> Self {
        let zeros = || shapes.iter().map(|t| Array2::zeros(t.raw_dim())).collect();
        Self {
            config,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn update(&mut self, params: Vec<&mut Array2<T>>, grads: Vec<&Array2<T>>) {
        assert_eq!(params.len(), self.m.len(), "parameter count changed");
        assert_eq!(grads.len(), self.m.len(), "gradient count differs from parameters");
        self.step += 1;
        let c = &self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        let step_size = T::lit(c.lr / bc1);
        let bc2_sqrt = T::lit(bc2.sqrt());
        let (b1, b2, eps) = (T::lit(c.beta1), T::lit(c.beta2), T::lit(c.eps));
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        for (((p, g), m), v) in params
            .into_iter()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            ndarray::Zip::from(p)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    *m = b1 * *m + one_b1 * g;
                    *v = b2 * *v + one_b2 * g * g;
                    let denom = v.sqrt() / bc2_sqrt + eps;
                    *p -= step_size * *m / denom;
                });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Array2::<f64>::from_elem((2, 2), 1.0);
        let g = Array2::<f64>::from_shape_vec((2, 2), vec![0.5, -2.0, 1e-3, 0.0]).unwrap();
        let mut opt = Adam::new(AdamConfig::default(), &[&p]);
        opt.update(vec![&mut p], vec![&g]);
        // First bias-corrected step is lr * sign(g) up to eps.
        assert!((p[[0, 0]] - (1.0 - 1e-3)).abs() < 1e-8);
        assert!((p[[0, 1]] - (1.0 + 1e-3)).abs() < 1e-8);
        assert!((p[[1, 0]] - (1.0 - 1e-3)).abs() < 1e-7);
        assert_eq!(p[[1, 1]], 1.0);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = Array2::<f64>::from_elem((1, 3), 2.0);
        let mut opt = Adam::new(AdamConfig { lr: 0.05, ..Default::default() }, &[&p]);
        for _ in 0..2000 {
            let g = p.mapv(|x| 2.0 * (x - 0.5));
            opt.update(vec![&mut p], vec![&g]);
        }
        assert!(p.iter().all(|&x| (x - 0.5).abs() < 1e-3));
    }
}
