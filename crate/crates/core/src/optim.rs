//! Adam optimizer over a fixed list of parameter matrices.

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::params::{NamedTensors, ParamError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 5e-5, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub steps: u64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, shapes: &[(usize, usize)]) -> Self {
        Self {
            config,
            steps: 0,
            m: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
            v: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
        }
    }

    /// One bias-corrected update of `params` from `grads`.
    pub fn step(&mut self, params: &mut [&mut Array2<f64>], grads: &[Array2<f64>]) {
        assert_eq!(params.len(), self.m.len(), "parameter count changed");
        assert_eq!(grads.len(), self.m.len(), "gradient count mismatch");
        self.steps += 1;
        let AdamConfig { learning_rate, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.steps as i32);
        let c2 = 1.0 - beta2.powi(self.steps as i32);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            Zip::from(&mut **p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *p -= learning_rate * (*m / c1) / ((*v / c2).sqrt() + eps);
            });
        }
    }

    pub fn write_tensors(&self, out: &mut NamedTensors) {
        for (i, (m, v)) in self.m.iter().zip(&self.v).enumerate() {
            out.push(format!("adam.m{i}"), m.clone());
            out.push(format!("adam.v{i}"), v.clone());
        }
    }

    /// Restores moment estimates written by [`Self::write_tensors`].
    pub fn read_tensors(
        config: AdamConfig,
        steps: u64,
        shapes: &[(usize, usize)],
        src: &mut NamedTensors,
    ) -> Result<Self, ParamError> {
        let mut adam = Self::new(config, shapes);
        adam.steps = steps;
        for (i, &shape) in shapes.iter().enumerate() {
            adam.m[i] = src.take(&format!("adam.m{i}"), shape)?;
            adam.v[i] = src.take(&format!("adam.v{i}"), shape)?;
        }
        Ok(adam)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Array2::from_elem((1, 2), 1.0);
        let mut adam = Adam::new(AdamConfig { learning_rate: 0.1, ..Default::default() }, &[(1, 2)]);
        adam.step(&mut [&mut p], &[Array2::from_shape_vec((1, 2), vec![3.0, -0.5]).unwrap()]);
        assert!((p[[0, 0]] - 0.9).abs() < 1e-6);
        assert!((p[[0, 1]] - 1.1).abs() < 1e-6);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = Array2::from_elem((2, 2), 0.3);
        let before = p.clone();
        let mut adam = Adam::new(AdamConfig::default(), &[(2, 2)]);
        adam.step(&mut [&mut p], &[Array2::zeros((2, 2))]);
        assert_eq!(p, before);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = Array2::from_elem((1, 1), 5.0);
        let mut adam = Adam::new(AdamConfig { learning_rate: 0.1, ..Default::default() }, &[(1, 1)]);
        for _ in 0..500 {
            let g = &p * 2.0;
            adam.step(&mut [&mut p], &[g]);
        }
        assert!(p[[0, 0]].abs() < 1e-2);
    }

    #[test]
    fn state_round_trip() {
        let mut p = Array2::from_elem((1, 3), 1.0);
        let mut adam = Adam::new(AdamConfig::default(), &[(1, 3)]);
        adam.step(&mut [&mut p], &[Array2::from_elem((1, 3), 0.5)]);
        let mut t = NamedTensors::new();
        adam.write_tensors(&mut t);
        let back = Adam::read_tensors(adam.config, adam.steps, &[(1, 3)], &mut t).unwrap();
        assert_eq!(back, adam);
    }
}
