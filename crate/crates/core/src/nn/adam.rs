use crate::error::{Error, Result};

use super::MultiTaskNet;

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step_count: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    /// Fresh state for parameter groups of the given lengths.
    pub fn new(learning_rate: f64, group_lengths: &[usize]) -> Self {
        AdamState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step_count: 0,
            first_moment: group_lengths.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: group_lengths.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn for_net(net: &MultiTaskNet, learning_rate: f64) -> Self {
        let lengths: Vec<usize> = net.params().iter().map(|p| p.len()).collect();
        AdamState::new(learning_rate, &lengths)
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moment(&self) -> &[Vec<f64>] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[Vec<f64>] {
        &self.second_moment
    }

    /// Applies one update `p -= lr * m_hat / (sqrt(v_hat) + eps)` to every group.
    pub fn apply(&mut self, params: &mut [&mut [f64]], grads: &[Vec<f64>]) -> Result<()> {
        let congruent = params.len() == grads.len()
            && params.len() == self.first_moment.len()
            && params
                .iter()
                .zip(grads)
                .zip(&self.first_moment)
                .all(|((p, g), m)| p.len() == g.len() && p.len() == m.len());
        if !congruent {
            return Err(Error::Shape(
                "optimizer state, parameters and gradients are not shape-congruent".into(),
            ));
        }

        self.step_count += 1;
        let t = self.step_count as i32;
        let correction1 = 1.0 - self.beta1.powi(t);
        let correction2 = 1.0 - self.beta2.powi(t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / correction1;
                let v_hat = v[i] / correction2;
                p[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}
