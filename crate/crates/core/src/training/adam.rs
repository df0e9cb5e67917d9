use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bias-corrected Adam with one moment buffer pair per parameter tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Number of completed steps.
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(sizes: impl IntoIterator<Item = usize>) -> Self {
        let sizes: Vec<usize> = sizes.into_iter().collect();
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// One update. Non-finite gradients abort the step before anything is modified.
    pub fn update<'a>(&mut self, params: impl IntoIterator<Item = &'a mut [f64]>, grads: &[Vec<f64>], lr: f64) -> Result<()> {
        let params: Vec<&mut [f64]> = params.into_iter().collect();
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(Error::Config(format!(
                "optimizer tracks {} tensors, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != g.len() || g.len() != self.m[i].len() {
                return Err(Error::Shape {
                    op: "adam",
                    lhs: (p.len(), 1),
                    rhs: (g.len(), 1),
                });
            }
            if let Some(bad) = g.iter().position(|x| !x.is_finite()) {
                return Err(Error::Divergence(format!("non-finite gradient in tensor {i} at index {bad}")));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (i, (p, g)) in params.into_iter().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..p.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                p[j] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
