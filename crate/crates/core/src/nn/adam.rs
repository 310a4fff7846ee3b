use ndarray::{ArrayD, Zip};

use super::{NamedView, NamedViewMut, Parameters};
use crate::error::{Error, Result};

/// Adam with bias-corrected moments. Moment buffers are sized on the first
/// step and must keep matching the parameter shapes afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<ArrayD<f64>>,
    pub v: Vec<ArrayD<f64>>,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        Self {
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&mut self, params: &mut impl Parameters, grads: &impl Parameters) -> Result<()> {
        self.step_tensors(params.tensors_mut(), grads.tensors())
    }

    /// Applies one update. Nothing is modified if any shape disagrees or
    /// any gradient is non-finite.
    pub fn step_tensors(&mut self, mut params: Vec<NamedViewMut<'_>>, grads: Vec<NamedView<'_>>) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::shape("adam parameter count", params.len(), grads.len()));
        }
        for ((name, p), (_, g)) in params.iter().zip(&grads) {
            if p.shape() != g.shape() {
                return Err(Error::shape(
                    "adam gradient",
                    format!("{name} {:?}", p.shape()),
                    format!("{:?}", g.shape()),
                ));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient(name.clone()));
            }
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|(_, p)| ArrayD::zeros(p.raw_dim())).collect();
            self.v = self.m.clone();
        } else if self.m.len() != params.len()
            || self.m.iter().zip(&params).any(|(m, (_, p))| m.shape() != p.shape())
        {
            return Err(Error::shape(
                "adam state",
                format!("{} tensors", self.m.len()),
                format!("{} tensors", params.len()),
            ));
        }

        self.t += 1;
        let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.eps, self.lr);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        for (((_, p), (_, g)), (m, v)) in params
            .iter_mut()
            .zip(&grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            });
        }
        Ok(())
    }
}
