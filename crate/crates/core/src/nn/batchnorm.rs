use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::{NamedView, NamedViewMut, Parameters};
use crate::error::{Error, Result};

/// Per-feature batch normalization. Training mode uses the biased batch
/// variance; inference mode uses the running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub eps: f64,
    pub momentum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormGrad {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct BatchNormCache {
    x_hat: Array2<f64>,
    inv_std: Array1<f64>,
    batch_mean: Array1<f64>,
    batch_var: Array1<f64>,
    training: bool,
}

impl BatchNorm {
    pub fn new(features: usize) -> Self {
        Self {
            gamma: Array1::ones(features),
            beta: Array1::zeros(features),
            running_mean: Array1::zeros(features),
            running_var: Array1::ones(features),
            eps: 1e-5,
            momentum: 0.1,
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.len()
    }

    /// Normalizes without touching the running statistics.
    pub fn forward(&self, x: ArrayView2<f64>, training: bool) -> Result<(Array2<f64>, BatchNormCache)> {
        if x.ncols() != self.features() {
            return Err(Error::shape("batch norm input", self.features(), x.ncols()));
        }
        let (mean, var) = if training {
            if x.nrows() < 2 {
                return Err(Error::InvalidArgument(
                    "batch norm in training mode needs a batch of at least 2 rows".into(),
                ));
            }
            let mean = x.mean_axis(Axis(0)).unwrap();
            let var = x.var_axis(Axis(0), 0.0);
            (mean, var)
        } else {
            (self.running_mean.clone(), self.running_var.clone())
        };
        let inv_std = var.mapv(|v| 1.0 / (v + self.eps).sqrt());
        let x_hat = (&x - &mean) * &inv_std;
        let out = &x_hat * &self.gamma + &self.beta;
        Ok((
            out,
            BatchNormCache {
                x_hat,
                inv_std,
                batch_mean: mean,
                batch_var: var,
                training,
            },
        ))
    }

    /// Forward pass that also folds batch statistics into the running
    /// estimates when `training` is set.
    pub fn apply(&mut self, x: ArrayView2<f64>, training: bool) -> Result<Array2<f64>> {
        let (out, cache) = self.forward(x, training)?;
        self.update_running(&cache);
        Ok(out)
    }

    pub fn update_running(&mut self, cache: &BatchNormCache) {
        if !cache.training {
            return;
        }
        let m = self.momentum;
        self.running_mean = &self.running_mean * (1.0 - m) + &cache.batch_mean * m;
        self.running_var = &self.running_var * (1.0 - m) + &cache.batch_var * m;
    }

    pub fn backward(&self, cache: &BatchNormCache, grad_out: ArrayView2<f64>) -> (BatchNormGrad, Array2<f64>) {
        let grad = BatchNormGrad {
            gamma: (&grad_out * &cache.x_hat).sum_axis(Axis(0)),
            beta: grad_out.sum_axis(Axis(0)),
        };
        let d_xhat = &grad_out * &self.gamma;
        let dx = if cache.training {
            let n = grad_out.nrows() as f64;
            let sum_d = d_xhat.sum_axis(Axis(0));
            let sum_dx = (&d_xhat * &cache.x_hat).sum_axis(Axis(0));
            (d_xhat * n - &sum_d - &(&cache.x_hat * &sum_dx)) * &(&cache.inv_std / n)
        } else {
            d_xhat * &cache.inv_std
        };
        (grad, dx)
    }
}

impl Parameters for BatchNorm {
    fn tensors(&self) -> Vec<NamedView<'_>> {
        vec![
            ("gamma".into(), self.gamma.view().into_dyn()),
            ("beta".into(), self.beta.view().into_dyn()),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<NamedViewMut<'_>> {
        vec![
            ("gamma".into(), self.gamma.view_mut().into_dyn()),
            ("beta".into(), self.beta.view_mut().into_dyn()),
        ]
    }
}

impl Parameters for BatchNormGrad {
    fn tensors(&self) -> Vec<NamedView<'_>> {
        vec![
            ("gamma".into(), self.gamma.view().into_dyn()),
            ("beta".into(), self.beta.view().into_dyn()),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<NamedViewMut<'_>> {
        vec![
            ("gamma".into(), self.gamma.view_mut().into_dyn()),
            ("beta".into(), self.beta.view_mut().into_dyn()),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn constant_column() {
        let mut bn = BatchNorm::new(1);
        let x = array![[3.0], [3.0], [3.0]];
        let (y, _) = bn.forward(x.view(), true).unwrap();
        assert!(y.iter().all(|v| *v == 0.0));
        bn.beta.fill(5.0);
        let (y, _) = bn.forward(x.view(), true).unwrap();
        assert!(y.iter().all(|v| *v == 5.0));
    }

    #[test]
    fn two_row_batch() {
        let mut bn = BatchNorm::new(1);
        let y = bn.apply(array![[1.0], [3.0]].view(), true).unwrap();
        let expected = 1.0 / (1.0f64 + 1e-5).sqrt();
        assert!((y[[0, 0]] + expected).abs() < 1e-12);
        assert!((y[[1, 0]] - expected).abs() < 1e-12);
        // running stats: 0.9 * 0 + 0.1 * 2, 0.9 * 1 + 0.1 * 1
        assert!((bn.running_mean[0] - 0.2).abs() < 1e-15);
        assert!((bn.running_var[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_row_training_rejected() {
        let bn = BatchNorm::new(2);
        assert!(bn.forward(array![[1.0, 2.0]].view(), true).is_err());
        assert!(bn.forward(array![[1.0, 2.0]].view(), false).is_ok());
    }

    #[test]
    fn inference_uses_running_stats() {
        let mut bn = BatchNorm::new(1);
        bn.running_mean.fill(2.0);
        bn.running_var.fill(4.0 - bn.eps);
        let y = bn.apply(array![[4.0]].view(), false).unwrap();
        assert!((y[[0, 0]] - 1.0).abs() < 1e-12);
        assert_eq!(bn.running_mean[0], 2.0);
    }
}
