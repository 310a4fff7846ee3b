use ndarray::{Array2, ArrayView2};
use rand::Rng;

use super::{
    leaky_relu, leaky_relu_backward, prefixed, BatchNorm, BatchNormCache, BatchNormGrad, DenseGrad,
    DenseLayer, NamedView, NamedViewMut, Parameters,
};
use crate::error::Result;

/// Stack of dense layers. Every layer but the last is followed by an
/// optional batch norm and a LeakyReLU; the last layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
    /// Empty, or one per hidden layer.
    pub norms: Vec<BatchNorm>,
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrad {
    pub layers: Vec<DenseGrad>,
    pub norms: Vec<BatchNormGrad>,
}

#[derive(Debug, Clone)]
pub struct MlpCache {
    /// Input to each dense layer.
    inputs: Vec<Array2<f64>>,
    /// Input to each LeakyReLU.
    pre_activations: Vec<Array2<f64>>,
    norms: Vec<BatchNormCache>,
}

impl Mlp {
    pub fn init(dims: &[usize], batch_norm: bool, slope: f64, rng: &mut impl Rng) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least one layer");
        let layers: Vec<DenseLayer> = dims.windows(2).map(|w| DenseLayer::init(w[0], w[1], rng)).collect();
        let norms = if batch_norm {
            dims[1..dims.len() - 1].iter().map(|&d| BatchNorm::new(d)).collect()
        } else {
            Vec::new()
        };
        Self { layers, norms, slope }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    pub fn forward(&self, x: ArrayView2<f64>, training: bool) -> Result<(Array2<f64>, MlpCache)> {
        let mut cache = MlpCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre_activations: Vec::with_capacity(self.layers.len() - 1),
            norms: Vec::with_capacity(self.norms.len()),
        };
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = layer.forward(h.view())?;
            cache.inputs.push(h);
            if i == last {
                return Ok((z, cache));
            }
            if let Some(norm) = self.norms.get(i) {
                let (out, c) = norm.forward(z.view(), training)?;
                cache.norms.push(c);
                z = out;
            }
            h = leaky_relu(z.view(), self.slope);
            cache.pre_activations.push(z);
        }
        unreachable!("loop returns at the last layer")
    }

    pub fn backward(&self, cache: &MlpCache, grad_out: ArrayView2<f64>) -> (MlpGrad, Array2<f64>) {
        let n = self.layers.len();
        let mut layer_grads = Vec::with_capacity(n);
        let mut norm_grads = Vec::with_capacity(self.norms.len());
        let mut g = grad_out.to_owned();
        for i in (0..n).rev() {
            if i < n - 1 {
                g = leaky_relu_backward(cache.pre_activations[i].view(), g.view(), self.slope);
                if let Some(norm) = self.norms.get(i) {
                    let (ng, dx) = norm.backward(&cache.norms[i], g.view());
                    norm_grads.push(ng);
                    g = dx;
                }
            }
            let (lg, dx) = self.layers[i].backward(cache.inputs[i].view(), g.view());
            layer_grads.push(lg);
            g = dx;
        }
        layer_grads.reverse();
        norm_grads.reverse();
        (
            MlpGrad {
                layers: layer_grads,
                norms: norm_grads,
            },
            g,
        )
    }

    pub fn update_running_stats(&mut self, cache: &MlpCache) {
        for (norm, c) in self.norms.iter_mut().zip(&cache.norms) {
            norm.update_running(c);
        }
    }

    /// Learnable tensors followed by batch-norm running statistics.
    pub fn state_tensors(&self) -> Vec<NamedView<'_>> {
        let mut out = self.tensors();
        for (i, n) in self.norms.iter().enumerate() {
            out.push((format!("norms.{i}.running_mean"), n.running_mean.view().into_dyn()));
            out.push((format!("norms.{i}.running_var"), n.running_var.view().into_dyn()));
        }
        out
    }

    pub fn state_tensors_mut(&mut self) -> Vec<NamedViewMut<'_>> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter_mut().enumerate() {
            out.extend(prefixed(&format!("layers.{i}"), l.tensors_mut()));
        }
        let mut running = Vec::new();
        for (i, n) in self.norms.iter_mut().enumerate() {
            let BatchNorm {
                gamma,
                beta,
                running_mean,
                running_var,
                ..
            } = n;
            out.push((format!("norms.{i}.gamma"), gamma.view_mut().into_dyn()));
            out.push((format!("norms.{i}.beta"), beta.view_mut().into_dyn()));
            running.push((format!("norms.{i}.running_mean"), running_mean.view_mut().into_dyn()));
            running.push((format!("norms.{i}.running_var"), running_var.view_mut().into_dyn()));
        }
        out.extend(running);
        out
    }
}

impl MlpGrad {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            layers: mlp
                .layers
                .iter()
                .map(|l| DenseGrad {
                    weight: Array2::zeros(l.weight.raw_dim()),
                    bias: ndarray::Array1::zeros(l.bias.raw_dim()),
                })
                .collect(),
            norms: mlp
                .norms
                .iter()
                .map(|n| BatchNormGrad {
                    gamma: ndarray::Array1::zeros(n.gamma.raw_dim()),
                    beta: ndarray::Array1::zeros(n.beta.raw_dim()),
                })
                .collect(),
        }
    }

    /// `self += other`
    pub fn accumulate(&mut self, other: &MlpGrad) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
        for (a, b) in self.norms.iter_mut().zip(&other.norms) {
            a.gamma += &b.gamma;
            a.beta += &b.beta;
        }
    }
}

macro_rules! mlp_parameters {
    ($ty:ty) => {
        impl Parameters for $ty {
            fn tensors(&self) -> Vec<NamedView<'_>> {
                let mut out = Vec::new();
                for (i, l) in self.layers.iter().enumerate() {
                    out.extend(prefixed(&format!("layers.{i}"), l.tensors()));
                }
                for (i, n) in self.norms.iter().enumerate() {
                    out.extend(prefixed(&format!("norms.{i}"), n.tensors()));
                }
                out
            }

            fn tensors_mut(&mut self) -> Vec<NamedViewMut<'_>> {
                let mut out = Vec::new();
                for (i, l) in self.layers.iter_mut().enumerate() {
                    out.extend(prefixed(&format!("layers.{i}"), l.tensors_mut()));
                }
                for (i, n) in self.norms.iter_mut().enumerate() {
                    out.extend(prefixed(&format!("norms.{i}"), n.tensors_mut()));
                }
                out
            }
        }
    };
}

mlp_parameters!(Mlp);
mlp_parameters!(MlpGrad);
