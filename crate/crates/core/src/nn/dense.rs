use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::{NamedView, NamedViewMut, Parameters};
use crate::error::{Error, Result};

/// Fully connected layer computing `x · weight + bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `in_dim × out_dim`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrad {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl DenseLayer {
    pub fn new(weight: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        if weight.ncols() != bias.len() {
            return Err(Error::shape("dense bias", weight.ncols(), bias.len()));
        }
        Ok(Self { weight, bias })
    }

    /// Uniform `(-1/sqrt(in), 1/sqrt(in))` initialization for weights and bias.
    pub fn init(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((in_dim, out_dim), || rng.random_range(-bound..bound));
        let bias = Array1::from_shape_simple_fn(out_dim, || rng.random_range(-bound..bound));
        Self { weight, bias }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.in_dim() {
            return Err(Error::shape("dense input", self.in_dim(), x.ncols()));
        }
        Ok(x.dot(&self.weight) + &self.bias)
    }

    /// Returns parameter gradients and the gradient w.r.t. the input `x`.
    pub fn backward(&self, x: ArrayView2<f64>, grad_out: ArrayView2<f64>) -> (DenseGrad, Array2<f64>) {
        let grad = DenseGrad {
            weight: x.t().dot(&grad_out),
            bias: grad_out.sum_axis(Axis(0)),
        };
        (grad, grad_out.dot(&self.weight.t()))
    }
}

impl Parameters for DenseLayer {
    fn tensors(&self) -> Vec<NamedView<'_>> {
        vec![
            ("weight".into(), self.weight.view().into_dyn()),
            ("bias".into(), self.bias.view().into_dyn()),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<NamedViewMut<'_>> {
        vec![
            ("weight".into(), self.weight.view_mut().into_dyn()),
            ("bias".into(), self.bias.view_mut().into_dyn()),
        ]
    }
}

impl Parameters for DenseGrad {
    fn tensors(&self) -> Vec<NamedView<'_>> {
        vec![
            ("weight".into(), self.weight.view().into_dyn()),
            ("bias".into(), self.bias.view().into_dyn()),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<NamedViewMut<'_>> {
        vec![
            ("weight".into(), self.weight.view_mut().into_dyn()),
            ("bias".into(), self.bias.view_mut().into_dyn()),
        ]
    }
}
