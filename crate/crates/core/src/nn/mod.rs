//! Dense layers, batch normalization, activations, losses, gradient
//! reversal and Adam, each with an exact analytic backward pass. All math
//! is `f64`.

mod activation;
mod adam;
mod batchnorm;
mod dense;
mod loss;
mod mlp;

pub use activation::{
    grl_backward, grl_forward, leaky_relu, leaky_relu_backward, sigmoid_clamped,
    sigmoid_clamped_backward, softmax_backward, softmax_rows, PROB_CLAMP,
};
pub use adam::AdamState;
pub use batchnorm::{BatchNorm, BatchNormCache, BatchNormGrad};
pub use dense::{DenseGrad, DenseLayer};
pub use loss::{bce, bce_grad, masked_mse, masked_mse_grad, MaskedMse};
pub use mlp::{Mlp, MlpCache, MlpGrad};

use ndarray::{ArrayViewD, ArrayViewMutD};

/// Default LeakyReLU negative slope.
pub const DEFAULT_SLOPE: f64 = 0.01;

pub type NamedView<'a> = (String, ArrayViewD<'a, f64>);
pub type NamedViewMut<'a> = (String, ArrayViewMutD<'a, f64>);

/// A collection of named parameter tensors, listed in a fixed order.
/// Gradient structs implement this too, in the same order as the
/// parameters they differentiate.
pub trait Parameters {
    fn tensors(&self) -> Vec<NamedView<'_>>;
    fn tensors_mut(&mut self) -> Vec<NamedViewMut<'_>>;

    fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }
}

pub(crate) fn prefixed<T>(prefix: &str, items: Vec<(String, T)>) -> Vec<(String, T)> {
    items
        .into_iter()
        .map(|(name, t)| (format!("{prefix}.{name}"), t))
        .collect()
}
