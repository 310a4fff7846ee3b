use ndarray::{Array2, ArrayView2, Axis, Zip};

/// Probabilities from the sigmoid heads are clamped to
/// `[PROB_CLAMP, 1 - PROB_CLAMP]`.
pub const PROB_CLAMP: f64 = 1e-7;

pub fn leaky_relu(x: ArrayView2<f64>, slope: f64) -> Array2<f64> {
    x.mapv(|v| if v >= 0.0 { v } else { slope * v })
}

pub fn leaky_relu_backward(x: ArrayView2<f64>, grad_out: ArrayView2<f64>, slope: f64) -> Array2<f64> {
    Zip::from(x)
        .and(grad_out)
        .map_collect(|&v, &g| if v >= 0.0 { g } else { slope * g })
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(x: ArrayView2<f64>) -> Array2<f64> {
    let mut out = x.to_owned();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let total = row.sum();
        row /= total;
    }
    out
}

/// Backward of `softmax_rows` given its output `y`.
pub fn softmax_backward(y: ArrayView2<f64>, grad_out: ArrayView2<f64>) -> Array2<f64> {
    let dot = (&y * &grad_out).sum_axis(Axis(1)).insert_axis(Axis(1));
    &y * &(&grad_out - &dot)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid_clamped(z: ArrayView2<f64>) -> Array2<f64> {
    z.mapv(|v| sigmoid(v).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP))
}

/// Backward of `sigmoid_clamped`; zero where the clamp is active.
pub fn sigmoid_clamped_backward(z: ArrayView2<f64>, grad_out: ArrayView2<f64>) -> Array2<f64> {
    Zip::from(z).and(grad_out).map_collect(|&v, &g| {
        let s = sigmoid(v);
        if (PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&s) {
            g * s * (1.0 - s)
        } else {
            0.0
        }
    })
}

/// Gradient reversal is the identity going forward.
pub fn grl_forward(x: ArrayView2<f64>) -> Array2<f64> {
    x.to_owned()
}

pub fn grl_backward(grad_out: ArrayView2<f64>, alpha: f64) -> Array2<f64> {
    grad_out.mapv(|g| -alpha * g)
}
