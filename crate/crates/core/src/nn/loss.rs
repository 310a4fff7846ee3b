use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Zip};

use super::PROB_CLAMP;
use crate::error::{Error, Result};

/// Mean binary cross entropy with predictions clamped into `(0, 1)`.
pub fn bce(y: ArrayView1<f64>, p: ArrayView1<f64>) -> Result<f64> {
    if y.len() != p.len() {
        return Err(Error::shape("bce", y.len(), p.len()));
    }
    if y.is_empty() {
        return Err(Error::InvalidArgument("bce of an empty vector".into()));
    }
    let total: f64 = y
        .iter()
        .zip(p.iter())
        .map(|(&t, &q)| {
            let q = q.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            t * q.ln() + (1.0 - t) * (1.0 - q).ln()
        })
        .sum();
    Ok(-total / y.len() as f64)
}

/// Gradient of [`bce`] w.r.t. `p`; zero where the clamp is active.
pub fn bce_grad(y: ArrayView1<f64>, p: ArrayView1<f64>) -> Result<Array1<f64>> {
    if y.len() != p.len() {
        return Err(Error::shape("bce", y.len(), p.len()));
    }
    let n = y.len() as f64;
    Ok(Zip::from(y).and(p).map_collect(|&t, &q| {
        if (PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&q) {
            -(t / q - (1.0 - t) / (1.0 - q)) / n
        } else {
            0.0
        }
    }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskedMse {
    pub loss: f64,
    pub masked: usize,
    /// No entry was masked; the loss is reported as 0.
    pub degenerate: bool,
}

fn check_same_shape(x_hat: ArrayView2<f64>, x: ArrayView2<f64>, mask: ArrayView2<bool>) -> Result<()> {
    if x_hat.dim() != x.dim() || mask.dim() != x.dim() {
        return Err(Error::shape(
            "masked mse",
            format!("{:?}", x.dim()),
            format!("{:?} / {:?}", x_hat.dim(), mask.dim()),
        ));
    }
    Ok(())
}

/// Mean of squared differences over the entries where `mask` is set.
pub fn masked_mse(x_hat: ArrayView2<f64>, x: ArrayView2<f64>, mask: ArrayView2<bool>) -> Result<MaskedMse> {
    check_same_shape(x_hat, x, mask)?;
    let mut sum = 0.0;
    let mut masked = 0usize;
    Zip::from(x_hat).and(x).and(mask).for_each(|&a, &b, &m| {
        if m {
            sum += (a - b) * (a - b);
            masked += 1;
        }
    });
    Ok(MaskedMse {
        loss: if masked == 0 { 0.0 } else { sum / masked as f64 },
        masked,
        degenerate: masked == 0,
    })
}

pub fn masked_mse_grad(x_hat: ArrayView2<f64>, x: ArrayView2<f64>, mask: ArrayView2<bool>) -> Result<Array2<f64>> {
    check_same_shape(x_hat, x, mask)?;
    let masked = mask.iter().filter(|m| **m).count();
    if masked == 0 {
        return Ok(Array2::zeros(x.dim()));
    }
    let scale = 2.0 / masked as f64;
    Ok(Zip::from(x_hat)
        .and(x)
        .and(mask)
        .map_collect(|&a, &b, &m| if m { scale * (a - b) } else { 0.0 }))
}
