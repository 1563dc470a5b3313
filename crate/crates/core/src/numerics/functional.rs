//! Plain (non-recording) forms of the normalization primitives.

use super::ops::{mean_var, softmax_slice};
use crate::{Error, Result};

pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::Empty("softmax logits"));
    }
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("softmax logits".into()));
    }
    Ok(softmax_slice(logits))
}

pub fn layer_norm(x: &[f64], gamma: &[f64], beta: &[f64], eps: f64) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::Empty("layer_norm axis"));
    }
    if gamma.len() != x.len() || beta.len() != x.len() {
        return Err(Error::Shape(format!(
            "layer_norm: x {} gamma {} beta {}",
            x.len(),
            gamma.len(),
            beta.len()
        )));
    }
    if eps < 0.0 {
        return Err(Error::InvalidArgument("layer_norm eps must be non-negative".into()));
    }
    let (mu, var) = mean_var(x);
    let denom = (var + eps).sqrt();
    Ok(x.iter()
        .zip(gamma.iter().zip(beta))
        .map(|(v, (g, b))| {
            let h = if denom > 0.0 { (v - mu) / denom } else { 0.0 };
            h * g + b
        })
        .collect())
}

/// Interleaved sinusoidal encoding of a scalar position into `dim` channels:
/// `[sin(p w_0), cos(p w_0), sin(p w_1), ...]`, `w_i = 10000^(-2i/dim)`.
pub fn sinusoidal(pos: f64, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|j| {
            let i = (j / 2) as f64;
            let freq = 10000f64.powf(-2.0 * i / dim as f64);
            if j % 2 == 0 {
                (pos * freq).sin()
            } else {
                (pos * freq).cos()
            }
        })
        .collect()
}

/// 2-D encoding: first half of the channels encodes `row`, second half `col`.
pub fn sinusoidal_2d(row: f64, col: f64, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut v = sinusoidal(row, half);
    v.extend(sinusoidal(col, dim - half));
    v
}
