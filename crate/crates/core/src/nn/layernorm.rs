//! Layer normalization over a single feature vector.

use crate::error::{Error, Result};

/// Learnable gain/bias pair for layer normalization.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: Vec<f64>,
    pub bias: Vec<f64>,
    pub eps: f64,
}

/// Quantities from the forward pass needed by the backward pass.
#[derive(Debug, Clone)]
pub struct LayerNormCache {
    normalized: Vec<f64>,
    inv_std: f64,
}

/// Gradients of a layer-norm application.
#[derive(Debug, Clone)]
pub struct LayerNormGrads {
    pub gain: Vec<f64>,
    pub bias: Vec<f64>,
    pub input: Vec<f64>,
}

pub const LAYERNORM_EPS: f64 = 1e-5;

impl LayerNorm {
    /// Unit gain, zero bias.
    pub fn identity(dim: usize) -> Self {
        Self {
            gain: vec![1.0; dim],
            bias: vec![0.0; dim],
            eps: LAYERNORM_EPS,
        }
    }

    pub fn dim(&self) -> usize {
        self.gain.len()
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, LayerNormCache)> {
        layernorm_forward(x, &self.gain, &self.bias, self.eps)
    }

    /// Backward through `y = gain .* normalize(x) + bias`.
    pub fn backward(&self, cache: &LayerNormCache, upstream: &[f64]) -> LayerNormGrads {
        let n = upstream.len();
        let xhat = &cache.normalized;
        let grad_gain: Vec<f64> = upstream.iter().zip(xhat).map(|(u, h)| u * h).collect();
        let grad_bias = upstream.to_vec();

        let dxhat: Vec<f64> = upstream.iter().zip(&self.gain).map(|(u, g)| u * g).collect();
        let mean_dxhat = dxhat.iter().sum::<f64>() / n as f64;
        let mean_dxhat_xhat =
            dxhat.iter().zip(xhat).map(|(d, h)| d * h).sum::<f64>() / n as f64;
        let grad_input = dxhat
            .iter()
            .zip(xhat)
            .map(|(d, h)| cache.inv_std * (d - mean_dxhat - h * mean_dxhat_xhat))
            .collect();

        LayerNormGrads {
            gain: grad_gain,
            bias: grad_bias,
            input: grad_input,
        }
    }
}

/// `gain .* (x - mean) / sqrt(var + eps) + bias`.
///
/// The variance is the biased (1/N) estimate; `eps` keeps the constant-input
/// case finite, mapping it to all-`bias` output.
pub fn layernorm_forward(
    x: &[f64],
    gain: &[f64],
    bias: &[f64],
    eps: f64,
) -> Result<(Vec<f64>, LayerNormCache)> {
    let n = x.len();
    if n < 2 {
        return Err(Error::Dimension(
            "layernorm needs at least 2 elements".into(),
        ));
    }
    if gain.len() != n || bias.len() != n {
        return Err(Error::Dimension(format!(
            "layernorm gain/bias length must be {n}, got {}/{}",
            gain.len(),
            bias.len()
        )));
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let inv_std = 1.0 / (var + eps).sqrt();
    let normalized: Vec<f64> = x.iter().map(|v| (v - mean) * inv_std).collect();
    let out = normalized
        .iter()
        .zip(gain.iter().zip(bias))
        .map(|(h, (g, b))| g * h + b)
        .collect();
    Ok((
        out,
        LayerNormCache {
            normalized,
            inv_std,
        },
    ))
}
