//! Dense layer `y = activation(Wx + b)` with analytic backward.
//!
//! `forward` caches the input and pre-activation so a following `backward`
//! can produce exact gradients; calling `backward` without a matching
//! forward is a state error.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor2;

/// Element-wise activation applied after the affine map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative as a function of the pre-activation `z`.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }
}

#[derive(Debug, Clone)]
struct DenseCache {
    input: Vec<f64>,
    pre: Vec<f64>,
}

/// A dense layer with weights `W` (out x in), bias `b` and an activation.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    w: Tensor2,
    b: Vec<f64>,
    activation: Activation,
    cache: Option<DenseCache>,
}

/// Gradients produced by [`DenseLayer::backward`].
#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub w: Tensor2,
    pub b: Vec<f64>,
    pub input: Vec<f64>,
}

impl DenseLayer {
    /// Seeded `uniform(-1/sqrt(fan_in), +1/sqrt(fan_in))` init, zero bias.
    pub fn init<R: Rng>(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut R) -> Self {
        Self {
            w: Tensor2::init_uniform(out_dim, in_dim, rng),
            b: vec![0.0; out_dim],
            activation,
            cache: None,
        }
    }

    pub fn from_parts(w: Tensor2, b: Vec<f64>, activation: Activation) -> Result<Self> {
        if b.len() != w.rows() {
            return Err(Error::Dimension(format!(
                "bias length {} does not match weight rows {}",
                b.len(),
                w.rows()
            )));
        }
        Ok(Self {
            w,
            b,
            activation,
            cache: None,
        })
    }

    #[inline]
    pub fn in_dim(&self) -> usize {
        self.w.cols()
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.w.rows()
    }

    #[inline]
    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &Tensor2 {
        &self.w
    }

    pub fn bias(&self) -> &[f64] {
        &self.b
    }

    /// Pure forward pass; does not touch the backward cache.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let pre = self.pre_activation(x)?;
        Ok(pre.iter().map(|&z| self.activation.apply(z)).collect())
    }

    /// Forward pass that caches `(x, Wx + b)` for a following [`backward`].
    ///
    /// [`backward`]: DenseLayer::backward
    pub fn forward(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        let pre = self.pre_activation(x)?;
        let out = pre.iter().map(|&z| self.activation.apply(z)).collect();
        self.cache = Some(DenseCache {
            input: x.to_vec(),
            pre,
        });
        Ok(out)
    }

    fn pre_activation(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_dim() {
            return Err(Error::Dimension(format!(
                "dense layer expects input of length {}, got {}",
                self.in_dim(),
                x.len()
            )));
        }
        let mut pre = self.w.matvec(x);
        for (p, b) in pre.iter_mut().zip(&self.b) {
            *p += b;
        }
        Ok(pre)
    }

    /// Gradients of the composed map for the cached forward input `x`.
    ///
    /// Returns `(dL/dW, dL/db, dL/dx)` given `upstream = dL/dy`.
    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<DenseGrads> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("dense backward called without a cached forward".into()))?;
        if cache.input != x {
            return Err(Error::State(
                "dense backward input does not match the cached forward input".into(),
            ));
        }
        if upstream.len() != self.out_dim() {
            return Err(Error::Dimension(format!(
                "upstream gradient length {} does not match out dim {}",
                upstream.len(),
                self.out_dim()
            )));
        }

        let dz: Vec<f64> = upstream
            .iter()
            .zip(&cache.pre)
            .map(|(u, &z)| u * self.activation.derivative(z))
            .collect();

        let mut grad_w = Tensor2::zeros(self.out_dim(), self.in_dim());
        grad_w.add_outer(1.0, &dz, x);
        let grad_input = self.w.matvec_transposed(&dz);
        Ok(DenseGrads {
            w: grad_w,
            b: dz,
            input: grad_input,
        })
    }

    /// Flat views over the parameters, weights first then bias.
    /// Input of the last cached `forward`, if any.
    pub fn cached_input(&self) -> Option<&[f64]> {
        self.cache.as_ref().map(|c| c.input.as_slice())
    }

    pub fn param_slices(&self) -> [&[f64]; 2] {
        [self.w.data(), &self.b]
    }

    pub fn param_slices_mut(&mut self) -> [&mut [f64]; 2] {
        [self.w.data_mut(), &mut self.b]
    }
}
