//! Fully connected network built from dense layers.
//!
//! One hidden activation is shared by every layer except the last, which gets
//! its own. `forward` caches per-layer inputs so `backward` can run the chain
//! rule without re-deriving intermediate activations.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::dense::{Activation, DenseGrads, DenseLayer};
use crate::nn::tensor::Tensor2;

#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<DenseLayer>,
}

/// Per-layer parameter gradients plus the gradient w.r.t. the network input.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub layers: Vec<DenseGrads>,
    pub input: Vec<f64>,
}

impl Mlp {
    /// Builds layers `sizes[0] -> sizes[1] -> ... -> sizes[n-1]`.
    pub fn init<R: Rng>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Config(format!(
                "an mlp needs at least an input and an output size, got {sizes:?}"
            )));
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(Error::Config(format!("zero-width layer in {sizes:?}")));
        }
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, pair)| {
                let act = if i == last { output } else { hidden };
                DenseLayer::init(pair[0], pair[1], act, rng)
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("an mlp needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::Dimension(format!(
                    "layer {i} outputs {} values but layer {} expects {}",
                    pair[0].out_dim(),
                    i + 1,
                    pair[1].in_dim()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    /// Pure inference; leaves backward caches alone.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut cur = x.to_vec();
        for layer in &self.layers {
            cur = layer.apply(&cur)?;
        }
        Ok(cur)
    }

    /// Forward pass that caches every layer input for [`backward`].
    pub fn forward(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        let mut cur = x.to_vec();
        for layer in &mut self.layers {
            cur = layer.forward(&cur)?;
        }
        Ok(cur)
    }

    /// Chain rule from the output gradient back to every parameter and the
    /// input, using the caches of the most recent [`forward`].
    pub fn backward(&self, upstream: &[f64]) -> Result<MlpGrads> {
        let mut per_layer = vec![None; self.layers.len()];
        let mut grad = upstream.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let x = layer.cached_input().ok_or_else(|| {
                Error::State(format!("mlp backward: layer {i} has no cached forward"))
            })?;
            let grads = layer.backward(&x.to_vec(), &grad)?;
            grad = grads.input.clone();
            per_layer[i] = Some(grads);
        }
        Ok(MlpGrads {
            layers: per_layer.into_iter().map(|g| g.unwrap()).collect(),
            input: grad,
        })
    }

    /// Parameter views in a stable order: `[w, b]` per layer, front to back.
    pub fn param_slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| l.param_slices())
            .collect()
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.param_slices_mut())
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    /// Polyak averaging: `self = tau * source + (1 - tau) * self`.
    pub fn soft_update_from(&mut self, source: &Mlp, tau: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::Config(format!("tau must lie in [0, 1], got {tau}")));
        }
        let src = source.param_slices();
        let mut dst = self.param_slices_mut();
        if src.len() != dst.len()
            || src.iter().zip(&dst).any(|(a, b)| a.len() != b.len())
        {
            return Err(Error::Dimension(
                "soft update between differently shaped networks".into(),
            ));
        }
        for (d, s) in dst.iter_mut().zip(&src) {
            for (dv, sv) in d.iter_mut().zip(s.iter()) {
                *dv = tau * sv + (1.0 - tau) * *dv;
            }
        }
        Ok(())
    }

    /// Appends `(name, tensor)` pairs for checkpointing, named
    /// `{prefix}.l{i}.w` and `{prefix}.l{i}.b` (bias as `1 x n`).
    pub fn collect_tensors(&self, prefix: &str, out: &mut Vec<(String, Tensor2)>) {
        for (i, layer) in self.layers.iter().enumerate() {
            out.push((format!("{prefix}.l{i}.w"), layer.weights().clone()));
            let b = layer.bias();
            out.push((
                format!("{prefix}.l{i}.b"),
                Tensor2::from_vec(1, b.len(), b.to_vec()).expect("finite bias"),
            ));
        }
    }

    /// Restores parameters written by [`collect_tensors`] with `prefix`.
    pub fn assign_tensors(&mut self, prefix: &str, entries: &[(String, Tensor2)]) -> Result<()> {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let (out_dim, in_dim) = (layer.out_dim(), layer.in_dim());
            let w = crate::nn::checkpoint::find_tensor(entries, &format!("{prefix}.l{i}.w"))?;
            if w.rows() != out_dim || w.cols() != in_dim {
                return Err(Error::Dimension(format!(
                    "{prefix}.l{i}.w is {}x{}, layer expects {out_dim}x{in_dim}",
                    w.rows(),
                    w.cols()
                )));
            }
            let b = crate::nn::checkpoint::find_tensor(entries, &format!("{prefix}.l{i}.b"))?;
            if b.rows() != 1 || b.cols() != out_dim {
                return Err(Error::Dimension(format!(
                    "{prefix}.l{i}.b is {}x{}, layer expects 1x{out_dim}",
                    b.rows(),
                    b.cols()
                )));
            }
            let w_data = w.data().to_vec();
            let b_data = b.data().to_vec();
            let [ws, bs] = layer.param_slices_mut();
            ws.copy_from_slice(&w_data);
            bs.copy_from_slice(&b_data);
        }
        Ok(())
    }
}

impl MlpGrads {
    /// Zero gradients shaped like `mlp`, for batch accumulation.
    pub fn zeros_like(mlp: &Mlp) -> Self {
        let layers = mlp
            .layers
            .iter()
            .map(|l| DenseGrads {
                w: Tensor2::zeros(l.out_dim(), l.in_dim()),
                b: vec![0.0; l.out_dim()],
                input: vec![0.0; l.in_dim()],
            })
            .collect();
        Self {
            layers,
            input: vec![0.0; mlp.in_dim()],
        }
    }

    pub fn add_scaled(&mut self, other: &MlpGrads, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.w.data_mut().iter_mut().zip(b.w.data()) {
                *x = scale.mul_add(*y, *x);
            }
            for (x, y) in a.b.iter_mut().zip(&b.b) {
                *x = scale.mul_add(*y, *x);
            }
        }
        for (x, y) in self.input.iter_mut().zip(&other.input) {
            *x = scale.mul_add(*y, *x);
        }
    }

    /// Gradient views matching [`Mlp::param_slices`] ordering.
    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|g| [g.w.data(), g.b.as_slice()])
            .collect()
    }
}
