//! Self-supervised finetuning on masked reconstruction, and the channel-set
//! embedding that turns encoder CLS rows into a flat state vector.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::channel::cmatrix::CMatrix;
use crate::channel::types::ChannelSet;
use crate::error::{Error, Result};
use crate::lwm::encoder::{LwmGrads, LwmModel};
use crate::lwm::mask::mask_patches;
use crate::lwm::patch::patchify;
use crate::nn::optim::{Adam, AdamConfig};

/// Finetuning hyperparameters.
#[derive(Debug, Clone)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Adam step size with decoupled weight decay.
    pub lr: f64,
    pub weight_decay: f64,
    /// Train only the final transformer block and the decoder.
    pub last_layer_only: bool,
    /// Seeds masking and batch shuffling; a fixed seed fixes the run.
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 64,
            lr: 5e-5,
            weight_decay: 1e-5,
            last_layer_only: false,
            seed: 0,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::Config(format!(
                "weight decay must be nonnegative, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// Runs masked-reconstruction finetuning over `channels`, mutating the model
/// in place. Returns the mean loss per epoch; zero epochs leave the model
/// untouched and the trace empty. A non-finite loss aborts with an error
/// before the offending optimizer step.
pub fn finetune(
    model: &mut LwmModel,
    channels: &[CMatrix],
    cfg: &FinetuneConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if channels.is_empty() {
        return Err(Error::Config("no channel matrices to finetune on".into()));
    }
    // Shape-check everything up front so a bad sample cannot abort mid-run.
    for h in channels {
        model.config().patch_count(h.rows(), h.cols())?;
    }
    if cfg.epochs == 0 {
        return Ok(Vec::new());
    }

    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let adam_cfg = AdamConfig {
        lr: cfg.lr,
        weight_decay: cfg.weight_decay,
        ..AdamConfig::default()
    };
    let mut opt = Adam::new(adam_cfg)?;

    let mut order: Vec<usize> = (0..channels.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut acc = LwmGrads::zeros_like(model);
            let inv = 1.0 / batch.len() as f64;
            for &idx in batch {
                let h = &channels[idx];
                let p = model.config().patch_count(h.rows(), h.cols())?;
                let seq = patchify(h, p)?.with_cls(&model.cls_token)?;
                let (masked, record) = mask_patches(&seq, &model.mask_token, &mut rng)?;
                let (loss, grads) = model.masked_step(&masked, &record)?;
                if !loss.is_finite() {
                    return Err(Error::Numeric(format!(
                        "masked loss became non-finite ({loss})"
                    )));
                }
                epoch_loss += loss;
                acc.add_scaled(&grads, inv);
            }
            let grad_slices = acc.slices(cfg.last_layer_only);
            let mut params = model.trainable_slices_mut(cfg.last_layer_only);
            opt.step(&mut params, &grad_slices)?;
        }
        trace.push(epoch_loss / channels.len() as f64);
    }
    Ok(trace)
}

/// Encodes every matrix of a channel set and concatenates the CLS rows:
/// direct channels for users `0..K`, then RIS-user channels for users
/// `0..K`, then the BS-RIS channel, giving a `(2K + 1) * D` vector.
pub fn embed_state(ch: &ChannelSet, model: &LwmModel) -> Result<Vec<f64>> {
    let d = model.config().dim;
    let mut out = Vec::with_capacity((2 * ch.users() + 1) * d);
    for k in 0..ch.users() {
        embed_into(model, ch.direct(k)?, &mut out)?;
    }
    for k in 0..ch.users() {
        embed_into(model, ch.ris_user(k)?, &mut out)?;
    }
    embed_into(model, ch.bs_ris(), &mut out)?;
    Ok(out)
}

fn embed_into(model: &LwmModel, h: &CMatrix, out: &mut Vec<f64>) -> Result<()> {
    let p = model.config().patch_count(h.rows(), h.cols())?;
    let seq = patchify(h, p)?.with_cls(&model.cls_token)?;
    let emb = model.encode(&seq)?;
    out.extend_from_slice(emb.cls());
    Ok(())
}
