//! Encoder persistence: tensors in the binary checkpoint container plus a
//! JSON sidecar (`<path>.json`) holding the hyperparameters needed to size
//! the tensors on load.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::lwm::encoder::{EncoderBlock, LwmConfig, LwmModel};
use crate::nn::checkpoint::{find_tensor, load_checkpoint, save_checkpoint};
use crate::nn::layernorm::{LayerNorm, LAYERNORM_EPS};
use crate::nn::attention::MultiHeadAttention;
use crate::nn::tensor::Tensor2;

/// The sidecar lives next to the checkpoint with `.json` appended.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_os_string();
    os.push(".json");
    PathBuf::from(os)
}

fn named_tensors(model: &LwmModel) -> Result<Vec<(String, Tensor2)>> {
    let l = model.config().token_len;
    let mut out = vec![
        ("proj".to_string(), model.proj.clone()),
        ("pos".to_string(), model.pos.clone()),
        (
            "cls_token".to_string(),
            Tensor2::from_vec(1, l, model.cls_token.clone())?,
        ),
        (
            "mask_token".to_string(),
            Tensor2::from_vec(1, l, model.mask_token.clone())?,
        ),
    ];
    for (i, b) in model.blocks.iter().enumerate() {
        let d = b.ln1.dim();
        let h = b.b1.len();
        out.push((
            format!("block{i}.ln1.gain"),
            Tensor2::from_vec(1, d, b.ln1.gain.clone())?,
        ));
        out.push((
            format!("block{i}.ln1.bias"),
            Tensor2::from_vec(1, d, b.ln1.bias.clone())?,
        ));
        out.push((format!("block{i}.attn.wq"), b.attn.wq.clone()));
        out.push((format!("block{i}.attn.wk"), b.attn.wk.clone()));
        out.push((format!("block{i}.attn.wv"), b.attn.wv.clone()));
        out.push((format!("block{i}.attn.wo"), b.attn.wo.clone()));
        out.push((
            format!("block{i}.ln2.gain"),
            Tensor2::from_vec(1, d, b.ln2.gain.clone())?,
        ));
        out.push((
            format!("block{i}.ln2.bias"),
            Tensor2::from_vec(1, d, b.ln2.bias.clone())?,
        ));
        out.push((format!("block{i}.ff.w1"), b.w1.clone()));
        out.push((
            format!("block{i}.ff.b1"),
            Tensor2::from_vec(1, h, b.b1.clone())?,
        ));
        out.push((format!("block{i}.ff.w2"), b.w2.clone()));
        out.push((
            format!("block{i}.ff.b2"),
            Tensor2::from_vec(1, d, b.b2.clone())?,
        ));
    }
    out.push(("w_dec".to_string(), model.w_dec.clone()));
    Ok(out)
}

/// Saves the model tensors to `path` and the configuration sidecar to
/// `path.json`.
pub fn save_model(model: &LwmModel, path: &Path) -> Result<()> {
    let owned = named_tensors(model)?;
    let refs: Vec<(&str, &Tensor2)> = owned.iter().map(|(n, t)| (n.as_str(), t)).collect();
    save_checkpoint(path, &refs)?;
    let json = serde_json::to_string_pretty(model.config())
        .map_err(|e| Error::Config(format!("could not serialize model config: {e}")))?;
    std::fs::write(sidecar_path(path), json)?;
    Ok(())
}

/// Loads a model saved by [`save_model`], validating the sidecar and every
/// tensor shape.
pub fn load_model(path: &Path) -> Result<LwmModel> {
    let sidecar = sidecar_path(path);
    let json = std::fs::read_to_string(&sidecar)?;
    let cfg: LwmConfig = serde_json::from_str(&json).map_err(|e| {
        Error::Config(format!("invalid model sidecar {}: {e}", sidecar.display()))
    })?;
    cfg.validate()?;

    let entries = load_checkpoint(path)?;
    let row = |name: &str| -> Result<Vec<f64>> {
        let t = find_tensor(&entries, name)?;
        if t.rows() != 1 {
            return Err(Error::Dimension(format!(
                "{name} should be a single row, found {} rows",
                t.rows()
            )));
        }
        Ok(t.data().to_vec())
    };

    let mut blocks = Vec::with_capacity(cfg.blocks);
    for i in 0..cfg.blocks {
        let attn = MultiHeadAttention::from_parts(
            find_tensor(&entries, &format!("block{i}.attn.wq"))?.clone(),
            find_tensor(&entries, &format!("block{i}.attn.wk"))?.clone(),
            find_tensor(&entries, &format!("block{i}.attn.wv"))?.clone(),
            find_tensor(&entries, &format!("block{i}.attn.wo"))?.clone(),
            cfg.heads,
        )?;
        blocks.push(EncoderBlock {
            ln1: LayerNorm {
                gain: row(&format!("block{i}.ln1.gain"))?,
                bias: row(&format!("block{i}.ln1.bias"))?,
                eps: LAYERNORM_EPS,
            },
            attn,
            ln2: LayerNorm {
                gain: row(&format!("block{i}.ln2.gain"))?,
                bias: row(&format!("block{i}.ln2.bias"))?,
                eps: LAYERNORM_EPS,
            },
            w1: find_tensor(&entries, &format!("block{i}.ff.w1"))?.clone(),
            b1: row(&format!("block{i}.ff.b1"))?,
            w2: find_tensor(&entries, &format!("block{i}.ff.w2"))?.clone(),
            b2: row(&format!("block{i}.ff.b2"))?,
        });
    }

    LwmModel::from_parts(
        cfg,
        find_tensor(&entries, "proj")?.clone(),
        find_tensor(&entries, "pos")?.clone(),
        row("cls_token")?,
        row("mask_token")?,
        blocks,
        find_tensor(&entries, "w_dec")?.clone(),
    )
}
