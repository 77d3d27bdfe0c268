//! Token encoder over patch sequences: linear projection plus learned
//! positional embeddings, a stack of pre-layernorm transformer blocks, and a
//! linear decoder for the masked-reconstruction loss.
//!
//! One model fixes the token length `L`; a matrix with `2XY` real values
//! becomes `P = 2XY / L` patches, so differently shaped matrices produce
//! differently long sequences. Positional embeddings are allocated for
//! `patch_capacity + 1` tokens and longer sequences are rejected.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lwm::mask::{MaskRecord, Replacement};
use crate::lwm::patch::PatchSequence;
use crate::nn::attention::{AttentionCache, AttentionGrads, MultiHeadAttention};
use crate::nn::layernorm::{LayerNorm, LayerNormCache};
use crate::nn::tensor::Tensor2;

/// Encoder hyperparameters; the checkpoint sidecar serializes exactly this.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LwmConfig {
    /// Embedding width D.
    pub dim: usize,
    /// Transformer block count.
    pub blocks: usize,
    /// Attention heads per block.
    pub heads: usize,
    /// Token (patch) length L.
    pub token_len: usize,
    /// Largest supported patch count P.
    pub patch_capacity: usize,
}

impl Default for LwmConfig {
    fn default() -> Self {
        Self {
            dim: 16,
            blocks: 2,
            heads: 2,
            token_len: 32,
            patch_capacity: 64,
        }
    }
}

impl LwmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::Config(format!(
                "embedding width must be at least 2, got {}",
                self.dim
            )));
        }
        if self.heads == 0 || self.dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "embedding width {} must divide into {} heads",
                self.dim, self.heads
            )));
        }
        if self.token_len == 0 {
            return Err(Error::Config("token length must be positive".into()));
        }
        if self.patch_capacity == 0 {
            return Err(Error::Config("patch capacity must be positive".into()));
        }
        Ok(())
    }

    /// Patch count for an `X x Y` matrix under this token length.
    pub fn patch_count(&self, x: usize, y: usize) -> Result<usize> {
        let total = 2 * x * y;
        if total % self.token_len != 0 {
            return Err(Error::Config(format!(
                "a {x}x{y} matrix has {total} real values, not a multiple of token length {}",
                self.token_len
            )));
        }
        let p = total / self.token_len;
        if p % 2 != 0 {
            return Err(Error::Config(format!(
                "a {x}x{y} matrix yields an odd patch count {p}"
            )));
        }
        if p > self.patch_capacity {
            return Err(Error::Config(format!(
                "a {x}x{y} matrix needs {p} patches, capacity is {}",
                self.patch_capacity
            )));
        }
        Ok(p)
    }

    /// Sizes the patch capacity to a scenario's matrix shapes, keeping the
    /// other fields.
    pub fn sized_for(mut self, shapes: &[(usize, usize)]) -> Result<Self> {
        self.validate()?;
        let mut capacity = 0;
        for &(x, y) in shapes {
            let total = 2 * x * y;
            if total % self.token_len != 0 || (total / self.token_len) % 2 != 0 {
                return Err(Error::Config(format!(
                    "token length {} does not evenly split a {x}x{y} matrix",
                    self.token_len
                )));
            }
            capacity = capacity.max(total / self.token_len);
        }
        if capacity == 0 {
            return Err(Error::Config("no matrix shapes given".into()));
        }
        self.patch_capacity = capacity;
        Ok(self)
    }
}

/// One pre-layernorm transformer block: attention and a relu feed-forward
/// of width `4 * dim`, each behind a residual connection.
#[derive(Debug, Clone)]
pub struct EncoderBlock {
    pub ln1: LayerNorm,
    pub attn: MultiHeadAttention,
    pub ln2: LayerNorm,
    pub w1: Tensor2,
    pub b1: Vec<f64>,
    pub w2: Tensor2,
    pub b2: Vec<f64>,
}

impl EncoderBlock {
    fn init<R: Rng>(dim: usize, heads: usize, rng: &mut R) -> Result<Self> {
        let hidden = 4 * dim;
        Ok(Self {
            ln1: LayerNorm::identity(dim),
            attn: MultiHeadAttention::init(dim, heads, rng)?,
            ln2: LayerNorm::identity(dim),
            w1: Tensor2::init_uniform(hidden, dim, rng),
            b1: vec![0.0; hidden],
            w2: Tensor2::init_uniform(dim, hidden, rng),
            b2: vec![0.0; dim],
        })
    }
}

/// Per-token embeddings, `(P + 1) x D` with the CLS embedding in row 0.
#[derive(Debug, Clone)]
pub struct EmbeddingMatrix {
    inner: Tensor2,
}

impl EmbeddingMatrix {
    pub fn rows(&self) -> usize {
        self.inner.rows()
    }

    pub fn dim(&self) -> usize {
        self.inner.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.inner.row(i)
    }

    /// The CLS embedding, the model's sequence summary.
    pub fn cls(&self) -> &[f64] {
        self.inner.row(0)
    }

    pub fn tensor(&self) -> &Tensor2 {
        &self.inner
    }
}

#[derive(Debug, Clone)]
pub struct LwmModel {
    cfg: LwmConfig,
    pub proj: Tensor2,
    pub pos: Tensor2,
    pub cls_token: Vec<f64>,
    pub mask_token: Vec<f64>,
    pub blocks: Vec<EncoderBlock>,
    pub w_dec: Tensor2,
}

struct BlockCache {
    ln1: Vec<LayerNormCache>,
    attn: AttentionCache,
    ln2: Vec<LayerNormCache>,
    ln2_out: Tensor2,
    ff_pre: Tensor2,
    ff_hidden: Tensor2,
}

pub struct EncodeCache {
    tokens: Tensor2,
    blocks: Vec<BlockCache>,
}

/// Gradients of one block, field for field.
#[derive(Debug, Clone)]
pub struct BlockGrads {
    pub ln1_gain: Vec<f64>,
    pub ln1_bias: Vec<f64>,
    pub attn: AttentionGrads,
    pub ln2_gain: Vec<f64>,
    pub ln2_bias: Vec<f64>,
    pub w1: Tensor2,
    pub b1: Vec<f64>,
    pub w2: Tensor2,
    pub b2: Vec<f64>,
}

/// Gradients of every model parameter.
#[derive(Debug, Clone)]
pub struct LwmGrads {
    pub proj: Tensor2,
    pub pos: Tensor2,
    pub cls_token: Vec<f64>,
    pub mask_token: Vec<f64>,
    pub blocks: Vec<BlockGrads>,
    pub w_dec: Tensor2,
}

impl LwmModel {
    pub fn init<R: Rng>(cfg: LwmConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let (d, l) = (cfg.dim, cfg.token_len);
        let proj = Tensor2::init_uniform(d, l, rng);
        let pos = Tensor2::init_uniform(cfg.patch_capacity + 1, d, rng);
        let cls_token = Tensor2::init_uniform(1, l, rng).data().to_vec();
        let mask_token = Tensor2::init_uniform(1, l, rng).data().to_vec();
        let blocks = (0..cfg.blocks)
            .map(|_| EncoderBlock::init(d, cfg.heads, rng))
            .collect::<Result<Vec<_>>>()?;
        let w_dec = Tensor2::init_uniform(l, d, rng);
        Ok(Self {
            cfg,
            proj,
            pos,
            cls_token,
            mask_token,
            blocks,
            w_dec,
        })
    }

    /// Rebuilds a model from explicit parts, validating every shape against
    /// the configuration.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        cfg: LwmConfig,
        proj: Tensor2,
        pos: Tensor2,
        cls_token: Vec<f64>,
        mask_token: Vec<f64>,
        blocks: Vec<EncoderBlock>,
        w_dec: Tensor2,
    ) -> Result<Self> {
        cfg.validate()?;
        let (d, l) = (cfg.dim, cfg.token_len);
        let expect = |name: &str, got: (usize, usize), want: (usize, usize)| -> Result<()> {
            if got != want {
                return Err(Error::Dimension(format!(
                    "{name} is {}x{}, expected {}x{}",
                    got.0, got.1, want.0, want.1
                )));
            }
            Ok(())
        };
        expect("projection", (proj.rows(), proj.cols()), (d, l))?;
        expect(
            "positional table",
            (pos.rows(), pos.cols()),
            (cfg.patch_capacity + 1, d),
        )?;
        expect("cls token", (1, cls_token.len()), (1, l))?;
        expect("mask token", (1, mask_token.len()), (1, l))?;
        if blocks.len() != cfg.blocks {
            return Err(Error::Dimension(format!(
                "got {} blocks, config says {}",
                blocks.len(),
                cfg.blocks
            )));
        }
        for (i, b) in blocks.iter().enumerate() {
            if b.ln1.dim() != d || b.ln2.dim() != d {
                return Err(Error::Dimension(format!(
                    "block {i} layernorm width does not match embedding width {d}"
                )));
            }
            if b.attn.dim() != d || b.attn.heads() != cfg.heads {
                return Err(Error::Dimension(format!(
                    "block {i} attention does not match width {d} with {} heads",
                    cfg.heads
                )));
            }
            expect("feed-forward w1", (b.w1.rows(), b.w1.cols()), (4 * d, d))?;
            expect("feed-forward b1", (1, b.b1.len()), (1, 4 * d))?;
            expect("feed-forward w2", (b.w2.rows(), b.w2.cols()), (d, 4 * d))?;
            expect("feed-forward b2", (1, b.b2.len()), (1, d))?;
        }
        expect("decoder", (w_dec.rows(), w_dec.cols()), (l, d))?;
        Ok(Self {
            cfg,
            proj,
            pos,
            cls_token,
            mask_token,
            blocks,
            w_dec,
        })
    }

    pub fn config(&self) -> &LwmConfig {
        &self.cfg
    }

    /// Pure forward pass.
    pub fn encode(&self, seq: &PatchSequence) -> Result<EmbeddingMatrix> {
        Ok(self.encode_with_cache(seq)?.0)
    }

    pub fn encode_with_cache(&self, seq: &PatchSequence) -> Result<(EmbeddingMatrix, EncodeCache)> {
        if !seq.has_cls() {
            return Err(Error::State("encoder expects a with-CLS sequence".into()));
        }
        if seq.token_len() != self.cfg.token_len {
            return Err(Error::Dimension(format!(
                "sequence tokens have length {}, model expects {}",
                seq.token_len(),
                self.cfg.token_len
            )));
        }
        let t = seq.len();
        if t > self.cfg.patch_capacity + 1 {
            return Err(Error::Dimension(format!(
                "sequence has {} patches, positional capacity is {}",
                t - 1,
                self.cfg.patch_capacity
            )));
        }
        let d = self.cfg.dim;

        let mut tokens = Tensor2::zeros(t, self.cfg.token_len);
        let mut x = Tensor2::zeros(t, d);
        for i in 0..t {
            tokens.row_mut(i).copy_from_slice(seq.patch(i));
            let projected = self.proj.matvec(seq.patch(i));
            let row = x.row_mut(i);
            for (j, v) in projected.iter().enumerate() {
                row[j] = v + self.pos.get(i, j);
            }
        }

        let mut block_caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (next, cache) = block_forward(block, &x)?;
            block_caches.push(cache);
            x = next;
        }
        Ok((
            EmbeddingMatrix { inner: x },
            EncodeCache {
                tokens,
                blocks: block_caches,
            },
        ))
    }

    /// Mean squared reconstruction error over the masked positions:
    /// `(1/|M|) sum_i |w_dec e_i - p_i|^2`.
    pub fn masked_loss(&self, emb: &EmbeddingMatrix, record: &MaskRecord) -> Result<f64> {
        Ok(self.loss_terms(emb, record)?.0)
    }

    /// Loss plus its gradients w.r.t. the decoder and the embeddings.
    fn loss_terms(
        &self,
        emb: &EmbeddingMatrix,
        record: &MaskRecord,
    ) -> Result<(f64, Tensor2, Tensor2)> {
        if record.is_empty() {
            return Err(Error::Domain("masked loss over an empty mask set".into()));
        }
        let scale = 1.0 / record.len() as f64;
        let mut loss = 0.0;
        let mut d_emb = Tensor2::zeros(emb.rows(), emb.dim());
        let mut d_dec = Tensor2::zeros(self.w_dec.rows(), self.w_dec.cols());
        for entry in record.entries() {
            if entry.index >= emb.rows() {
                return Err(Error::Dimension(format!(
                    "mask index {} outside a {}-token sequence",
                    entry.index,
                    emb.rows()
                )));
            }
            if entry.original.len() != self.cfg.token_len {
                return Err(Error::Dimension(format!(
                    "masked original has length {}, token length is {}",
                    entry.original.len(),
                    self.cfg.token_len
                )));
            }
            let e = emb.row(entry.index);
            let recon = self.w_dec.matvec(e);
            let residual: Vec<f64> = recon
                .iter()
                .zip(&entry.original)
                .map(|(r, p)| r - p)
                .collect();
            loss += scale * residual.iter().map(|r| r * r).sum::<f64>();

            // d loss / d recon = 2 * scale * residual.
            d_dec.add_outer(2.0 * scale, &residual, e);
            let back = self.w_dec.matvec_transposed(&residual);
            let row = d_emb.row_mut(entry.index);
            for (slot, b) in row.iter_mut().zip(&back) {
                *slot += 2.0 * scale * b;
            }
        }
        Ok((loss, d_emb, d_dec))
    }

    /// Backward from an embedding gradient to every parameter and the input
    /// tokens (one gradient row per token).
    fn backward(&self, cache: &EncodeCache, d_emb: &Tensor2) -> (LwmGrads, Tensor2) {
        let mut grads = LwmGrads::zeros_like(self);
        // The zero blocks are rebuilt from the backward walk.
        grads.blocks.clear();
        let mut dx = d_emb.clone();
        for (block, bcache) in self.blocks.iter().zip(&cache.blocks).rev() {
            let (prev, bgrads) = block_backward(block, bcache, &dx);
            dx = prev;
            // Reversed iteration pairs each gradient with its block; push and
            // reverse at the end.
            grads.blocks.push(bgrads);
        }
        grads.blocks.reverse();

        let t = dx.rows();
        let mut d_tokens = Tensor2::zeros(t, self.cfg.token_len);
        for i in 0..t {
            let row = dx.row(i);
            grads.proj.add_outer(1.0, row, cache.tokens.row(i));
            let prow = grads.pos.row_mut(i);
            for (slot, v) in prow.iter_mut().zip(row) {
                *slot += v;
            }
            let back = self.proj.matvec_transposed(row);
            d_tokens.row_mut(i).copy_from_slice(&back);
        }
        (grads, d_tokens)
    }

    /// Forward plus backward for one masked sequence built with this model's
    /// CLS and mask tokens; returns the loss and full parameter gradients.
    pub fn masked_step(
        &self,
        masked: &PatchSequence,
        record: &MaskRecord,
    ) -> Result<(f64, LwmGrads)> {
        let (emb, cache) = self.encode_with_cache(masked)?;
        let (loss, d_emb, d_dec) = self.loss_terms(&emb, record)?;
        let (mut grads, d_tokens) = self.backward(&cache, &d_emb);
        grads.w_dec = d_dec;

        // The CLS slot holds cls_token; positions replaced by the mask token
        // hold mask_token. Route the token gradients accordingly.
        for (slot, v) in grads.cls_token.iter_mut().zip(d_tokens.row(0)) {
            *slot += v;
        }
        for entry in record.entries() {
            if entry.replacement == Replacement::MaskToken {
                let row = d_tokens.row(entry.index);
                for (slot, v) in grads.mask_token.iter_mut().zip(row) {
                    *slot += v;
                }
            }
        }
        Ok((loss, grads))
    }

    /// Every parameter as a flat slice, in a stable order shared with
    /// [`LwmGrads::slices`].
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![
            self.proj.data_mut(),
            self.pos.data_mut(),
            self.cls_token.as_mut_slice(),
            self.mask_token.as_mut_slice(),
        ];
        for b in &mut self.blocks {
            out.push(b.ln1.gain.as_mut_slice());
            out.push(b.ln1.bias.as_mut_slice());
            out.extend(b.attn.param_slices_mut());
            out.push(b.ln2.gain.as_mut_slice());
            out.push(b.ln2.bias.as_mut_slice());
            out.push(b.w1.data_mut());
            out.push(b.b1.as_mut_slice());
            out.push(b.w2.data_mut());
            out.push(b.b2.as_mut_slice());
        }
        out.push(self.w_dec.data_mut());
        out
    }

    /// Trainable subset: everything, or only the final block plus the
    /// decoder when `last_layer_only` is set.
    pub fn trainable_slices_mut(&mut self, last_layer_only: bool) -> Vec<&mut [f64]> {
        if !last_layer_only {
            return self.param_slices_mut();
        }
        let mut out: Vec<&mut [f64]> = Vec::new();
        if let Some(b) = self.blocks.last_mut() {
            out.push(b.ln1.gain.as_mut_slice());
            out.push(b.ln1.bias.as_mut_slice());
            out.extend(b.attn.param_slices_mut());
            out.push(b.ln2.gain.as_mut_slice());
            out.push(b.ln2.bias.as_mut_slice());
            out.push(b.w1.data_mut());
            out.push(b.b1.as_mut_slice());
            out.push(b.w2.data_mut());
            out.push(b.b2.as_mut_slice());
        }
        out.push(self.w_dec.data_mut());
        out
    }
}

impl LwmGrads {
    pub fn zeros_like(model: &LwmModel) -> Self {
        let blocks = model
            .blocks
            .iter()
            .map(|b| BlockGrads {
                ln1_gain: vec![0.0; b.ln1.dim()],
                ln1_bias: vec![0.0; b.ln1.dim()],
                attn: AttentionGrads {
                    wq: Tensor2::zeros(b.attn.dim(), b.attn.dim()),
                    wk: Tensor2::zeros(b.attn.dim(), b.attn.dim()),
                    wv: Tensor2::zeros(b.attn.dim(), b.attn.dim()),
                    wo: Tensor2::zeros(b.attn.dim(), b.attn.dim()),
                },
                ln2_gain: vec![0.0; b.ln2.dim()],
                ln2_bias: vec![0.0; b.ln2.dim()],
                w1: Tensor2::zeros(b.w1.rows(), b.w1.cols()),
                b1: vec![0.0; b.b1.len()],
                w2: Tensor2::zeros(b.w2.rows(), b.w2.cols()),
                b2: vec![0.0; b.b2.len()],
            })
            .collect();
        Self {
            proj: Tensor2::zeros(model.proj.rows(), model.proj.cols()),
            pos: Tensor2::zeros(model.pos.rows(), model.pos.cols()),
            cls_token: vec![0.0; model.cls_token.len()],
            mask_token: vec![0.0; model.mask_token.len()],
            blocks,
            w_dec: Tensor2::zeros(model.w_dec.rows(), model.w_dec.cols()),
        }
    }

    pub fn add_scaled(&mut self, other: &LwmGrads, scale: f64) {
        let add_t = |a: &mut Tensor2, b: &Tensor2| {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x = scale.mul_add(*y, *x);
            }
        };
        let add_v = |a: &mut Vec<f64>, b: &[f64]| {
            for (x, y) in a.iter_mut().zip(b) {
                *x = scale.mul_add(*y, *x);
            }
        };
        add_t(&mut self.proj, &other.proj);
        add_t(&mut self.pos, &other.pos);
        add_v(&mut self.cls_token, &other.cls_token);
        add_v(&mut self.mask_token, &other.mask_token);
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            add_v(&mut a.ln1_gain, &b.ln1_gain);
            add_v(&mut a.ln1_bias, &b.ln1_bias);
            add_t(&mut a.attn.wq, &b.attn.wq);
            add_t(&mut a.attn.wk, &b.attn.wk);
            add_t(&mut a.attn.wv, &b.attn.wv);
            add_t(&mut a.attn.wo, &b.attn.wo);
            add_v(&mut a.ln2_gain, &b.ln2_gain);
            add_v(&mut a.ln2_bias, &b.ln2_bias);
            add_t(&mut a.w1, &b.w1);
            add_v(&mut a.b1, &b.b1);
            add_t(&mut a.w2, &b.w2);
            add_v(&mut a.b2, &b.b2);
        }
        add_t(&mut self.w_dec, &other.w_dec);
    }

    /// Gradient views matching [`LwmModel::param_slices_mut`].
    pub fn slices(&self, last_layer_only: bool) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        if last_layer_only {
            if let Some(b) = self.blocks.last() {
                out.extend(block_grad_slices(b));
            }
        } else {
            out.push(self.proj.data());
            out.push(self.pos.data());
            out.push(self.cls_token.as_slice());
            out.push(self.mask_token.as_slice());
            for b in &self.blocks {
                out.extend(block_grad_slices(b));
            }
        }
        out.push(self.w_dec.data());
        out
    }
}

fn block_grad_slices(b: &BlockGrads) -> Vec<&[f64]> {
    vec![
        b.ln1_gain.as_slice(),
        b.ln1_bias.as_slice(),
        b.attn.wq.data(),
        b.attn.wk.data(),
        b.attn.wv.data(),
        b.attn.wo.data(),
        b.ln2_gain.as_slice(),
        b.ln2_bias.as_slice(),
        b.w1.data(),
        b.b1.as_slice(),
        b.w2.data(),
        b.b2.as_slice(),
    ]
}

fn block_forward(block: &EncoderBlock, x: &Tensor2) -> Result<(Tensor2, BlockCache)> {
    let t = x.rows();
    let d = x.cols();

    let mut ln1_out = Tensor2::zeros(t, d);
    let mut ln1 = Vec::with_capacity(t);
    for i in 0..t {
        let (y, c) = block.ln1.forward(x.row(i))?;
        ln1_out.row_mut(i).copy_from_slice(&y);
        ln1.push(c);
    }

    let (attn_out, attn_cache) = block.attn.forward(&ln1_out)?;
    let mut u = x.clone();
    for (a, b) in u.data_mut().iter_mut().zip(attn_out.data()) {
        *a += b;
    }

    let mut ln2_out = Tensor2::zeros(t, d);
    let mut ln2 = Vec::with_capacity(t);
    for i in 0..t {
        let (y, c) = block.ln2.forward(u.row(i))?;
        ln2_out.row_mut(i).copy_from_slice(&y);
        ln2.push(c);
    }

    let mut ff_pre = ln2_out.matmul_nt(&block.w1);
    for i in 0..t {
        let row = ff_pre.row_mut(i);
        for (v, b) in row.iter_mut().zip(&block.b1) {
            *v += b;
        }
    }
    let mut ff_hidden = ff_pre.clone();
    for v in ff_hidden.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let mut out = ff_hidden.matmul_nt(&block.w2);
    for i in 0..t {
        let row = out.row_mut(i);
        for (v, (b, uu)) in row.iter_mut().zip(block.b2.iter().zip(u.row(i))) {
            *v += b + uu;
        }
    }

    Ok((
        out,
        BlockCache {
            ln1,
            attn: attn_cache,
            ln2,
            ln2_out,
            ff_pre,
            ff_hidden,
        },
    ))
}

fn block_backward(
    block: &EncoderBlock,
    cache: &BlockCache,
    upstream: &Tensor2,
) -> (Tensor2, BlockGrads) {
    let t = upstream.rows();
    let d = upstream.cols();
    let hidden = block.b1.len();

    // out = u + ff(ln2(u)): the ff path sees `upstream` directly.
    let d_w2 = upstream.matmul_tn(&cache.ff_hidden);
    let mut d_b2 = vec![0.0; d];
    for i in 0..t {
        for (s, v) in d_b2.iter_mut().zip(upstream.row(i)) {
            *s += v;
        }
    }
    let mut d_pre = upstream.matmul(&block.w2);
    for (g, pre) in d_pre.data_mut().iter_mut().zip(cache.ff_pre.data()) {
        if *pre <= 0.0 {
            *g = 0.0;
        }
    }
    let d_w1 = d_pre.matmul_tn(&cache.ln2_out);
    let mut d_b1 = vec![0.0; hidden];
    for i in 0..t {
        for (s, v) in d_b1.iter_mut().zip(d_pre.row(i)) {
            *s += v;
        }
    }
    let d_ln2_out = d_pre.matmul(&block.w1);

    let mut d_u = upstream.clone();
    let mut ln2_gain = vec![0.0; d];
    let mut ln2_bias = vec![0.0; d];
    for i in 0..t {
        let g = block.ln2.backward(&cache.ln2[i], d_ln2_out.row(i));
        for (s, v) in ln2_gain.iter_mut().zip(&g.gain) {
            *s += v;
        }
        for (s, v) in ln2_bias.iter_mut().zip(&g.bias) {
            *s += v;
        }
        for (s, v) in d_u.row_mut(i).iter_mut().zip(&g.input) {
            *s += v;
        }
    }

    // u = x + attn(ln1(x)): the attention path sees d_u.
    let (d_ln1_out, attn_grads) = block.attn.backward(&cache.attn, &d_u);
    let mut d_x = d_u.clone();
    let mut ln1_gain = vec![0.0; d];
    let mut ln1_bias = vec![0.0; d];
    for i in 0..t {
        let g = block.ln1.backward(&cache.ln1[i], d_ln1_out.row(i));
        for (s, v) in ln1_gain.iter_mut().zip(&g.gain) {
            *s += v;
        }
        for (s, v) in ln1_bias.iter_mut().zip(&g.bias) {
            *s += v;
        }
        for (s, v) in d_x.row_mut(i).iter_mut().zip(&g.input) {
            *s += v;
        }
    }

    (
        d_x,
        BlockGrads {
            ln1_gain,
            ln1_bias,
            attn: attn_grads,
            ln2_gain,
            ln2_bias,
            w1: d_w1,
            b1: d_b1,
            w2: d_w2,
            b2: d_b2,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::cmatrix::CMatrix;
    use crate::lwm::mask::mask_patches;
    use crate::lwm::patch::patchify;
    use crate::nn::gradcheck::finite_diff_check;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn tiny_cfg() -> LwmConfig {
        LwmConfig {
            dim: 4,
            blocks: 1,
            heads: 2,
            token_len: 2,
            patch_capacity: 8,
        }
    }

    fn random_matrix(x: usize, y: usize, seed: u64) -> CMatrix {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let data = (0..x * y)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        CMatrix::from_vec(x, y, data).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(tiny_cfg().validate().is_ok());
        assert!(LwmConfig {
            heads: 3,
            ..tiny_cfg()
        }
        .validate()
        .is_err());
        assert!(LwmConfig {
            dim: 1,
            heads: 1,
            ..tiny_cfg()
        }
        .validate()
        .is_err());
        let default = LwmConfig::default();
        assert_eq!(default.dim, 16);
        assert_eq!(default.blocks, 2);
        assert_eq!(default.heads, 2);
        assert_eq!(default.token_len, 32);
        default.validate().unwrap();
    }

    #[test]
    fn patch_count_checks_divisibility_evenness_and_capacity() {
        let cfg = tiny_cfg();
        assert_eq!(cfg.patch_count(1, 2).unwrap(), 2);
        assert_eq!(cfg.patch_count(2, 4).unwrap(), 8);
        assert!(cfg.patch_count(1, 3).is_err(), "odd patch count");
        assert!(cfg.patch_count(3, 3).is_err(), "not divisible");
        assert!(cfg.patch_count(4, 4).is_err(), "over capacity");

        let sized = LwmConfig::default()
            .sized_for(&[(1, 32), (32, 32), (1, 32)])
            .unwrap();
        assert_eq!(sized.patch_capacity, 64);
    }

    #[test]
    fn output_shape_is_tokens_by_dim() {
        let cfg = LwmConfig {
            dim: 16,
            blocks: 2,
            heads: 2,
            token_len: 2,
            patch_capacity: 32,
        };
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let model = LwmModel::init(cfg, &mut rng).unwrap();
        let h = random_matrix(4, 8, 2);
        let seq = patchify(&h, 32).unwrap().with_cls(&model.cls_token).unwrap();
        let emb = model.encode(&seq).unwrap();
        assert_eq!(emb.rows(), 33);
        assert_eq!(emb.dim(), 16);
    }

    #[test]
    fn zero_depth_encoder_is_projection_plus_positions() {
        let cfg = LwmConfig {
            blocks: 0,
            ..tiny_cfg()
        };
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let model = LwmModel::init(cfg, &mut rng).unwrap();
        let h = random_matrix(1, 2, 4);
        let seq = patchify(&h, 2).unwrap().with_cls(&model.cls_token).unwrap();
        let emb = model.encode(&seq).unwrap();
        for i in 0..seq.len() {
            let want: Vec<f64> = model
                .proj
                .matvec(seq.patch(i))
                .iter()
                .zip(model.pos.row(i))
                .map(|(a, b)| a + b)
                .collect();
            for (a, b) in emb.row(i).iter().zip(&want) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn sequences_over_capacity_are_rejected() {
        let cfg = LwmConfig {
            patch_capacity: 2,
            ..tiny_cfg()
        };
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let model = LwmModel::init(cfg, &mut rng).unwrap();
        let h = random_matrix(2, 2, 6);
        let seq = patchify(&h, 4).unwrap().with_cls(&model.cls_token).unwrap();
        assert!(matches!(model.encode(&seq), Err(Error::Dimension(_))));
    }

    #[test]
    fn perfect_reconstruction_gives_zero_loss() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let mut model = LwmModel::init(tiny_cfg(), &mut rng).unwrap();
        // Zero decoder and zero original make every residual zero.
        for v in model.w_dec.data_mut() {
            *v = 0.0;
        }
        let h = CMatrix::from_vec(1, 2, vec![Complex64::new(0.0, 0.0); 2]).unwrap();
        let seq = patchify(&h, 2).unwrap().with_cls(&model.cls_token).unwrap();
        let (masked, record) = mask_patches(&seq, &model.mask_token, &mut rng).unwrap();
        let emb = model.encode(&masked).unwrap();
        assert_eq!(model.masked_loss(&emb, &record).unwrap(), 0.0);
    }

    #[test]
    fn single_masked_patch_loss_is_squared_offset() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let model = LwmModel::init(tiny_cfg(), &mut rng).unwrap();
        let h = random_matrix(1, 2, 9);
        let seq = patchify(&h, 2).unwrap().with_cls(&model.cls_token).unwrap();
        let (masked, record) = mask_patches(&seq, &model.mask_token, &mut rng).unwrap();
        assert_eq!(record.len(), 1);
        let emb = model.encode(&masked).unwrap();
        let entry = &record.entries()[0];
        let recon = model.w_dec.matvec(emb.row(entry.index));
        let delta_sq: f64 = recon
            .iter()
            .zip(&entry.original)
            .map(|(r, p)| (r - p) * (r - p))
            .sum();
        let loss = model.masked_loss(&emb, &record).unwrap();
        assert!((loss - delta_sq).abs() < 1e-15);
    }

    #[test]
    fn masked_loss_matches_naive_loop() {
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let cfg = LwmConfig {
            dim: 4,
            blocks: 2,
            heads: 2,
            token_len: 2,
            patch_capacity: 16,
        };
        let model = LwmModel::init(cfg, &mut rng).unwrap();
        let h = random_matrix(4, 4, 11);
        let seq = patchify(&h, 16).unwrap().with_cls(&model.cls_token).unwrap();
        let (masked, record) = mask_patches(&seq, &model.mask_token, &mut rng).unwrap();
        assert!(record.len() >= 2);
        let emb = model.encode(&masked).unwrap();
        let got = model.masked_loss(&emb, &record).unwrap();

        // Naive loop: explicit matvec and per-coordinate accumulation.
        let mut acc = 0.0;
        for e in record.entries() {
            for (l_idx, p) in e.original.iter().enumerate() {
                let mut recon = 0.0;
                for d_idx in 0..4 {
                    recon += model.w_dec.get(l_idx, d_idx) * emb.row(e.index)[d_idx];
                }
                acc += (recon - p) * (recon - p);
            }
        }
        acc /= record.len() as f64;
        assert!((got - acc).abs() < 1e-12 * acc.max(1.0), "{got} vs {acc}");
    }

    #[test]
    fn empty_mask_set_is_a_domain_error() {
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let model = LwmModel::init(tiny_cfg(), &mut rng).unwrap();
        let h = random_matrix(1, 2, 13);
        let seq = patchify(&h, 2).unwrap().with_cls(&model.cls_token).unwrap();
        let emb = model.encode(&seq).unwrap();
        let record = MaskRecord::from_entries(vec![]);
        assert!(matches!(
            model.masked_loss(&emb, &record),
            Err(Error::Domain(_))
        ));
    }

    /// Reconstructs the masked sequence for a candidate parameter vector so
    /// finite differences see the loss as a pure function of the parameters.
    fn rebuild_masked(
        base: &PatchSequence,
        masked: &PatchSequence,
        record: &MaskRecord,
        cls: &[f64],
        mask_token: &[f64],
    ) -> PatchSequence {
        let mut seq = base.with_cls(cls).unwrap();
        for e in record.entries() {
            match e.replacement {
                Replacement::MaskToken => {
                    seq.patch_mut(e.index).copy_from_slice(mask_token);
                }
                Replacement::RandomNoise => {
                    seq.patch_mut(e.index).copy_from_slice(masked.patch(e.index));
                }
                Replacement::Unchanged => {}
            }
        }
        seq
    }

    #[test]
    fn full_pipeline_gradients_match_central_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(14);
        let mut model = LwmModel::init(tiny_cfg(), &mut rng).unwrap();
        let h = random_matrix(2, 2, 15);
        let base = patchify(&h, 4).unwrap();
        let with_cls = base.with_cls(&model.cls_token).unwrap();
        let (masked, record) = mask_patches(&with_cls, &model.mask_token, &mut rng).unwrap();

        let (_, grads) = model.masked_step(&masked, &record).unwrap();
        let analytic: Vec<f64> = grads
            .slices(false)
            .iter()
            .flat_map(|s| s.iter().copied())
            .collect();
        let params: Vec<f64> = model
            .param_slices_mut()
            .iter()
            .flat_map(|s| s.iter().copied())
            .collect();

        let template = model.clone();
        let loss = move |p: &[f64]| {
            let mut m = template.clone();
            let mut rest = p;
            for slice in m.param_slices_mut() {
                slice.copy_from_slice(&rest[..slice.len()]);
                rest = &rest[slice.len()..];
            }
            let seq = rebuild_masked(&base, &masked, &record, &m.cls_token, &m.mask_token);
            let emb = m.encode(&seq).unwrap();
            m.masked_loss(&emb, &record).unwrap()
        };
        let err = finite_diff_check(loss, &params, &analytic, 1e-5);
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn batch_gradient_accumulation_matches_scaling() {
        let mut rng = ChaCha12Rng::seed_from_u64(20);
        let model = LwmModel::init(tiny_cfg(), &mut rng).unwrap();
        let h = random_matrix(2, 2, 21);
        let seq = patchify(&h, 4).unwrap().with_cls(&model.cls_token).unwrap();
        let (masked, record) = mask_patches(&seq, &model.mask_token, &mut rng).unwrap();
        let (_, g) = model.masked_step(&masked, &record).unwrap();

        let mut acc = LwmGrads::zeros_like(&model);
        acc.add_scaled(&g, 0.25);
        acc.add_scaled(&g, 0.25);
        for (a, b) in acc.slices(false).iter().zip(g.slices(false).iter()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - 0.5 * y).abs() < 1e-15);
            }
        }
    }
}
