//! Masked channel modeling: complex matrices become patch-token sequences, a
//! small transformer encodes them, and masked-reconstruction finetuning plus
//! CLS-row embeddings turn raw channels into compact state vectors.

pub mod encoder;
pub mod finetune;
pub mod mask;
pub mod patch;
pub mod store;

pub use encoder::{EmbeddingMatrix, EncoderBlock, LwmConfig, LwmGrads, LwmModel};
pub use finetune::{embed_state, finetune, FinetuneConfig};
pub use mask::{mask_count, mask_patches, MaskEntry, MaskRecord, Replacement, MASK_FRACTION};
pub use patch::{patchify, token_len, unpatchify, PatchSequence};
pub use store::{load_model, save_model, sidecar_path};
