//! Neural network building blocks with hand-written backward passes.

pub mod attention;
pub mod checkpoint;
pub mod dense;
pub mod gradcheck;
pub mod layernorm;
pub mod mlp;
pub mod optim;
pub mod tensor;

pub use attention::{AttentionCache, AttentionGrads, MultiHeadAttention};
pub use dense::{Activation, DenseGrads, DenseLayer};
pub use gradcheck::finite_diff_check;
pub use layernorm::{LayerNorm, LayerNormCache, LayerNormGrads};
pub use mlp::{Mlp, MlpGrads};
pub use optim::{Adam, AdamConfig};
pub use tensor::Tensor2;
