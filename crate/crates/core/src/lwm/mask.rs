//! Masked-patch selection for self-supervised training.
//!
//! A fixed fraction (15%, floor one patch) of the non-CLS patches is chosen
//! uniformly without replacement. Each chosen patch independently becomes the
//! learned mask token (80%), fresh standard-normal noise (10%), or stays
//! unchanged (10%); the true patch is recorded either way.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::lwm::patch::PatchSequence;

pub const MASK_FRACTION: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Replacement {
    MaskToken,
    RandomNoise,
    Unchanged,
}

/// One masked position: its index in the with-CLS sequence (so always >= 1),
/// how it was replaced, and the original patch content.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskEntry {
    pub index: usize,
    pub replacement: Replacement,
    pub original: Vec<f64>,
}

/// The masked positions of one sequence, sorted by index.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskRecord {
    entries: Vec<MaskEntry>,
}

impl MaskRecord {
    /// Builds a record from explicit entries, kept sorted by index.
    pub fn from_entries(mut entries: Vec<MaskEntry>) -> Self {
        entries.sort_by_key(|e| e.index);
        Self { entries }
    }

    pub fn entries(&self) -> &[MaskEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Number of patches to mask among `p` maskable ones.
pub fn mask_count(p: usize) -> usize {
    ((MASK_FRACTION * p as f64).round() as usize).max(1)
}

/// Masks a with-CLS sequence. The CLS patch at index 0 is never a candidate.
pub fn mask_patches<R: Rng>(
    seq: &PatchSequence,
    mask_token: &[f64],
    rng: &mut R,
) -> Result<(PatchSequence, MaskRecord)> {
    if !seq.has_cls() {
        return Err(Error::State("masking expects a with-CLS sequence".into()));
    }
    let p = seq.len() - 1;
    if p == 0 {
        return Err(Error::Dimension("no maskable patches in the sequence".into()));
    }
    if mask_token.len() != seq.token_len() {
        return Err(Error::Dimension(format!(
            "mask token has length {}, tokens have length {}",
            mask_token.len(),
            seq.token_len()
        )));
    }

    let mut indices: Vec<usize> = rand::seq::index::sample(rng, p, mask_count(p))
        .iter()
        .map(|i| i + 1)
        .collect();
    indices.sort_unstable();

    let mut masked = seq.clone();
    let mut entries = Vec::with_capacity(indices.len());
    for index in indices {
        let original = seq.patch(index).to_vec();
        let u: f64 = rng.random_range(0.0..1.0);
        let replacement = if u < 0.8 {
            masked.patch_mut(index).copy_from_slice(mask_token);
            Replacement::MaskToken
        } else if u < 0.9 {
            for v in masked.patch_mut(index).iter_mut() {
                *v = StandardNormal.sample(rng);
            }
            Replacement::RandomNoise
        } else {
            Replacement::Unchanged
        };
        entries.push(MaskEntry {
            index,
            replacement,
            original,
        });
    }
    Ok((masked, MaskRecord { entries }))
}
