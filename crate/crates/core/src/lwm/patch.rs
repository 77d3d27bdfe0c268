//! Splitting a complex matrix into fixed-length real token patches.
//!
//! An `X x Y` matrix becomes `P` patches of length `L = 2XY / P`: the real
//! parts flattened row-major fill the first `P/2` patches, the imaginary
//! parts the last `P/2`. Row-major flattening of the matrix equals column
//! stacking of its transpose, which is the layout the token model expects.

use crate::channel::cmatrix::CMatrix;
use crate::error::{Error, Result};

/// Ordered token patches of one matrix, optionally with a leading CLS patch.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSequence {
    patches: Vec<Vec<f64>>,
    token_len: usize,
    has_cls: bool,
}

impl PatchSequence {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn token_len(&self) -> usize {
        self.token_len
    }

    pub fn has_cls(&self) -> bool {
        self.has_cls
    }

    pub fn patch(&self, i: usize) -> &[f64] {
        &self.patches[i]
    }

    pub fn patches(&self) -> &[Vec<f64>] {
        &self.patches
    }

    pub(crate) fn patch_mut(&mut self, i: usize) -> &mut Vec<f64> {
        &mut self.patches[i]
    }

    /// Prepends the learned CLS patch; the result has length `P + 1` with the
    /// CLS at index 0 and the original order preserved after it.
    pub fn with_cls(&self, cls: &[f64]) -> Result<PatchSequence> {
        if self.has_cls {
            return Err(Error::State("sequence already has a CLS patch".into()));
        }
        if cls.len() != self.token_len {
            return Err(Error::Dimension(format!(
                "CLS patch has length {}, tokens have length {}",
                cls.len(),
                self.token_len
            )));
        }
        let mut patches = Vec::with_capacity(self.patches.len() + 1);
        patches.push(cls.to_vec());
        patches.extend(self.patches.iter().cloned());
        Ok(PatchSequence {
            patches,
            token_len: self.token_len,
            has_cls: true,
        })
    }
}

/// Token length for an `X x Y` matrix split into `P` patches.
pub fn token_len(x: usize, y: usize, p: usize) -> Result<usize> {
    if p == 0 || p % 2 != 0 {
        return Err(Error::Config(format!(
            "patch count must be positive and even, got {p}"
        )));
    }
    let total = 2 * x * y;
    if total % p != 0 {
        return Err(Error::Config(format!(
            "2 * {x} * {y} = {total} real values do not split into {p} patches"
        )));
    }
    Ok(total / p)
}

pub fn patchify(h: &CMatrix, p: usize) -> Result<PatchSequence> {
    let l = token_len(h.rows(), h.cols(), p)?;
    let half = p / 2;
    let mut patches = vec![Vec::with_capacity(l); p];
    for (idx, z) in h.data().iter().enumerate() {
        patches[idx / l].push(z.re);
        patches[half + idx / l].push(z.im);
    }
    Ok(PatchSequence {
        patches,
        token_len: l,
        has_cls: false,
    })
}

/// Exact inverse of [`patchify`] for the original dimensions.
pub fn unpatchify(seq: &PatchSequence, x: usize, y: usize) -> Result<CMatrix> {
    if seq.has_cls {
        return Err(Error::State("strip the CLS patch before unpatchify".into()));
    }
    let l = token_len(x, y, seq.len())?;
    if l != seq.token_len {
        return Err(Error::Dimension(format!(
            "sequence tokens have length {}, {x}x{y} with {} patches needs {l}",
            seq.token_len,
            seq.len()
        )));
    }
    let half = seq.len() / 2;
    let mut data = Vec::with_capacity(x * y);
    for idx in 0..x * y {
        let re = seq.patches[idx / l][idx % l];
        let im = seq.patches[half + idx / l][idx % l];
        data.push(num_complex::Complex64::new(re, im));
    }
    CMatrix::from_vec(x, y, data)
}
