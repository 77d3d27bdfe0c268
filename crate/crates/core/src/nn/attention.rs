//! Multi-head scaled dot-product self-attention with analytic backward.
//!
//! Projections are bias-free `D x D` matrices shared across heads; each head
//! operates on its own `D / heads` column slice.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor2;

/// Self-attention parameters: query/key/value/output projections.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub wq: Tensor2,
    pub wk: Tensor2,
    pub wv: Tensor2,
    pub wo: Tensor2,
    heads: usize,
}

/// Forward intermediates kept for the backward pass.
#[derive(Debug, Clone)]
pub struct AttentionCache {
    input: Tensor2,
    q: Tensor2,
    k: Tensor2,
    v: Tensor2,
    /// Row-stochastic attention matrix per head, each `T x T`.
    attn: Vec<Tensor2>,
    /// Concatenated per-head outputs before the output projection.
    concat: Tensor2,
}

/// Gradients of all four projection matrices.
#[derive(Debug, Clone)]
pub struct AttentionGrads {
    pub wq: Tensor2,
    pub wk: Tensor2,
    pub wv: Tensor2,
    pub wo: Tensor2,
}

impl MultiHeadAttention {
    pub fn init<R: Rng>(dim: usize, heads: usize, rng: &mut R) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(Error::Config(format!(
                "attention dim {dim} must be divisible by head count {heads}"
            )));
        }
        Ok(Self {
            wq: Tensor2::init_uniform(dim, dim, rng),
            wk: Tensor2::init_uniform(dim, dim, rng),
            wv: Tensor2::init_uniform(dim, dim, rng),
            wo: Tensor2::init_uniform(dim, dim, rng),
            heads,
        })
    }

    pub fn from_parts(
        wq: Tensor2,
        wk: Tensor2,
        wv: Tensor2,
        wo: Tensor2,
        heads: usize,
    ) -> Result<Self> {
        let dim = wq.rows();
        for (name, t) in [("wq", &wq), ("wk", &wk), ("wv", &wv), ("wo", &wo)] {
            if t.rows() != dim || t.cols() != dim {
                return Err(Error::Dimension(format!(
                    "attention projection {name} must be {dim}x{dim}"
                )));
            }
        }
        if heads == 0 || dim % heads != 0 {
            return Err(Error::Config(format!(
                "attention dim {dim} must be divisible by head count {heads}"
            )));
        }
        Ok(Self {
            wq,
            wk,
            wv,
            wo,
            heads,
        })
    }

    pub fn dim(&self) -> usize {
        self.wq.rows()
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    /// Runs attention over a `T x D` sequence.
    pub fn forward(&self, x: &Tensor2) -> Result<(Tensor2, AttentionCache)> {
        let dim = self.dim();
        if x.cols() != dim {
            return Err(Error::Dimension(format!(
                "attention expects {dim} features, got {}",
                x.cols()
            )));
        }
        let t = x.rows();
        let head_dim = dim / self.heads;
        let scale = 1.0 / (head_dim as f64).sqrt();

        let q = x.matmul_nt(&self.wq);
        let k = x.matmul_nt(&self.wk);
        let v = x.matmul_nt(&self.wv);

        let mut concat = Tensor2::zeros(t, dim);
        let mut attn = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let lo = h * head_dim;
            let hi = lo + head_dim;
            // Scores S[i,j] = <q_i, k_j> / sqrt(head_dim), then row softmax.
            let mut a = Tensor2::zeros(t, t);
            for i in 0..t {
                let qi = &q.row(i)[lo..hi];
                let row = a.row_mut(i);
                for (j, slot) in row.iter_mut().enumerate() {
                    let kj = &k.row(j)[lo..hi];
                    let mut acc = 0.0;
                    for (a, b) in qi.iter().zip(kj) {
                        acc = a.mul_add(*b, acc);
                    }
                    *slot = acc * scale;
                }
                softmax_in_place(row);
            }
            // Per-head output rows: O_i = sum_j A[i,j] * v_j.
            for i in 0..t {
                for j in 0..t {
                    let w = a.get(i, j);
                    let vj = &v.row(j)[lo..hi];
                    let orow = &mut concat.row_mut(i)[lo..hi];
                    for (o, vv) in orow.iter_mut().zip(vj) {
                        *o = w.mul_add(*vv, *o);
                    }
                }
            }
            attn.push(a);
        }

        let out = concat.matmul_nt(&self.wo);
        Ok((
            out,
            AttentionCache {
                input: x.clone(),
                q,
                k,
                v,
                attn,
                concat,
            },
        ))
    }

    /// Backward pass; returns the input gradient and projection gradients.
    pub fn backward(&self, cache: &AttentionCache, upstream: &Tensor2) -> (Tensor2, AttentionGrads) {
        let dim = self.dim();
        let t = cache.input.rows();
        let head_dim = dim / self.heads;
        let scale = 1.0 / (head_dim as f64).sqrt();

        let grad_wo = upstream.matmul_tn(&cache.concat);
        let d_concat = upstream.matmul(&self.wo);

        let mut dq = Tensor2::zeros(t, dim);
        let mut dk = Tensor2::zeros(t, dim);
        let mut dv = Tensor2::zeros(t, dim);

        for h in 0..self.heads {
            let lo = h * head_dim;
            let hi = lo + head_dim;
            let a = &cache.attn[h];

            // dA[i,j] = <dO_i, v_j>; dV_j += sum_i A[i,j] dO_i.
            let mut da = Tensor2::zeros(t, t);
            for i in 0..t {
                let doi = &d_concat.row(i)[lo..hi];
                for j in 0..t {
                    let vj = &cache.v.row(j)[lo..hi];
                    let mut acc = 0.0;
                    for (x, y) in doi.iter().zip(vj) {
                        acc = x.mul_add(*y, acc);
                    }
                    da.set(i, j, acc);
                    let w = a.get(i, j);
                    let dvj = &mut dv.row_mut(j)[lo..hi];
                    for (d, x) in dvj.iter_mut().zip(doi) {
                        *d = w.mul_add(*x, *d);
                    }
                }
            }

            // Softmax backward per row, then dQ/dK through the scaled scores.
            for i in 0..t {
                let arow = a.row(i);
                let darow = da.row(i);
                let dot: f64 = arow.iter().zip(darow).map(|(x, y)| x * y).sum();
                for j in 0..t {
                    let ds = arow[j] * (darow[j] - dot) * scale;
                    if ds == 0.0 {
                        continue;
                    }
                    let kj = &cache.k.row(j)[lo..hi];
                    let qi = &cache.q.row(i)[lo..hi];
                    let dqi = &mut dq.row_mut(i)[lo..hi];
                    for (d, x) in dqi.iter_mut().zip(kj) {
                        *d = ds.mul_add(*x, *d);
                    }
                    let dkj = &mut dk.row_mut(j)[lo..hi];
                    for (d, x) in dkj.iter_mut().zip(qi) {
                        *d = ds.mul_add(*x, *d);
                    }
                }
            }
        }

        let grad_wq = dq.matmul_tn(&cache.input);
        let grad_wk = dk.matmul_tn(&cache.input);
        let grad_wv = dv.matmul_tn(&cache.input);

        let mut d_input = dq.matmul(&self.wq);
        let dk_x = dk.matmul(&self.wk);
        let dv_x = dv.matmul(&self.wv);
        for (o, (a, b)) in d_input
            .data_mut()
            .iter_mut()
            .zip(dk_x.data().iter().zip(dv_x.data()))
        {
            *o += a + b;
        }

        (
            d_input,
            AttentionGrads {
                wq: grad_wq,
                wk: grad_wk,
                wv: grad_wv,
                wo: grad_wo,
            },
        )
    }

    /// Attention matrices from the last forward, exposed for invariant tests.
    pub fn attention_rows(cache: &AttentionCache) -> &[Tensor2] {
        &cache.attn
    }

    pub fn param_slices(&self) -> [&[f64]; 4] {
        [
            self.wq.data(),
            self.wk.data(),
            self.wv.data(),
            self.wo.data(),
        ]
    }

    pub fn param_slices_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.wq.data_mut(),
            self.wk.data_mut(),
            self.wv.data_mut(),
            self.wo.data_mut(),
        ]
    }
}

/// Numerically stable softmax over one score row.
fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::finite_diff_check;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn random_attention(dim: usize, heads: usize, seed: u64) -> MultiHeadAttention {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        MultiHeadAttention::init(dim, heads, &mut rng).unwrap()
    }

    #[test]
    fn non_divisible_heads_rejected() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        assert!(matches!(
            MultiHeadAttention::init(6, 4, &mut rng),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn single_token_output_is_projected_value() {
        let attn = random_attention(4, 2, 1);
        let x = Tensor2::from_vec(1, 4, vec![0.3, -0.2, 0.9, 0.1]).unwrap();
        let (y, cache) = attn.forward(&x).unwrap();
        // With one token the softmax weight is exactly 1.
        for a in MultiHeadAttention::attention_rows(&cache) {
            assert_eq!(a.get(0, 0), 1.0);
        }
        let v = attn.wv.matvec(x.row(0));
        let want = attn.wo.matvec(&v);
        for (a, b) in y.row(0).iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_tokens_attend_uniformly() {
        let attn = random_attention(4, 2, 2);
        let token = [0.5, -1.0, 0.25, 2.0];
        let mut data = Vec::new();
        for _ in 0..3 {
            data.extend_from_slice(&token);
        }
        let x = Tensor2::from_vec(3, 4, data).unwrap();
        let (_, cache) = attn.forward(&x).unwrap();
        for a in MultiHeadAttention::attention_rows(&cache) {
            for r in 0..3 {
                for c in 0..3 {
                    assert!((a.get(r, c) - 1.0 / 3.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn attention_rows_are_probability_vectors() {
        let attn = random_attention(8, 2, 3);
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let data: Vec<f64> = (0..5 * 8).map(|_| rng.random_range(-2.0..2.0)).collect();
        let x = Tensor2::from_vec(5, 8, data).unwrap();
        let (_, cache) = attn.forward(&x).unwrap();
        for a in MultiHeadAttention::attention_rows(&cache) {
            for r in 0..5 {
                let row = a.row(r);
                assert!(row.iter().all(|v| *v >= 0.0));
                let sum: f64 = row.iter().sum();
                assert!((sum - 1.0).abs() < 1e-12, "row sum {sum}");
            }
        }
    }

    /// Loop-based reference attention written independently of the
    /// implementation above: explicit per-token projections, explicit
    /// softmax, no shared helpers.
    fn reference_attention(attn: &MultiHeadAttention, x: &Tensor2) -> Tensor2 {
        let t = x.rows();
        let d = attn.dim();
        let heads = attn.heads();
        let hd = d / heads;
        let project = |w: &Tensor2, i: usize| -> Vec<f64> {
            (0..d)
                .map(|r| (0..d).map(|c| w.get(r, c) * x.get(i, c)).sum())
                .collect()
        };
        let mut out = Tensor2::zeros(t, d);
        for h in 0..heads {
            for i in 0..t {
                let qi = project(&attn.wq, i);
                let mut weights = Vec::with_capacity(t);
                for j in 0..t {
                    let kj = project(&attn.wk, j);
                    let mut s = 0.0;
                    for c in h * hd..(h + 1) * hd {
                        s += qi[c] * kj[c];
                    }
                    weights.push((s / (hd as f64).sqrt()).exp());
                }
                let norm: f64 = weights.iter().sum();
                for j in 0..t {
                    let vj = project(&attn.wv, j);
                    for c in h * hd..(h + 1) * hd {
                        let cur = out.get(i, c);
                        out.set(i, c, cur + weights[j] / norm * vj[c]);
                    }
                }
            }
        }
        let mut y = Tensor2::zeros(t, d);
        for i in 0..t {
            for r in 0..d {
                let mut acc = 0.0;
                for c in 0..d {
                    acc += attn.wo.get(r, c) * out.get(i, c);
                }
                y.set(i, r, acc);
            }
        }
        y
    }

    #[test]
    fn three_token_case_matches_reference() {
        let attn = random_attention(4, 2, 4);
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let data: Vec<f64> = (0..12).map(|_| rng.random_range(-1.5..1.5)).collect();
        let x = Tensor2::from_vec(3, 4, data).unwrap();
        let (y, _) = attn.forward(&x).unwrap();
        let want = reference_attention(&attn, &x);
        for (a, b) in y.data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn backward_matches_central_differences() {
        let dim = 4;
        let heads = 2;
        let t = 3;
        let attn = random_attention(dim, heads, 5);
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let data: Vec<f64> = (0..t * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = Tensor2::from_vec(t, dim, data.clone()).unwrap();
        let weights: Vec<f64> = (0..t * dim).map(|_| rng.random_range(-1.0..1.0)).collect();

        let (_, cache) = attn.forward(&x).unwrap();
        let upstream = Tensor2::from_vec(t, dim, weights.clone()).unwrap();
        let (dx, grads) = attn.backward(&cache, &upstream);

        // Check input gradient plus all four projections in one flat vector.
        let mut flat = data.clone();
        for s in attn.param_slices() {
            flat.extend_from_slice(s);
        }
        let mut analytic = dx.data().to_vec();
        for g in [&grads.wq, &grads.wk, &grads.wv, &grads.wo] {
            analytic.extend_from_slice(g.data());
        }

        let w = weights.clone();
        let loss = move |p: &[f64]| {
            let n = t * dim;
            let m = dim * dim;
            let x = Tensor2::from_vec(t, dim, p[..n].to_vec()).unwrap();
            let attn = MultiHeadAttention::from_parts(
                Tensor2::from_vec(dim, dim, p[n..n + m].to_vec()).unwrap(),
                Tensor2::from_vec(dim, dim, p[n + m..n + 2 * m].to_vec()).unwrap(),
                Tensor2::from_vec(dim, dim, p[n + 2 * m..n + 3 * m].to_vec()).unwrap(),
                Tensor2::from_vec(dim, dim, p[n + 3 * m..].to_vec()).unwrap(),
                heads,
            )
            .unwrap();
            let (y, _) = attn.forward(&x).unwrap();
            y.data().iter().zip(&w).map(|(a, b)| a * b).sum()
        };
        let err = finite_diff_check(loss, &flat, &analytic, 1e-6);
        assert!(err < 1e-4, "max relative error {err}");
    }
}
