//! Comparison systems: exhaustive codebook beam sweeping and the raw-CSI
//! observation used to train an agent without an encoder.

use num_complex::Complex64;
use std::f64::consts::TAU;

use crate::channel::cmatrix::CMatrix;
use crate::channel::physics::sum_se;
use crate::channel::types::{ChannelSet, Precoder, RisPhaseConfig};
use crate::env::normalize_state;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodebookKind {
    /// Unit-norm complex transmit beams.
    BsBeam,
    /// Per-element phase vectors.
    RisPhase,
}

/// A finite menu of candidate configurations for one side of the link.
#[derive(Debug, Clone)]
pub enum Codebook {
    BsBeam(Vec<Vec<Complex64>>),
    RisPhase(Vec<Vec<f64>>),
}

impl Codebook {
    pub fn kind(&self) -> CodebookKind {
        match self {
            Codebook::BsBeam(_) => CodebookKind::BsBeam,
            Codebook::RisPhase(_) => CodebookKind::RisPhase,
        }
    }

    pub fn size(&self) -> usize {
        match self {
            Codebook::BsBeam(e) => e.len(),
            Codebook::RisPhase(e) => e.len(),
        }
    }
}

/// Discrete-transform codebook: entry `c` has components
/// `exp(-j 2 pi k c / size) / sqrt(n)` for transmit beams, or phase ramps
/// `2 pi k c / size` (wrapped into `[0, 2 pi)`) for the reflecting surface.
pub fn dft_codebook(kind: CodebookKind, n: usize, size: usize) -> Result<Codebook> {
    if n == 0 || size == 0 {
        return Err(Error::Config(format!(
            "codebook needs positive dimension and size, got {n} and {size}"
        )));
    }
    match kind {
        CodebookKind::BsBeam => {
            let scale = 1.0 / (n as f64).sqrt();
            let entries = (0..size)
                .map(|c| {
                    (0..n)
                        .map(|k| {
                            let phase = -TAU * (k * c) as f64 / size as f64;
                            Complex64::from_polar(scale, phase)
                        })
                        .collect()
                })
                .collect();
            Ok(Codebook::BsBeam(entries))
        }
        CodebookKind::RisPhase => {
            let entries = (0..size)
                .map(|c| {
                    (0..n)
                        .map(|k| {
                            let phase = (TAU * (k * c) as f64 / size as f64).rem_euclid(TAU);
                            if phase >= TAU {
                                0.0
                            } else {
                                phase
                            }
                        })
                        .collect()
                })
                .collect();
            Ok(Codebook::RisPhase(entries))
        }
    }
}

/// One sweep candidate: a surface codeword with its greedy beam choices.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub ris_index: usize,
    pub bs_indices: Vec<usize>,
    pub sum_se: f64,
}

/// The sweep winner plus the full per-codeword report.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub precoder: Precoder,
    pub phases: RisPhaseConfig,
    pub sum_se: f64,
    /// Beam-gain evaluations performed: ris size x bs size x users.
    pub evaluations: usize,
    pub ris_index: usize,
    pub bs_indices: Vec<usize>,
    pub rows: Vec<SweepRow>,
}

impl SweepOutcome {
    /// `ris_index,bs_indices,sum_se` rows; beam choices are
    /// semicolon-separated to keep one codeword per CSV row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("ris_index,bs_indices,sum_se\n");
        for row in &self.rows {
            let beams: Vec<String> = row.bs_indices.iter().map(|b| b.to_string()).collect();
            out.push_str(&format!(
                "{},{},{}\n",
                row.ris_index,
                beams.join(";"),
                row.sum_se
            ));
        }
        out
    }
}

/// Exhaustive search: every surface codeword is tried, each user greedily
/// takes the transmit beam with the largest received signal power under
/// that codeword, the power budget splits evenly across users, and the
/// candidate with the best sum spectral efficiency wins. All ties break
/// toward the lowest index.
pub fn beam_sweep(
    ch: &ChannelSet,
    bs_book: &Codebook,
    ris_book: &Codebook,
    p_max: f64,
    noise_mw: f64,
) -> Result<SweepOutcome> {
    let Codebook::BsBeam(beams) = bs_book else {
        return Err(Error::Config("transmit codebook has the wrong kind".into()));
    };
    let Codebook::RisPhase(ris_words) = ris_book else {
        return Err(Error::Config("surface codebook has the wrong kind".into()));
    };
    if beams.is_empty() || ris_words.is_empty() {
        return Err(Error::Config("codebooks must be nonempty".into()));
    }
    for (i, b) in beams.iter().enumerate() {
        if b.len() != ch.n_t() {
            return Err(Error::Dimension(format!(
                "beam {i} has {} components, transmitter has {}",
                b.len(),
                ch.n_t()
            )));
        }
    }
    for (i, w) in ris_words.iter().enumerate() {
        if w.len() != ch.ris_elements() {
            return Err(Error::Dimension(format!(
                "surface codeword {i} has {} phases, surface has {} elements",
                w.len(),
                ch.ris_elements()
            )));
        }
    }

    let k_users = ch.users();
    let per_user = (p_max / k_users as f64).sqrt();
    let mut best: Option<(usize, Vec<usize>, f64, Precoder, RisPhaseConfig)> = None;
    let mut rows = Vec::with_capacity(ris_words.len());
    let mut evaluations = 0usize;

    for (j, word) in ris_words.iter().enumerate() {
        let phi = RisPhaseConfig::new(word.clone())?;
        // Greedy per-user beam choice on received signal power.
        let mut chosen = Vec::with_capacity(k_users);
        let mut columns = Vec::with_capacity(k_users);
        for k in 0..k_users {
            let h_eff = crate::channel::physics::effective_channel(ch, k, &phi)?;
            let mut best_gain = f64::NEG_INFINITY;
            let mut best_b = 0;
            for (b, beam) in beams.iter().enumerate() {
                let y = h_eff.matvec(beam)?;
                let gain: f64 = y.iter().map(|c| c.norm_sqr()).sum();
                evaluations += 1;
                if gain > best_gain {
                    best_gain = gain;
                    best_b = b;
                }
            }
            chosen.push(best_b);
            columns.push(beams[best_b].iter().map(|c| c * per_user).collect::<Vec<_>>());
        }
        let f = CMatrix::from_columns(&columns)?;
        let precoder = Precoder::new(f, p_max)?;
        let se = sum_se(ch, &phi, &precoder, noise_mw)?;
        rows.push(SweepRow {
            ris_index: j,
            bs_indices: chosen.clone(),
            sum_se: se,
        });
        let better = match &best {
            None => true,
            Some((_, _, best_se, _, _)) => se > *best_se,
        };
        if better {
            best = Some((j, chosen, se, precoder, phi));
        }
    }

    let (ris_index, bs_indices, best_se, precoder, phases) =
        best.expect("nonempty codebooks always yield a winner");
    Ok(SweepOutcome {
        precoder,
        phases,
        sum_se: best_se,
        evaluations,
        ris_index,
        bs_indices,
        rows,
    })
}

/// Flattened re/im of every channel matrix (direct users ascending, then
/// the transmitter-surface link, then surface-user links ascending), scaled
/// to unit root-mean-square.
pub fn raw_state(ch: &ChannelSet) -> Vec<f64> {
    normalize_state(&ch.flatten_interleaved())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::generate::generate_channels;
    use crate::channel::types::{ChannelModel, ScenarioConfig};

    fn small_channels(users: usize, n_t: usize, m: usize, seed: u64) -> ChannelSet {
        let cfg = ScenarioConfig {
            n_t,
            n_r: 1,
            ris_elements: m,
            users,
            p_max_dbm: 6.0,
            noise_dbm: 0.0,
            model: ChannelModel::Rayleigh,
            seed: 0,
        };
        generate_channels(&cfg, seed).unwrap()
    }

    #[test]
    fn bs_entries_are_unit_norm() {
        let book = dft_codebook(CodebookKind::BsBeam, 5, 7).unwrap();
        assert_eq!(book.size(), 7);
        assert_eq!(book.kind(), CodebookKind::BsBeam);
        let Codebook::BsBeam(entries) = book else {
            unreachable!()
        };
        for e in &entries {
            let norm: f64 = e.iter().map(|c| c.norm_sqr()).sum();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn square_books_have_orthogonal_entries() {
        let Codebook::BsBeam(entries) = dft_codebook(CodebookKind::BsBeam, 8, 8).unwrap() else {
            unreachable!()
        };
        for i in 0..8 {
            for j in 0..8 {
                let inner: Complex64 = entries[i]
                    .iter()
                    .zip(&entries[j])
                    .map(|(a, b)| a * b.conj())
                    .sum();
                if i == j {
                    assert!((inner.norm() - 1.0).abs() < 1e-12);
                } else {
                    assert!(inner.norm() < 1e-12, "entries {i} and {j} overlap");
                }
            }
        }
    }

    #[test]
    fn ris_entries_are_valid_phases() {
        let Codebook::RisPhase(entries) = dft_codebook(CodebookKind::RisPhase, 6, 9).unwrap()
        else {
            unreachable!()
        };
        assert_eq!(entries.len(), 9);
        for e in &entries {
            RisPhaseConfig::new(e.clone()).unwrap();
        }
        // Entry 0 is the all-zero ramp.
        assert!(entries[0].iter().all(|&p| p == 0.0));
    }

    #[test]
    fn zero_sizes_are_rejected() {
        assert!(dft_codebook(CodebookKind::BsBeam, 0, 4).is_err());
        assert!(dft_codebook(CodebookKind::RisPhase, 4, 0).is_err());
    }

    #[test]
    fn single_entry_books_return_that_pair() {
        let ch = small_channels(3, 2, 2, 1);
        let bs = dft_codebook(CodebookKind::BsBeam, 2, 1).unwrap();
        let ris = dft_codebook(CodebookKind::RisPhase, 2, 1).unwrap();
        let out = beam_sweep(&ch, &bs, &ris, 2.0, 0.5).unwrap();
        assert_eq!(out.ris_index, 0);
        assert_eq!(out.bs_indices, vec![0, 0, 0]);
        assert_eq!(out.evaluations, 3, "one gain evaluation per user");
        assert_eq!(out.rows.len(), 1);
        assert!((out.precoder.matrix().frobenius_sq() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn paper_scale_books_cost_1024_pairs_per_user() {
        let ch = small_channels(1, 32, 32, 2);
        let bs = dft_codebook(CodebookKind::BsBeam, 32, 32).unwrap();
        let ris = dft_codebook(CodebookKind::RisPhase, 32, 32).unwrap();
        let out = beam_sweep(&ch, &bs, &ris, 1.0, 1e-3).unwrap();
        assert_eq!(out.evaluations, 32 * 32);
        assert_eq!(out.rows.len(), 32);
    }

    /// Independent exhaustive reference: explicit loops, no shared helpers
    /// beyond complex scalar arithmetic.
    fn sweep_by_hand(
        ch: &ChannelSet,
        beams: &[Vec<Complex64>],
        ris_words: &[Vec<f64>],
        p_max: f64,
        noise_mw: f64,
    ) -> (usize, Vec<usize>, f64) {
        let k_users = ch.users();
        let per_user = (p_max / k_users as f64).sqrt();
        let mut best = (usize::MAX, Vec::new(), f64::NEG_INFINITY);
        for (j, word) in ris_words.iter().enumerate() {
            // Effective rows per user via explicit sums.
            let h_eff: Vec<Vec<Complex64>> = (0..k_users)
                .map(|k| {
                    let d = ch.direct(k).unwrap();
                    let g = ch.bs_ris();
                    let r = ch.ris_user(k).unwrap();
                    (0..ch.n_t())
                        .map(|t| {
                            let mut acc = d.get(0, t);
                            for m in 0..ch.ris_elements() {
                                let theta = Complex64::from_polar(1.0, word[m]);
                                acc += r.get(0, m) * theta * g.get(m, t);
                            }
                            acc
                        })
                        .collect()
                })
                .collect();
            let mut chosen = Vec::new();
            for row in &h_eff {
                let mut best_b = usize::MAX;
                let mut best_gain = f64::NEG_INFINITY;
                for (b, beam) in beams.iter().enumerate() {
                    let mut y = Complex64::new(0.0, 0.0);
                    for (h, f) in row.iter().zip(beam) {
                        y += h * f;
                    }
                    if y.norm_sqr() > best_gain {
                        best_gain = y.norm_sqr();
                        best_b = b;
                    }
                }
                chosen.push(best_b);
            }
            let mut se = 0.0;
            for (k, row) in h_eff.iter().enumerate() {
                let mut signal = 0.0;
                let mut interference = 0.0;
                for (u, &b) in chosen.iter().enumerate() {
                    let mut y = Complex64::new(0.0, 0.0);
                    for (h, f) in row.iter().zip(&beams[b]) {
                        y += h * (f * per_user);
                    }
                    if u == k {
                        signal = y.norm_sqr();
                    } else {
                        interference += y.norm_sqr();
                    }
                }
                se += (1.0 + signal / (interference + noise_mw)).log2();
            }
            if se > best.2 {
                best = (j, chosen, se);
            }
        }
        best
    }

    #[test]
    fn sweep_matches_the_exhaustive_hand_oracle() {
        let bs = dft_codebook(CodebookKind::BsBeam, 3, 4).unwrap();
        let ris = dft_codebook(CodebookKind::RisPhase, 2, 4).unwrap();
        let Codebook::BsBeam(beams) = &bs else {
            unreachable!()
        };
        let Codebook::RisPhase(words) = &ris else {
            unreachable!()
        };
        for seed in 0..20 {
            let ch = small_channels(2, 3, 2, seed);
            let out = beam_sweep(&ch, &bs, &ris, 2.0, 0.25).unwrap();
            let (j, chosen, se) = sweep_by_hand(&ch, beams, words, 2.0, 0.25);
            assert_eq!(out.ris_index, j, "seed {seed}");
            assert_eq!(out.bs_indices, chosen, "seed {seed}");
            assert!((out.sum_se - se).abs() < 1e-10, "seed {seed}");
            assert_eq!(out.evaluations, 4 * 4 * 2);
        }
    }

    #[test]
    fn winner_dominates_every_other_codeword_row() {
        let bs = dft_codebook(CodebookKind::BsBeam, 4, 6).unwrap();
        let ris = dft_codebook(CodebookKind::RisPhase, 3, 6).unwrap();
        for seed in 0..10 {
            let ch = small_channels(2, 4, 3, 100 + seed);
            let out = beam_sweep(&ch, &bs, &ris, 1.5, 0.1).unwrap();
            for row in &out.rows {
                assert!(out.sum_se >= row.sum_se);
            }
            assert_eq!(out.sum_se, out.rows[out.ris_index].sum_se);
        }
    }

    #[test]
    fn reversing_codebooks_changes_indices_but_not_the_winner() {
        let bs = dft_codebook(CodebookKind::BsBeam, 3, 5).unwrap();
        let ris = dft_codebook(CodebookKind::RisPhase, 3, 5).unwrap();
        let ch = small_channels(2, 3, 3, 42);
        let out = beam_sweep(&ch, &bs, &ris, 1.0, 0.2).unwrap();

        let Codebook::RisPhase(words) = &ris else {
            unreachable!()
        };
        let reversed = Codebook::RisPhase(words.iter().rev().cloned().collect());
        let out_rev = beam_sweep(&ch, &bs, &reversed, 1.0, 0.2).unwrap();
        assert!((out.sum_se - out_rev.sum_se).abs() < 1e-12);
        assert_eq!(out_rev.ris_index, 4 - out.ris_index);
        assert_eq!(out.phases.phases(), out_rev.phases.phases());
    }

    #[test]
    fn sweep_value_grows_with_the_power_budget() {
        let bs = dft_codebook(CodebookKind::BsBeam, 3, 4).unwrap();
        let ris = dft_codebook(CodebookKind::RisPhase, 2, 4).unwrap();
        let ch = small_channels(2, 3, 2, 7);
        let mut last = f64::NEG_INFINITY;
        for p in [0.5, 1.0, 2.0, 4.0] {
            let out = beam_sweep(&ch, &bs, &ris, p, 0.3).unwrap();
            assert!(out.sum_se >= last);
            last = out.sum_se;
        }
    }

    #[test]
    fn csv_report_lists_every_candidate() {
        let bs = dft_codebook(CodebookKind::BsBeam, 2, 2).unwrap();
        let ris = dft_codebook(CodebookKind::RisPhase, 2, 3).unwrap();
        let ch = small_channels(2, 2, 2, 9);
        let out = beam_sweep(&ch, &bs, &ris, 1.0, 0.5).unwrap();
        let csv = out.to_csv();
        let lines: Vec<&str> = csv.trim_end().lines().collect();
        assert_eq!(lines[0], "ris_index,bs_indices,sum_se");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0,"));
        let beams_field = lines[1].split(',').nth(1).unwrap();
        assert_eq!(beams_field.split(';').count(), 2, "one beam per user");
    }

    #[test]
    fn raw_state_shape_order_and_scale() {
        let ch = small_channels(1, 2, 2, 11);
        let v = raw_state(&ch);
        // 2 (K n_r n_t + m n_t + K n_r m) = 2 (2 + 4 + 2) = 16.
        assert_eq!(v.len(), 16);
        let rms = (v.iter().map(|x| x * x).sum::<f64>() / 16.0).sqrt();
        assert!((rms - 1.0).abs() < 1e-12);

        // Ordering: the first entries are the direct matrix re/im pairs.
        let flat = ch.flatten_interleaved();
        let scale = v[0] / flat[0];
        for (a, b) in flat.iter().zip(&v) {
            assert!((a * scale - b).abs() < 1e-12);
        }
        assert_eq!(flat[0], ch.direct(0).unwrap().get(0, 0).re);
        assert_eq!(flat[1], ch.direct(0).unwrap().get(0, 0).im);
    }

    #[test]
    fn mismatched_codebook_dims_are_rejected() {
        let ch = small_channels(1, 3, 2, 12);
        let bs = dft_codebook(CodebookKind::BsBeam, 4, 2).unwrap();
        let ris = dft_codebook(CodebookKind::RisPhase, 2, 2).unwrap();
        assert!(beam_sweep(&ch, &bs, &ris, 1.0, 0.5).is_err());

        let bs = dft_codebook(CodebookKind::BsBeam, 3, 2).unwrap();
        let ris = dft_codebook(CodebookKind::RisPhase, 5, 2).unwrap();
        assert!(beam_sweep(&ch, &bs, &ris, 1.0, 0.5).is_err());

        let swapped = beam_sweep(&ch, &ris, &bs, 1.0, 0.5);
        assert!(swapped.is_err(), "kind mismatch is caught");
    }
}
