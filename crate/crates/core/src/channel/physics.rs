//! Link-level math: effective channels through the reflecting surface,
//! per-user SINR, and spectral efficiency.
//!
//! All powers are linear milliwatts; dBm stays at the configuration boundary.

use num_complex::Complex64;

use crate::channel::cmatrix::{vec_norm_sq, CMatrix};
use crate::channel::types::{ChannelSet, Precoder, RisPhaseConfig};
use crate::error::{Error, Result};

/// `10^(x/10)`: dBm to linear milliwatts.
pub fn dbm_to_mw(x: f64) -> f64 {
    10f64.powf(x / 10.0)
}

/// Combined downlink channel of user `k`: direct path plus the cascade
/// through the surface, `H_k + G_k diag(theta) H_BR`.
pub fn effective_channel(ch: &ChannelSet, k: usize, phi: &RisPhaseConfig) -> Result<CMatrix> {
    effective_channel_theta(ch, k, &phi.theta())
}

/// Same combination for arbitrary complex reflection coefficients. The
/// cascade is linear in `theta`, which tests exploit.
pub fn effective_channel_theta(
    ch: &ChannelSet,
    k: usize,
    theta: &[Complex64],
) -> Result<CMatrix> {
    if theta.len() != ch.ris_elements() {
        return Err(Error::Dimension(format!(
            "{} reflection coefficients for {} surface elements",
            theta.len(),
            ch.ris_elements()
        )));
    }
    let reflected = ch.bs_ris().scale_rows(theta)?;
    let cascade = ch.ris_user(k)?.matmul(&reflected)?;
    ch.direct(k)?.add(&cascade)
}

/// Signal-to-interference-plus-noise ratio of user `k`:
/// `|H_eff f_k|^2 / (sum_{u != k} |H_eff f_u|^2 + noise_mw)`.
pub fn sinr_user(
    ch: &ChannelSet,
    k: usize,
    phi: &RisPhaseConfig,
    f: &Precoder,
    noise_mw: f64,
) -> Result<f64> {
    let h_eff = effective_channel(ch, k, phi)?;
    sinr_with_effective(&h_eff, k, f, noise_mw, ch.users())
}

fn sinr_with_effective(
    h_eff: &CMatrix,
    k: usize,
    f: &Precoder,
    noise_mw: f64,
    users: usize,
) -> Result<f64> {
    if !(noise_mw.is_finite() && noise_mw > 0.0) {
        return Err(Error::Domain(format!(
            "noise power must be positive and finite, got {noise_mw}"
        )));
    }
    if f.users() != users {
        return Err(Error::Dimension(format!(
            "precoder serves {} users, channel set has {users}",
            f.users()
        )));
    }
    if f.matrix().rows() != h_eff.cols() {
        return Err(Error::Dimension(format!(
            "precoder has {} transmit rows, channel expects {}",
            f.matrix().rows(),
            h_eff.cols()
        )));
    }
    let mut signal = 0.0;
    let mut interference = 0.0;
    for u in 0..users {
        let received = h_eff.matvec(&f.column(u)?)?;
        let power = vec_norm_sq(&received);
        if u == k {
            signal = power;
        } else {
            interference += power;
        }
    }
    Ok(signal / (interference + noise_mw))
}

/// Spectral efficiency in bps/Hz: `log2(1 + sinr)`.
pub fn se_user(sinr: f64) -> Result<f64> {
    if !sinr.is_finite() || sinr < 0.0 {
        return Err(Error::Domain(format!(
            "sinr must be finite and non-negative, got {sinr}"
        )));
    }
    Ok((1.0 + sinr).log2())
}

/// Sum spectral efficiency over all users; the per-step objective.
pub fn sum_se(
    ch: &ChannelSet,
    phi: &RisPhaseConfig,
    f: &Precoder,
    noise_mw: f64,
) -> Result<f64> {
    let mut total = 0.0;
    for k in 0..ch.users() {
        // Each user's effective channel is computed once and reused across
        // the signal and interference terms.
        let h_eff = effective_channel(ch, k, phi)?;
        let sinr = sinr_with_effective(&h_eff, k, f, noise_mw, ch.users())?;
        total += se_user(sinr)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::generate::generate_channels;
    use crate::channel::types::{ChannelModel, ScenarioConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;
    use std::f64::consts::{FRAC_PI_2, TAU};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_set(seed: u64, n_t: usize, n_r: usize, m: usize, users: usize) -> ChannelSet {
        let cfg = ScenarioConfig {
            n_t,
            n_r,
            ris_elements: m,
            users,
            model: ChannelModel::Rayleigh,
            ..ScenarioConfig::default()
        };
        generate_channels(&cfg, seed).unwrap()
    }

    fn random_precoder(seed: u64, n_t: usize, users: usize, p_max: f64) -> Precoder {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let data = (0..n_t * users)
            .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let f = CMatrix::from_vec(n_t, users, data).unwrap();
        Precoder::scaled_to_budget(&f, p_max).unwrap()
    }

    #[test]
    fn dbm_conversion_reference_points() {
        assert_eq!(dbm_to_mw(0.0), 1.0);
        assert!((dbm_to_mw(30.0) - 1000.0).abs() < 1e-9);
        assert!((dbm_to_mw(-90.0) - 1e-9).abs() < 1e-24);
    }

    #[test]
    fn disconnected_surface_leaves_direct_channel() {
        let set = ChannelSet::new(
            vec![CMatrix::from_vec(1, 2, vec![c(1.0, -2.0), c(0.5, 3.0)]).unwrap()],
            CMatrix::from_vec(2, 2, vec![c(1.0, 1.0); 4]).unwrap(),
            vec![CMatrix::zeros(1, 2)],
        )
        .unwrap();
        let phi = RisPhaseConfig::new(vec![1.0, 2.0]).unwrap();
        let h_eff = effective_channel(&set, 0, &phi).unwrap();
        assert_eq!(h_eff, *set.direct(0).unwrap());
    }

    #[test]
    fn scalar_cascade_with_quarter_turn_is_j() {
        let set = ChannelSet::new(
            vec![CMatrix::zeros(1, 1)],
            CMatrix::from_vec(1, 1, vec![c(1.0, 0.0)]).unwrap(),
            vec![CMatrix::from_vec(1, 1, vec![c(1.0, 0.0)]).unwrap()],
        )
        .unwrap();
        let phi = RisPhaseConfig::new(vec![FRAC_PI_2]).unwrap();
        let h_eff = effective_channel(&set, 0, &phi).unwrap();
        let v = h_eff.get(0, 0);
        assert!(v.re.abs() < 1e-12);
        assert!((v.im - 1.0).abs() < 1e-12);
    }

    #[test]
    fn effective_channel_matches_triple_loop_oracle() {
        let set = random_set(21, 4, 1, 3, 1);
        let phi = RisPhaseConfig::new(vec![0.3, 1.7, 5.1]).unwrap();
        let h_eff = effective_channel(&set, 0, &phi).unwrap();

        // Oracle: (re, im) tuple arithmetic, explicit triple loop over
        // receive antenna r, transmit antenna t, surface element m.
        let mul = |(ar, ai): (f64, f64), (br, bi): (f64, f64)| (ar * br - ai * bi, ar * bi + ai * br);
        for r in 0..1 {
            for t in 0..4 {
                let h = set.direct(0).unwrap().get(r, t);
                let mut acc = (h.re, h.im);
                for m in 0..3 {
                    let g = set.ris_user(0).unwrap().get(r, m);
                    let b = set.bs_ris().get(m, t);
                    let theta = (phi.phases()[m].cos(), phi.phases()[m].sin());
                    let term = mul(mul((g.re, g.im), theta), (b.re, b.im));
                    acc = (acc.0 + term.0, acc.1 + term.1);
                }
                let got = h_eff.get(r, t);
                assert!((got.re - acc.0).abs() < 1e-12);
                assert!((got.im - acc.1).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn out_of_range_user_is_rejected() {
        let set = random_set(22, 2, 1, 2, 1);
        let phi = RisPhaseConfig::zeros(2).unwrap();
        assert!(matches!(
            effective_channel(&set, 1, &phi),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn single_user_sinr_has_no_interference_term() {
        let set = random_set(23, 3, 1, 2, 1);
        let phi = RisPhaseConfig::zeros(2).unwrap();
        let f = random_precoder(24, 3, 1, 2.0);
        let noise = 0.125;
        let sinr = sinr_user(&set, 0, &phi, &f, noise).unwrap();
        let h_eff = effective_channel(&set, 0, &phi).unwrap();
        let want = vec_norm_sq(&h_eff.matvec(&f.column(0).unwrap()).unwrap()) / noise;
        assert!((sinr - want).abs() < 1e-12 * want);
    }

    #[test]
    fn null_space_beam_gets_zero_sinr() {
        let set = ChannelSet::new(
            vec![CMatrix::from_vec(1, 2, vec![c(1.0, 0.0), c(0.0, 0.0)]).unwrap()],
            CMatrix::zeros(1, 2),
            vec![CMatrix::zeros(1, 1)],
        )
        .unwrap();
        let phi = RisPhaseConfig::zeros(1).unwrap();
        let f = Precoder::new(
            CMatrix::from_vec(2, 1, vec![c(0.0, 0.0), c(1.0, 0.0)]).unwrap(),
            1.0,
        )
        .unwrap();
        assert_eq!(sinr_user(&set, 0, &phi, &f, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn two_user_scalar_ratio_matches_hand_computation() {
        // Scalar system, surface disconnected: h = 2 for both users,
        // f = [1, 0.5], noise 1 mW. User 0: |2*1|^2 / (|2*0.5|^2 + 1) = 2.
        let h = CMatrix::from_vec(1, 1, vec![c(2.0, 0.0)]).unwrap();
        let set = ChannelSet::new(
            vec![h.clone(), h],
            CMatrix::zeros(1, 1),
            vec![CMatrix::zeros(1, 1), CMatrix::zeros(1, 1)],
        )
        .unwrap();
        let phi = RisPhaseConfig::zeros(1).unwrap();
        let f = Precoder::new(
            CMatrix::from_vec(1, 2, vec![c(1.0, 0.0), c(0.5, 0.0)]).unwrap(),
            2.0,
        )
        .unwrap();
        let sinr0 = sinr_user(&set, 0, &phi, &f, 1.0).unwrap();
        assert!((sinr0 - 2.0).abs() < 1e-12);
        // User 1: |2*0.5|^2 / (|2*1|^2 + 1) = 1/5.
        let sinr1 = sinr_user(&set, 1, &phi, &f, 1.0).unwrap();
        assert!((sinr1 - 0.2).abs() < 1e-12);
    }

    #[test]
    fn spectral_efficiency_reference_points() {
        assert_eq!(se_user(0.0).unwrap(), 0.0);
        assert_eq!(se_user(1.0).unwrap(), 1.0);
        assert_eq!(se_user(3.0).unwrap(), 2.0);
        assert!(matches!(se_user(-0.1), Err(Error::Domain(_))));
        assert!(matches!(se_user(f64::NAN), Err(Error::Domain(_))));
    }

    #[test]
    fn single_user_sum_reduces_to_se_user() {
        let set = random_set(25, 3, 1, 2, 1);
        let phi = RisPhaseConfig::zeros(2).unwrap();
        let f = random_precoder(26, 3, 1, 4.0);
        let total = sum_se(&set, &phi, &f, 0.25).unwrap();
        let single = se_user(sinr_user(&set, 0, &phi, &f, 0.25).unwrap()).unwrap();
        assert_eq!(total, single);
    }

    #[test]
    fn orthogonal_symmetric_users_double_the_single_rate() {
        // Two users on disjoint transmit antennas, no surface: each sees
        // signal 1/sigma^2 and zero interference.
        let set = ChannelSet::new(
            vec![
                CMatrix::from_vec(1, 2, vec![c(1.0, 0.0), c(0.0, 0.0)]).unwrap(),
                CMatrix::from_vec(1, 2, vec![c(0.0, 0.0), c(1.0, 0.0)]).unwrap(),
            ],
            CMatrix::zeros(1, 2),
            vec![CMatrix::zeros(1, 1), CMatrix::zeros(1, 1)],
        )
        .unwrap();
        let phi = RisPhaseConfig::zeros(1).unwrap();
        let f = Precoder::new(
            CMatrix::from_vec(2, 2, vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)])
                .unwrap(),
            2.0,
        )
        .unwrap();
        let noise = 0.5;
        let total = sum_se(&set, &phi, &f, noise).unwrap();
        let single = se_user(1.0 / noise).unwrap();
        assert!((total - 2.0 * single).abs() < 1e-12);
    }

    #[test]
    fn sum_se_matches_independent_recomputation() {
        let set = random_set(27, 4, 1, 3, 3);
        let phi = RisPhaseConfig::new(vec![0.9, 2.2, 4.4]).unwrap();
        let f = random_precoder(28, 4, 3, 10.0);
        let noise = 0.01;
        let got = sum_se(&set, &phi, &f, noise).unwrap();

        // Oracle: tuple arithmetic end to end, no shared helpers.
        let mul = |(ar, ai): (f64, f64), (br, bi): (f64, f64)| (ar * br - ai * bi, ar * bi + ai * br);
        let mut want = 0.0;
        for k in 0..3 {
            let mut powers = [0.0_f64; 3];
            for (u, power) in powers.iter_mut().enumerate() {
                // Received scalar for user k under beam u (N_r = 1).
                let mut acc = (0.0, 0.0);
                for t in 0..4 {
                    let h = set.direct(k).unwrap().get(0, t);
                    let mut entry = (h.re, h.im);
                    for m in 0..3 {
                        let g = set.ris_user(k).unwrap().get(0, m);
                        let b = set.bs_ris().get(m, t);
                        let theta = (phi.phases()[m].cos(), phi.phases()[m].sin());
                        let term = mul(mul((g.re, g.im), theta), (b.re, b.im));
                        entry = (entry.0 + term.0, entry.1 + term.1);
                    }
                    let fv = f.matrix().get(t, u);
                    let prod = mul(entry, (fv.re, fv.im));
                    acc = (acc.0 + prod.0, acc.1 + prod.1);
                }
                *power = acc.0 * acc.0 + acc.1 * acc.1;
            }
            let interference: f64 = powers
                .iter()
                .enumerate()
                .filter(|(u, _)| *u != k)
                .map(|(_, p)| p)
                .sum();
            want += (1.0 + powers[k] / (interference + noise)).log2();
        }
        assert!((got - want).abs() < 1e-10 * want.max(1.0), "{got} vs {want}");
    }

    #[test]
    fn per_column_phase_rotation_leaves_rates_unchanged() {
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        for rep in 0..20 {
            let set = random_set(100 + rep, 3, 1, 2, 3);
            let phi = RisPhaseConfig::zeros(2).unwrap();
            let f = random_precoder(200 + rep, 3, 3, 5.0);
            let noise = 0.05;
            let before: Vec<f64> = (0..3)
                .map(|k| se_user(sinr_user(&set, k, &phi, &f, noise).unwrap()).unwrap())
                .collect();

            let u = rng.random_range(0..3);
            let psi = rng.random_range(0.0..TAU);
            let rot = Complex64::from_polar(1.0, psi);
            let mut m = f.matrix().clone();
            for r in 0..m.rows() {
                let v = m.get(r, u) * rot;
                m.set(r, u, v);
            }
            let rotated = Precoder::new(m, f.p_max()).unwrap();
            for (k, b) in before.iter().enumerate() {
                let after =
                    se_user(sinr_user(&set, k, &phi, &rotated, noise).unwrap()).unwrap();
                assert!((after - b).abs() < 1e-10, "user {k}: {after} vs {b}");
            }
        }
    }

    #[test]
    fn uniform_scaling_strictly_raises_every_sinr() {
        for rep in 0..10 {
            let set = random_set(300 + rep, 3, 1, 2, 3);
            let phi = RisPhaseConfig::zeros(2).unwrap();
            let f = random_precoder(400 + rep, 3, 3, 5.0);
            let noise = 0.05;
            let c_scale = 1.3;
            let bigger = Precoder::new(
                f.matrix().scale(c(c_scale, 0.0)),
                f.p_max() * c_scale * c_scale + 1.0,
            )
            .unwrap();
            for k in 0..3 {
                let a = sinr_user(&set, k, &phi, &f, noise).unwrap();
                let b = sinr_user(&set, k, &phi, &bigger, noise).unwrap();
                assert!(b > a, "user {k}: {b} <= {a}");
            }
        }
    }

    #[test]
    fn common_phase_offset_is_invisible_without_direct_paths() {
        let mut rng = ChaCha12Rng::seed_from_u64(32);
        for rep in 0..10 {
            let base = random_set(500 + rep, 3, 1, 4, 2);
            // Zero out the direct channels, keep the cascade.
            let set = ChannelSet::new(
                vec![CMatrix::zeros(1, 3), CMatrix::zeros(1, 3)],
                base.bs_ris().clone(),
                vec![
                    base.ris_user(0).unwrap().clone(),
                    base.ris_user(1).unwrap().clone(),
                ],
            )
            .unwrap();
            let phases: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..TAU)).collect();
            let phi = RisPhaseConfig::new(phases.clone()).unwrap();
            let f = random_precoder(600 + rep, 3, 2, 3.0);
            let noise = 0.1;
            let before = sum_se(&set, &phi, &f, noise).unwrap();

            let delta = rng.random_range(0.0..TAU);
            let shifted = RisPhaseConfig::wrapped(phases.iter().map(|p| p + delta).collect())
                .unwrap();
            let after = sum_se(&set, &shifted, &f, noise).unwrap();
            assert!((after - before).abs() < 1e-10, "{after} vs {before}");
        }
    }

    #[test]
    fn cascade_is_linear_in_reflection_coefficients() {
        let mut rng = ChaCha12Rng::seed_from_u64(33);
        for rep in 0..10 {
            let set = random_set(700 + rep, 3, 2, 4, 1);
            let mut draw_theta = || -> Vec<Complex64> {
                (0..4)
                    .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                    .collect()
            };
            let t1 = draw_theta();
            let t2 = draw_theta();
            let a = c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let b = c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let combo: Vec<Complex64> = t1
                .iter()
                .zip(&t2)
                .map(|(x, y)| a * x + b * y)
                .collect();

            let h = set.direct(0).unwrap();
            let r1 = effective_channel_theta(&set, 0, &t1).unwrap();
            let r2 = effective_channel_theta(&set, 0, &t2).unwrap();
            let rc = effective_channel_theta(&set, 0, &combo).unwrap();
            for r in 0..2 {
                for t in 0..3 {
                    let lhs = rc.get(r, t) - h.get(r, t);
                    let rhs = a * (r1.get(r, t) - h.get(r, t)) + b * (r2.get(r, t) - h.get(r, t));
                    assert!((lhs - rhs).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn full_budget_rates_grow_with_the_budget() {
        for rep in 0..5 {
            let set = random_set(800 + rep, 3, 1, 2, 2);
            let phi = RisPhaseConfig::zeros(2).unwrap();
            let direction = random_precoder(900 + rep, 3, 2, 1.0);
            let noise = 0.2;
            let mut last = f64::NEG_INFINITY;
            for p_max in [0.5, 1.0, 4.0, 16.0, 256.0] {
                let f = Precoder::scaled_to_budget(direction.matrix(), p_max).unwrap();
                let rate = sum_se(&set, &phi, &f, noise).unwrap();
                assert!(rate > last, "budget {p_max}: {rate} <= {last}");
                last = rate;
            }
        }
    }
}
