//! Synthetic channel generation.
//!
//! `ChannelProcess` models block fading: for the geometric model the path
//! geometry (departure/arrival angles) is fixed when the process is created
//! and only the path gains are redrawn per draw; the Rayleigh model redraws
//! every entry. Draw order is fixed (`direct[0..K]`, `bs_ris`,
//! `ris_user[0..K]`), so a seed pins the whole sequence bit for bit.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::channel::cmatrix::CMatrix;
use crate::channel::types::{ChannelModel, ChannelSet, ScenarioConfig};
use crate::error::Result;

/// Angles of one rank-one propagation path: (departure, arrival).
#[derive(Debug, Clone, Copy)]
struct PathAngles {
    aod: f64,
    aoa: f64,
}

/// Fixed geometry of one matrix in the set: optional line-of-sight path plus
/// the scattered paths.
#[derive(Debug, Clone)]
struct MatrixGeometry {
    los: PathAngles,
    paths: Vec<PathAngles>,
}

#[derive(Debug, Clone)]
pub struct ChannelProcess {
    cfg: ScenarioConfig,
    rng: ChaCha12Rng,
    /// One geometry per matrix in draw order; empty for the Rayleigh model.
    geometry: Vec<MatrixGeometry>,
}

impl ChannelProcess {
    pub fn new(cfg: &ScenarioConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let geometry = match cfg.model {
            ChannelModel::Rayleigh => Vec::new(),
            ChannelModel::Geometric { paths, .. } => {
                let matrices = 2 * cfg.users + 1;
                (0..matrices)
                    .map(|_| MatrixGeometry {
                        los: draw_angles(&mut rng),
                        paths: (0..paths).map(|_| draw_angles(&mut rng)).collect(),
                    })
                    .collect()
            }
        };
        Ok(Self {
            cfg: cfg.clone(),
            rng,
            geometry,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    /// Draws the next fading block.
    pub fn draw(&mut self) -> ChannelSet {
        let (k, n_t, n_r, m) = (
            self.cfg.users,
            self.cfg.n_t,
            self.cfg.n_r,
            self.cfg.ris_elements,
        );
        let mut geo = self.geometry.iter();
        let mut matrix = |rows: usize, cols: usize, rng: &mut ChaCha12Rng| match self.cfg.model {
            ChannelModel::Rayleigh => rayleigh_matrix(rows, cols, rng),
            ChannelModel::Geometric { rician_k_db, .. } => {
                geometric_matrix(rows, cols, geo.next().expect("geometry per matrix"), rician_k_db, rng)
            }
        };
        let direct = (0..k).map(|_| matrix(n_r, n_t, &mut self.rng)).collect();
        let bs_ris = matrix(m, n_t, &mut self.rng);
        let ris_user = (0..k).map(|_| matrix(n_r, m, &mut self.rng)).collect();
        ChannelSet::new(direct, bs_ris, ris_user).expect("generated shapes are consistent")
    }
}

/// One-shot draw: a fresh process advanced a single block.
pub fn generate_channels(cfg: &ScenarioConfig, seed: u64) -> Result<ChannelSet> {
    Ok(ChannelProcess::new(cfg, seed)?.draw())
}

fn draw_angles<R: Rng>(rng: &mut R) -> PathAngles {
    use std::f64::consts::FRAC_PI_2;
    PathAngles {
        aod: rng.random_range(-FRAC_PI_2..FRAC_PI_2),
        aoa: rng.random_range(-FRAC_PI_2..FRAC_PI_2),
    }
}

/// Circularly symmetric complex normal with variance `var`.
fn complex_normal<R: Rng>(rng: &mut R, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(s * re, s * im)
}

fn rayleigh_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    let data = (0..rows * cols).map(|_| complex_normal(rng, 1.0)).collect();
    CMatrix::from_vec(rows, cols, data).expect("finite draws")
}

/// Uniform linear array response, half-wavelength spacing:
/// `a(angle)[i] = e^{-j pi i sin(angle)}`.
fn steering(n: usize, angle: f64) -> Vec<Complex64> {
    use std::f64::consts::PI;
    let s = angle.sin();
    (0..n)
        .map(|i| Complex64::from_polar(1.0, -PI * i as f64 * s))
        .collect()
}

/// Adds `weight * a_r(aoa) a_t(aod)^H / sqrt(rows * cols)` into `out`.
fn add_path(out: &mut CMatrix, angles: PathAngles, weight: Complex64) {
    let rows = out.rows();
    let cols = out.cols();
    let a_r = steering(rows, angles.aoa);
    let a_t = steering(cols, angles.aod);
    let norm = 1.0 / ((rows * cols) as f64).sqrt();
    for r in 0..rows {
        for c in 0..cols {
            let v = out.get(r, c) + weight * a_r[r] * a_t[c].conj() * norm;
            out.set(r, c, v);
        }
    }
}

fn geometric_matrix<R: Rng>(
    rows: usize,
    cols: usize,
    geo: &MatrixGeometry,
    rician_k_db: f64,
    rng: &mut R,
) -> CMatrix {
    // Rician split: kappa/(1+kappa) of the power on the line-of-sight path,
    // 1/(1+kappa) on the scattered sum. The infinities select one side.
    let (w_los, w_nlos) = if rician_k_db == f64::INFINITY {
        (1.0, 0.0)
    } else if rician_k_db == f64::NEG_INFINITY {
        (0.0, 1.0)
    } else {
        let kappa = 10f64.powf(rician_k_db / 10.0);
        ((kappa / (1.0 + kappa)).sqrt(), (1.0 / (1.0 + kappa)).sqrt())
    };

    let mut out = CMatrix::zeros(rows, cols);
    if w_los > 0.0 {
        add_path(&mut out, geo.los, Complex64::new(w_los, 0.0));
    }
    // Gains are drawn even when w_nlos is zero so the stream layout does not
    // depend on the Rician factor.
    let var = 1.0 / geo.paths.len() as f64;
    for &angles in &geo.paths {
        let gain = complex_normal(rng, var);
        if w_nlos > 0.0 {
            add_path(&mut out, angles, gain * w_nlos);
        }
    }
    out
}
