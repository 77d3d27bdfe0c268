//! Domain types for the multi-user link: channel collections, surface phase
//! configurations, transmit precoders, and scenario settings.

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::channel::cmatrix::CMatrix;
use crate::error::{Error, Result};

/// One realization of every link in the system: per-user direct channels
/// (N_r x N_t), the shared base-to-surface channel (M x N_t), and per-user
/// surface-to-user channels (N_r x M).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    direct: Vec<CMatrix>,
    bs_ris: CMatrix,
    ris_user: Vec<CMatrix>,
}

impl ChannelSet {
    pub fn new(direct: Vec<CMatrix>, bs_ris: CMatrix, ris_user: Vec<CMatrix>) -> Result<Self> {
        if direct.is_empty() {
            return Err(Error::Dimension("a channel set needs at least one user".into()));
        }
        if ris_user.len() != direct.len() {
            return Err(Error::Dimension(format!(
                "{} direct channels but {} surface-user channels",
                direct.len(),
                ris_user.len()
            )));
        }
        let n_r = direct[0].rows();
        let n_t = direct[0].cols();
        let m = bs_ris.rows();
        if bs_ris.cols() != n_t {
            return Err(Error::Dimension(format!(
                "base-surface channel has {} transmit columns, direct channels have {n_t}",
                bs_ris.cols()
            )));
        }
        for (k, h) in direct.iter().enumerate() {
            if h.rows() != n_r || h.cols() != n_t {
                return Err(Error::Dimension(format!(
                    "direct channel {k} is {}x{}, expected {n_r}x{n_t}",
                    h.rows(),
                    h.cols()
                )));
            }
        }
        for (k, g) in ris_user.iter().enumerate() {
            if g.rows() != n_r || g.cols() != m {
                return Err(Error::Dimension(format!(
                    "surface-user channel {k} is {}x{}, expected {n_r}x{m}",
                    g.rows(),
                    g.cols()
                )));
            }
        }
        Ok(Self {
            direct,
            bs_ris,
            ris_user,
        })
    }

    pub fn users(&self) -> usize {
        self.direct.len()
    }

    pub fn n_t(&self) -> usize {
        self.direct[0].cols()
    }

    pub fn n_r(&self) -> usize {
        self.direct[0].rows()
    }

    pub fn ris_elements(&self) -> usize {
        self.bs_ris.rows()
    }

    pub fn direct(&self, k: usize) -> Result<&CMatrix> {
        self.direct
            .get(k)
            .ok_or_else(|| Error::Dimension(format!("user index {k} out of range")))
    }

    pub fn bs_ris(&self) -> &CMatrix {
        &self.bs_ris
    }

    pub fn ris_user(&self, k: usize) -> Result<&CMatrix> {
        self.ris_user
            .get(k)
            .ok_or_else(|| Error::Dimension(format!("user index {k} out of range")))
    }

    /// Real/imaginary interleaved flattening in the canonical order
    /// `direct[0..K], bs_ris, ris_user[0..K]`, each matrix row-major. This is
    /// both the serialization layout and the raw observation layout.
    pub fn flatten_interleaved(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.complex_entry_count());
        let mut push = |m: &CMatrix| {
            for z in m.data() {
                out.push(z.re);
                out.push(z.im);
            }
        };
        for h in &self.direct {
            push(h);
        }
        push(&self.bs_ris);
        for g in &self.ris_user {
            push(g);
        }
        out
    }

    pub fn complex_entry_count(&self) -> usize {
        let k = self.users();
        k * self.n_r() * self.n_t()
            + self.ris_elements() * self.n_t()
            + k * self.n_r() * self.ris_elements()
    }
}

/// Per-element phase shifts of the reflecting surface, in radians within
/// `[0, 2pi)`. The reflection coefficients `e^{j phi_m}` all have unit
/// modulus by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct RisPhaseConfig {
    phases: Vec<f64>,
}

impl RisPhaseConfig {
    pub fn new(phases: Vec<f64>) -> Result<Self> {
        if phases.is_empty() {
            return Err(Error::Dimension("a phase config needs at least one element".into()));
        }
        for (m, p) in phases.iter().enumerate() {
            if !p.is_finite() || !(0.0..TAU).contains(p) {
                return Err(Error::Domain(format!(
                    "phase {m} = {p} lies outside [0, 2pi)"
                )));
            }
        }
        Ok(Self { phases })
    }

    /// Wraps arbitrary finite angles into `[0, 2pi)`.
    pub fn wrapped(phases: Vec<f64>) -> Result<Self> {
        let wrapped = phases
            .into_iter()
            .map(|p| {
                if !p.is_finite() {
                    return Err(Error::Domain(format!("non-finite phase {p}")));
                }
                let mut w = p.rem_euclid(TAU);
                // rem_euclid can return exactly TAU when p is a tiny negative.
                if w >= TAU {
                    w = 0.0;
                }
                Ok(w)
            })
            .collect::<Result<Vec<f64>>>()?;
        Self::new(wrapped)
    }

    pub fn zeros(m: usize) -> Result<Self> {
        Self::new(vec![0.0; m])
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    /// Unit-modulus reflection coefficients `e^{j phi_m}`.
    pub fn theta(&self) -> Vec<Complex64> {
        self.phases
            .iter()
            .map(|&p| Complex64::from_polar(1.0, p))
            .collect()
    }
}

/// Transmit precoder: column `u` serves user `u`. The total transmit power
/// `|F|_F^2` must stay within the linear-milliwatt budget.
#[derive(Debug, Clone, PartialEq)]
pub struct Precoder {
    f: CMatrix,
    p_max: f64,
}

/// Slack on the power budget check, absorbing rounding in `|F|_F^2`.
pub const POWER_BUDGET_SLACK: f64 = 1e-9;

impl Precoder {
    pub fn new(f: CMatrix, p_max: f64) -> Result<Self> {
        if !(p_max.is_finite() && p_max > 0.0) {
            return Err(Error::Domain(format!(
                "power budget must be positive and finite, got {p_max}"
            )));
        }
        let used = f.frobenius_sq();
        if used > p_max + POWER_BUDGET_SLACK {
            return Err(Error::Domain(format!(
                "precoder uses {used} mW, budget is {p_max} mW"
            )));
        }
        Ok(Self { f, p_max })
    }

    /// Rescales `f` so the budget holds with equality. Fails on an all-zero
    /// matrix, which has no direction to scale.
    pub fn scaled_to_budget(f: &CMatrix, p_max: f64) -> Result<Self> {
        if !(p_max.is_finite() && p_max > 0.0) {
            return Err(Error::Domain(format!(
                "power budget must be positive and finite, got {p_max}"
            )));
        }
        let used = f.frobenius_sq();
        if used <= 0.0 {
            return Err(Error::Domain(
                "cannot scale an all-zero precoder to the power budget".into(),
            ));
        }
        let scale = (p_max / used).sqrt();
        Self::new(f.scale(Complex64::new(scale, 0.0)), p_max)
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.f
    }

    pub fn p_max(&self) -> f64 {
        self.p_max
    }

    pub fn users(&self) -> usize {
        self.f.cols()
    }

    pub fn column(&self, u: usize) -> Result<Vec<Complex64>> {
        if u >= self.f.cols() {
            return Err(Error::Dimension(format!("user index {u} out of range")));
        }
        Ok(self.f.column(u))
    }
}

/// Synthetic channel statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelModel {
    /// Every entry i.i.d. circularly symmetric complex normal, unit variance.
    Rayleigh,
    /// Sum of `paths` rank-one plane-wave terms over uniform linear arrays
    /// with half-wavelength spacing, plus an optional line-of-sight term
    /// weighted by the Rician factor (in dB; `-inf` disables it, `+inf`
    /// keeps only it).
    Geometric { paths: usize, rician_k_db: f64 },
}

impl ChannelModel {
    /// Geometric model with no line-of-sight component.
    pub fn geometric(paths: usize) -> Self {
        Self::Geometric {
            paths,
            rician_k_db: f64::NEG_INFINITY,
        }
    }
}

/// Scenario dimensions and power figures. Powers live in dBm here and are
/// converted to linear milliwatts at the point of use.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub n_t: usize,
    pub n_r: usize,
    pub ris_elements: usize,
    pub users: usize,
    pub p_max_dbm: f64,
    pub noise_dbm: f64,
    pub model: ChannelModel,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_t: 32,
            n_r: 1,
            ris_elements: 32,
            users: 10,
            p_max_dbm: 35.0,
            noise_dbm: -90.0,
            model: ChannelModel::Rayleigh,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_t", self.n_t),
            ("n_r", self.n_r),
            ("ris_elements", self.ris_elements),
            ("users", self.users),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if !self.p_max_dbm.is_finite() {
            return Err(Error::Config(format!(
                "p_max_dbm must be finite, got {}",
                self.p_max_dbm
            )));
        }
        if !self.noise_dbm.is_finite() {
            return Err(Error::Config(format!(
                "noise_dbm must be finite, got {}",
                self.noise_dbm
            )));
        }
        if let ChannelModel::Geometric { paths, rician_k_db } = self.model {
            if paths == 0 {
                return Err(Error::Config("geometric model needs at least one path".into()));
            }
            if rician_k_db.is_nan() {
                return Err(Error::Config("rician factor must not be NaN".into()));
            }
        }
        Ok(())
    }

    pub fn p_max_mw(&self) -> f64 {
        crate::channel::physics::dbm_to_mw(self.p_max_dbm)
    }

    pub fn noise_mw(&self) -> f64 {
        crate::channel::physics::dbm_to_mw(self.noise_dbm)
    }
}
