//! Decision-process wrapper around the channel simulator: flat actions in
//! `[-1, 1]` decode into a full-power precoder and unit-modulus phase
//! shifts, the reward is the resulting sum spectral efficiency, and each
//! step redraws small-scale fading while the scatter geometry stays fixed.

use crate::channel::cmatrix::CMatrix;
use crate::channel::generate::ChannelProcess;
use crate::channel::physics::sum_se;
use crate::channel::types::{ChannelSet, Precoder, RisPhaseConfig, ScenarioConfig};
use crate::error::{Error, Result};
use crate::lwm::encoder::LwmModel;
use crate::lwm::finetune::embed_state;
use num_complex::Complex64;
use std::f64::consts::PI;

/// How observations are built from a channel set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateMode {
    /// Encoder CLS rows, `(2K + 1) * D` values.
    Embedded,
    /// Interleaved real/imaginary parts of every matrix.
    Raw,
}

#[derive(Debug, Clone)]
pub struct EnvConfig {
    pub scenario: ScenarioConfig,
    pub steps_per_episode: usize,
    pub state_mode: StateMode,
    /// Weight on constraint violations; inert because decoding enforces the
    /// constraints, but kept in the reward definition.
    pub penalty_weight: f64,
}

impl EnvConfig {
    pub fn new(scenario: ScenarioConfig, state_mode: StateMode) -> Self {
        Self {
            scenario,
            steps_per_episode: 100,
            state_mode,
            penalty_weight: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.steps_per_episode == 0 {
            return Err(Error::Config("steps_per_episode must be at least 1".into()));
        }
        if !(self.penalty_weight.is_finite() && self.penalty_weight >= 0.0) {
            return Err(Error::Config(format!(
                "penalty weight must be a nonnegative real, got {}",
                self.penalty_weight
            )));
        }
        Ok(())
    }
}

/// A flat control vector: `2 * N_t * K` precoder values (re/im interleaved,
/// column-major by user) followed by `M` phase controls, each in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    raw: Vec<f64>,
}

/// Expected action length for a scenario.
pub fn action_len(cfg: &ScenarioConfig) -> usize {
    2 * cfg.n_t * cfg.users + cfg.ris_elements
}

impl Action {
    /// Clamps every entry into `[-1, 1]`; the length must match exactly.
    pub fn new(mut raw: Vec<f64>, expected_len: usize) -> Result<Self> {
        if raw.len() != expected_len {
            return Err(Error::Dimension(format!(
                "action has {} entries, expected {expected_len}",
                raw.len()
            )));
        }
        for v in &mut raw {
            if !v.is_finite() {
                return Err(Error::Domain(format!("action entry is not finite: {v}")));
            }
            *v = v.clamp(-1.0, 1.0);
        }
        Ok(Self { raw })
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }
}

/// Turns an action into a feasible control pair: the precoder block is
/// rescaled to use the full power budget (an all-zero block falls back to a
/// uniform equal-gain precoder) and each phase control `a` maps affinely to
/// `(a + 1) * pi`, wrapped into `[0, 2pi)`.
pub fn decode_action(a: &Action, cfg: &ScenarioConfig) -> Result<(Precoder, RisPhaseConfig)> {
    let expected = action_len(cfg);
    if a.len() != expected {
        return Err(Error::Dimension(format!(
            "action has {} entries, scenario needs {expected}",
            a.len()
        )));
    }
    let (n_t, k, m) = (cfg.n_t, cfg.users, cfg.ris_elements);
    let p_max = cfg.p_max_mw();

    let f_block = &a.raw()[..2 * n_t * k];
    let precoder = if f_block.iter().all(|&v| v == 0.0) {
        // Degenerate input: spread the budget uniformly.
        let gain = (p_max / (n_t * k) as f64).sqrt();
        let f = CMatrix::from_vec(n_t, k, vec![Complex64::new(gain, 0.0); n_t * k])?;
        Precoder::new(f, p_max)?
    } else {
        let mut f = CMatrix::zeros(n_t, k);
        for u in 0..k {
            for t in 0..n_t {
                let base = 2 * (u * n_t + t);
                f.set(t, u, Complex64::new(f_block[base], f_block[base + 1]));
            }
        }
        Precoder::scaled_to_budget(&f, p_max)?
    };

    let phases: Vec<f64> = a.raw()[2 * n_t * k..]
        .iter()
        .map(|&v| (v + 1.0) * PI)
        .collect();
    let phi = if m == 0 {
        RisPhaseConfig::zeros(cfg.ris_elements)?
    } else {
        RisPhaseConfig::wrapped(phases)?
    };
    Ok((precoder, phi))
}

/// Scales a vector to unit root-mean-square; near-zero vectors pass through.
pub fn normalize_state(v: &[f64]) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    let rms = (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
    let denom = rms.max(1e-12);
    v.iter().map(|x| x / denom).collect()
}

/// One step's outcome. The reward is always `sum_se - penalty`.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub sum_se: f64,
    pub penalty: f64,
    pub constraint_violated: bool,
}

pub struct RisEnv {
    cfg: EnvConfig,
    embedder: Option<LwmModel>,
    process: Option<ChannelProcess>,
    current: Option<ChannelSet>,
    steps_taken: usize,
}

impl RisEnv {
    /// Embedded mode needs an encoder whose token length divides every
    /// matrix shape of the scenario; raw mode takes no model.
    pub fn new(cfg: EnvConfig, embedder: Option<LwmModel>) -> Result<Self> {
        cfg.validate()?;
        match cfg.state_mode {
            StateMode::Embedded => {
                let model = embedder
                    .as_ref()
                    .ok_or_else(|| Error::Config("embedded state mode needs an encoder".into()))?;
                let s = &cfg.scenario;
                for (x, y) in [(s.n_r, s.n_t), (s.ris_elements, s.n_t), (s.n_r, s.ris_elements)] {
                    model.config().patch_count(x, y)?;
                }
            }
            StateMode::Raw => {
                if embedder.is_some() {
                    return Err(Error::Config(
                        "raw state mode does not take an encoder".into(),
                    ));
                }
            }
        }
        Ok(Self {
            cfg,
            embedder,
            process: None,
            current: None,
            steps_taken: 0,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn action_len(&self) -> usize {
        action_len(&self.cfg.scenario)
    }

    /// Observation length under the configured state mode.
    pub fn state_len(&self) -> usize {
        let s = &self.cfg.scenario;
        match self.cfg.state_mode {
            StateMode::Raw => 2 * (s.users * s.n_r * s.n_t
                + s.ris_elements * s.n_t
                + s.users * s.n_r * s.ris_elements),
            StateMode::Embedded => {
                let d = self
                    .embedder
                    .as_ref()
                    .map(|m| m.config().dim)
                    .unwrap_or_default();
                (2 * s.users + 1) * d
            }
        }
    }

    /// Starts a fresh episode from a seeded channel process and returns the
    /// first observation.
    pub fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        let mut process = ChannelProcess::new(&self.cfg.scenario, seed)?;
        self.current = Some(process.draw());
        self.process = Some(process);
        self.steps_taken = 0;
        self.observe()
    }

    /// Starts an episode on one fixed channel set; every step keeps it. The
    /// dimensions must match the scenario.
    pub fn reset_with(&mut self, ch: ChannelSet) -> Result<Vec<f64>> {
        let s = &self.cfg.scenario;
        if ch.users() != s.users
            || ch.n_t() != s.n_t
            || ch.n_r() != s.n_r
            || ch.ris_elements() != s.ris_elements
        {
            return Err(Error::Dimension(format!(
                "channel set is K={} {}x{} with {} elements, scenario wants K={} {}x{} with {}",
                ch.users(),
                ch.n_r(),
                ch.n_t(),
                ch.ris_elements(),
                s.users,
                s.n_r,
                s.n_t,
                s.ris_elements
            )));
        }
        self.process = None;
        self.current = Some(ch);
        self.steps_taken = 0;
        self.observe()
    }

    /// The current channel set, when an episode is active.
    pub fn channels(&self) -> Option<&ChannelSet> {
        self.current.as_ref()
    }

    fn observe(&self) -> Result<Vec<f64>> {
        let ch = self
            .current
            .as_ref()
            .ok_or_else(|| Error::State("environment must be reset before observing".into()))?;
        let v = match self.cfg.state_mode {
            StateMode::Raw => ch.flatten_interleaved(),
            StateMode::Embedded => {
                let model = self
                    .embedder
                    .as_ref()
                    .expect("embedded mode always holds an encoder");
                embed_state(ch, model)?
            }
        };
        Ok(normalize_state(&v))
    }

    /// Applies an action to the current channels, pays the sum spectral
    /// efficiency as reward, then advances the fading process.
    pub fn step(&mut self, a: &Action) -> Result<StepResult> {
        let ch = self
            .current
            .as_ref()
            .ok_or_else(|| Error::State("environment must be reset before stepping".into()))?;
        if self.steps_taken >= self.cfg.steps_per_episode {
            return Err(Error::State(format!(
                "episode finished after {} steps; reset to continue",
                self.cfg.steps_per_episode
            )));
        }
        let (precoder, phi) = decode_action(a, &self.cfg.scenario)?;
        let se = sum_se(ch, &phi, &precoder, self.cfg.scenario.noise_mw())?;
        // Decoding already enforces the power and unit-modulus constraints,
        // so the violation amount is identically zero.
        let penalty = self.cfg.penalty_weight * 0.0;
        let reward = se - penalty;

        self.steps_taken += 1;
        if let Some(process) = self.process.as_mut() {
            self.current = Some(process.draw());
        }
        let next_state = self.observe()?;
        Ok(StepResult {
            reward,
            next_state,
            sum_se: se,
            penalty,
            constraint_violated: false,
        })
    }

    pub fn steps_taken(&self) -> usize {
        self.steps_taken
    }
}
