//! Deterministic policy-gradient agent: a tanh-bounded actor, a scalar
//! critic on concatenated state-action input, target copies of both, and
//! Adam updates with soft target tracking.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::ddpg::buffer::Transition;
use crate::error::{Error, Result};
use crate::nn::checkpoint::{load_checkpoint, save_checkpoint};
use crate::nn::dense::Activation;
use crate::nn::mlp::{Mlp, MlpGrads};
use crate::nn::optim::{Adam, AdamConfig};
use crate::nn::tensor::Tensor2;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct AgentConfig {
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub gamma: f64,
    pub batch_size: usize,
    pub tau: f64,
    pub hidden: (usize, usize),
    pub buffer_capacity: usize,
    pub noise_std: f64,
    pub episodes: usize,
    pub steps_per_episode: usize,
    /// Gradient step cadence in environment steps once the buffer is ready.
    pub update_every: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            gamma: 0.99,
            batch_size: 64,
            tau: 0.005,
            hidden: (64, 64),
            buffer_capacity: 100_000,
            noise_std: 0.1,
            episodes: 2_000,
            steps_per_episode: 100,
            update_every: 1,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config(format!(
                "tau must lie in (0, 1], got {}",
                self.tau
            )));
        }
        if !(self.gamma >= 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!(
                "gamma must lie in [0, 1], got {}",
                self.gamma
            )));
        }
        for (name, lr) in [("actor_lr", self.actor_lr), ("critic_lr", self.critic_lr)] {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {lr}")));
            }
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::Config(format!(
                "noise std must be nonnegative, got {}",
                self.noise_std
            )));
        }
        if self.batch_size == 0
            || self.buffer_capacity == 0
            || self.steps_per_episode == 0
            || self.update_every == 0
            || self.hidden.0 == 0
            || self.hidden.1 == 0
        {
            return Err(Error::Config(
                "batch size, buffer capacity, steps, update cadence, and hidden widths must all be positive".into(),
            ));
        }
        Ok(())
    }
}

pub struct Agent {
    cfg: AgentConfig,
    state_dim: usize,
    action_dim: usize,
    actor: Mlp,
    critic: Mlp,
    actor_target: Mlp,
    critic_target: Mlp,
    actor_opt: Adam,
    critic_opt: Adam,
}

impl Agent {
    /// Targets start as exact copies of the online networks.
    pub fn new<R: Rng>(
        state_dim: usize,
        action_dim: usize,
        cfg: AgentConfig,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        if state_dim == 0 || action_dim == 0 {
            return Err(Error::Config(
                "state and action dimensions must be positive".into(),
            ));
        }
        let (h1, h2) = cfg.hidden;
        let actor = Mlp::init(
            &[state_dim, h1, h2, action_dim],
            Activation::Relu,
            Activation::Tanh,
            rng,
        )?;
        let critic = Mlp::init(
            &[state_dim + action_dim, h1, h2, 1],
            Activation::Relu,
            Activation::Identity,
            rng,
        )?;
        let actor_target = actor.clone();
        let critic_target = critic.clone();
        let actor_opt = Adam::new(AdamConfig {
            lr: cfg.actor_lr,
            ..AdamConfig::default()
        })?;
        let critic_opt = Adam::new(AdamConfig {
            lr: cfg.critic_lr,
            ..AdamConfig::default()
        })?;
        Ok(Self {
            cfg,
            state_dim,
            action_dim,
            actor,
            critic,
            actor_target,
            critic_target,
            actor_opt,
            critic_opt,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn actor(&self) -> &Mlp {
        &self.actor
    }

    pub fn critic(&self) -> &Mlp {
        &self.critic
    }

    pub fn actor_target(&self) -> &Mlp {
        &self.actor_target
    }

    pub fn critic_target(&self) -> &Mlp {
        &self.critic_target
    }

    pub fn actor_mut(&mut self) -> &mut Mlp {
        &mut self.actor
    }

    pub fn critic_mut(&mut self) -> &mut Mlp {
        &mut self.critic
    }

    /// Deterministic policy output in `(-1, 1)^action_dim`.
    pub fn actor_forward(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.actor.apply(s)
    }

    /// Scalar action value for a state-action pair.
    pub fn critic_forward(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        if s.len() != self.state_dim || a.len() != self.action_dim {
            return Err(Error::Dimension(format!(
                "critic got state {} action {}, wants {} and {}",
                s.len(),
                a.len(),
                self.state_dim,
                self.action_dim
            )));
        }
        let mut x = s.to_vec();
        x.extend_from_slice(a);
        Ok(self.critic.apply(&x)?[0])
    }

    /// Policy output plus clamped i.i.d. Gaussian exploration noise.
    pub fn select_action<R: Rng>(
        &self,
        s: &[f64],
        noise_std: f64,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let mut a = self.actor.apply(s)?;
        if noise_std > 0.0 {
            for v in &mut a {
                let n: f64 = rng.sample(StandardNormal);
                *v = (*v + noise_std * n).clamp(-1.0, 1.0);
            }
        }
        Ok(a)
    }

    /// One descent step on the mean squared Bellman error against the
    /// target networks; returns the pre-step loss.
    pub fn critic_update(&mut self, batch: &[&Transition]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Domain("critic update on an empty batch".into()));
        }
        let inv = 1.0 / batch.len() as f64;
        let mut acc = MlpGrads::zeros_like(&self.critic);
        let mut loss = 0.0;
        for t in batch {
            let a_next = self.actor_target.apply(&t.s_next)?;
            let mut x_next = t.s_next.clone();
            x_next.extend(a_next);
            let q_next = self.critic_target.apply(&x_next)?[0];
            let y = t.r + self.cfg.gamma * q_next;

            let mut x = t.s.clone();
            x.extend_from_slice(&t.a);
            let q = self.critic.forward(&x)?[0];
            let diff = q - y;
            loss += inv * diff * diff;
            let g = self.critic.backward(&[2.0 * inv * diff])?;
            acc.add_scaled(&g, 1.0);
        }
        if !loss.is_finite() {
            return Err(Error::Numeric(format!(
                "critic loss is no longer finite ({loss})"
            )));
        }
        let gs = acc.slices();
        let mut ps = self.critic.param_slices_mut();
        self.critic_opt.step(&mut ps, &gs)?;
        Ok(loss)
    }

    /// One ascent step on the mean critic value of the actor's own actions,
    /// differentiating through a frozen critic; returns the pre-step mean
    /// value.
    pub fn actor_update(&mut self, batch: &[&Transition]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Domain("actor update on an empty batch".into()));
        }
        let inv = 1.0 / batch.len() as f64;
        let mut acc = MlpGrads::zeros_like(&self.actor);
        let mut objective = 0.0;
        for t in batch {
            let a = self.actor.forward(&t.s)?;
            let mut x = t.s.clone();
            x.extend(a);
            let q = self.critic.forward(&x)?[0];
            objective += inv * q;
            // Ascent on the objective is descent on its negation.
            let cg = self.critic.backward(&[-inv])?;
            let ag = self.actor.backward(&cg.input[t.s.len()..])?;
            acc.add_scaled(&ag, 1.0);
        }
        if !objective.is_finite() {
            return Err(Error::Numeric(format!(
                "actor objective is no longer finite ({objective})"
            )));
        }
        let gs = acc.slices();
        let mut ps = self.actor.param_slices_mut();
        self.actor_opt.step(&mut ps, &gs)?;
        Ok(objective)
    }

    /// Moves both targets a step of `tau` toward the online networks.
    pub fn soft_update_targets(&mut self) -> Result<()> {
        self.actor_target.soft_update_from(&self.actor, self.cfg.tau)?;
        self.critic_target
            .soft_update_from(&self.critic, self.cfg.tau)
    }

    /// Writes all four networks into one checkpoint file. Optimizer moments
    /// are not persisted; a reloaded agent restarts them cold.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut owned: Vec<(String, Tensor2)> = Vec::new();
        self.actor.collect_tensors("actor", &mut owned);
        self.critic.collect_tensors("critic", &mut owned);
        self.actor_target.collect_tensors("actor_target", &mut owned);
        self.critic_target.collect_tensors("critic_target", &mut owned);
        let refs: Vec<(&str, &Tensor2)> = owned.iter().map(|(n, t)| (n.as_str(), t)).collect();
        save_checkpoint(path, &refs)
    }

    /// Restores all four networks from [`Agent::save`] output; shapes must
    /// match this agent's architecture.
    pub fn load(&mut self, path: &Path) -> Result<()> {
        let entries = load_checkpoint(path)?;
        self.actor.assign_tensors("actor", &entries)?;
        self.critic.assign_tensors("critic", &entries)?;
        self.actor_target.assign_tensors("actor_target", &entries)?;
        self.critic_target.assign_tensors("critic_target", &entries)
    }
}
