//! Flat TOML run configuration.
//!
//! One file drives every subcommand: scenario geometry, channel model,
//! agent hyperparameters, encoder shape, finetuning schedule, and the
//! experiment protocol (dataset size, splits, evaluation draws, codebook
//! size). Every key is optional; unset keys fall back to the library
//! defaults, so an empty file is a complete configuration. Unknown keys,
//! type mismatches, and out-of-range values are all rejected at parse
//! time with the offending key named.

use rislab_core::channel::{ChannelModel, ScenarioConfig};
use rislab_core::ddpg::AgentConfig;
use rislab_core::env::{EnvConfig, StateMode};
use rislab_core::lwm::{FinetuneConfig, LwmConfig};
use rislab_core::{Error, Result};
use serde::Deserialize;
use std::ops::Range;

/// Channel model selector; `paths` and `rician_k_db` only apply to
/// `geometric`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Rayleigh,
    Geometric,
}

fn neg_inf() -> f64 {
    f64::NEG_INFINITY
}

/// Fully resolved run configuration. Field defaults mirror the library
/// defaults so that behaviour cannot drift between the CLI and direct
/// library use.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    // Scenario geometry and signal levels.
    pub n_t: usize,
    pub n_r: usize,
    pub ris_elements: usize,
    pub users: usize,
    pub p_max_dbm: f64,
    pub noise_dbm: f64,
    pub channel_model: ModelKind,
    pub paths: usize,
    #[serde(default = "neg_inf")]
    pub rician_k_db: f64,

    // Environment.
    pub steps_per_episode: usize,
    pub penalty_weight: f64,

    // Agent.
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub gamma: f64,
    pub batch_size: usize,
    pub tau: f64,
    pub hidden: Vec<usize>,
    pub buffer_capacity: usize,
    pub noise_std: f64,
    pub episodes: usize,
    pub update_every: usize,

    // Encoder shape.
    pub dim: usize,
    pub blocks: usize,
    pub heads: usize,
    pub token_len: usize,
    pub patch_capacity: usize,

    // Finetuning schedule.
    pub finetune_epochs: usize,
    pub finetune_batch_size: usize,
    pub finetune_lr: f64,
    pub finetune_weight_decay: f64,
    pub last_layer_only: bool,

    // Experiment protocol.
    pub dataset_size: usize,
    pub eval_draws: usize,
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub codebook_size: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sc = ScenarioConfig::default();
        let ag = AgentConfig::default();
        let lw = LwmConfig::default();
        let ft = FinetuneConfig::default();
        Self {
            n_t: sc.n_t,
            n_r: sc.n_r,
            ris_elements: sc.ris_elements,
            users: sc.users,
            p_max_dbm: sc.p_max_dbm,
            noise_dbm: sc.noise_dbm,
            channel_model: ModelKind::Rayleigh,
            paths: 3,
            rician_k_db: f64::NEG_INFINITY,
            steps_per_episode: 100,
            penalty_weight: 1.0,
            actor_lr: ag.actor_lr,
            critic_lr: ag.critic_lr,
            gamma: ag.gamma,
            batch_size: ag.batch_size,
            tau: ag.tau,
            hidden: vec![ag.hidden.0, ag.hidden.1],
            buffer_capacity: ag.buffer_capacity,
            noise_std: ag.noise_std,
            episodes: ag.episodes,
            update_every: ag.update_every,
            dim: lw.dim,
            blocks: lw.blocks,
            heads: lw.heads,
            token_len: lw.token_len,
            patch_capacity: lw.patch_capacity,
            finetune_epochs: ft.epochs,
            finetune_batch_size: ft.batch_size,
            finetune_lr: ft.lr,
            finetune_weight_decay: ft.weight_decay,
            last_layer_only: ft.last_layer_only,
            dataset_size: 256,
            eval_draws: 100,
            train_fraction: 0.70,
            val_fraction: 0.15,
            codebook_size: 8,
        }
    }
}

/// Parses and validates a TOML configuration. An empty string yields the
/// defaults.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    // Keep the span context from the TOML error: for type errors the
    // message alone does not name the key, the quoted line does.
    let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        // Library validators already name their fields; the CLI-only keys
        // are checked here.
        if self.hidden.len() != 2 {
            return Err(Error::Config(format!(
                "hidden must list exactly two layer widths, got {}",
                self.hidden.len()
            )));
        }
        self.env_config(StateMode::Raw).validate()?;
        self.agent_config().validate()?;
        self.lwm_config().validate()?;
        self.finetune_config(0).validate()?;
        for (name, v) in [
            ("dataset_size", self.dataset_size),
            ("eval_draws", self.eval_draws),
            ("codebook_size", self.codebook_size),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        for (name, v) in [
            ("train_fraction", self.train_fraction),
            ("val_fraction", self.val_fraction),
        ] {
            if !(v.is_finite() && v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!(
                    "{name} must lie in (0, 1), got {v}"
                )));
            }
        }
        if self.train_fraction + self.val_fraction >= 1.0 {
            return Err(Error::Config(format!(
                "train_fraction + val_fraction must leave room for the held-out split, got {}",
                self.train_fraction + self.val_fraction
            )));
        }
        Ok(())
    }

    pub fn channel_model(&self) -> ChannelModel {
        match self.channel_model {
            ModelKind::Rayleigh => ChannelModel::Rayleigh,
            ModelKind::Geometric => ChannelModel::Geometric {
                paths: self.paths,
                rician_k_db: self.rician_k_db,
            },
        }
    }

    /// Scenario with a placeholder seed; generation sites pass real seeds.
    pub fn scenario(&self) -> ScenarioConfig {
        ScenarioConfig {
            n_t: self.n_t,
            n_r: self.n_r,
            ris_elements: self.ris_elements,
            users: self.users,
            p_max_dbm: self.p_max_dbm,
            noise_dbm: self.noise_dbm,
            model: self.channel_model(),
            seed: 0,
        }
    }

    pub fn env_config(&self, mode: StateMode) -> EnvConfig {
        let mut env = EnvConfig::new(self.scenario(), mode);
        env.steps_per_episode = self.steps_per_episode;
        env.penalty_weight = self.penalty_weight;
        env
    }

    pub fn agent_config(&self) -> AgentConfig {
        AgentConfig {
            actor_lr: self.actor_lr,
            critic_lr: self.critic_lr,
            gamma: self.gamma,
            batch_size: self.batch_size,
            tau: self.tau,
            hidden: (self.hidden[0], self.hidden[1]),
            buffer_capacity: self.buffer_capacity,
            noise_std: self.noise_std,
            episodes: self.episodes,
            steps_per_episode: self.steps_per_episode,
            update_every: self.update_every,
        }
    }

    pub fn lwm_config(&self) -> LwmConfig {
        LwmConfig {
            dim: self.dim,
            blocks: self.blocks,
            heads: self.heads,
            token_len: self.token_len,
            patch_capacity: self.patch_capacity,
        }
    }

    pub fn finetune_config(&self, seed: u64) -> FinetuneConfig {
        FinetuneConfig {
            epochs: self.finetune_epochs,
            batch_size: self.finetune_batch_size,
            lr: self.finetune_lr,
            weight_decay: self.finetune_weight_decay,
            last_layer_only: self.last_layer_only,
            seed,
        }
    }

    /// Index ranges of the train/validation/held-out splits of an
    /// `n`-sample dataset. Ranges partition `0..n`; train and validation
    /// sizes round down, the held-out split takes the remainder.
    pub fn splits(&self, n: usize) -> (Range<usize>, Range<usize>, Range<usize>) {
        let train = ((n as f64) * self.train_fraction).floor() as usize;
        let val = ((n as f64) * self.val_fraction).floor() as usize;
        let val_end = (train + val).min(n);
        (0..train, train..val_end, val_end..n)
    }
}
