//! Episode loop tying the agent to the environment: act with exploration
//! noise, store transitions, and once the buffer holds a batch run critic,
//! actor, and target updates on the configured cadence.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::ddpg::agent::{Agent, AgentConfig};
use crate::ddpg::buffer::{ReplayBuffer, Transition};
use crate::env::{Action, RisEnv};
use crate::error::{Error, Result};

/// Training trace. When divergence aborts the run early, the per-episode
/// vectors hold everything up to the failure.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Mean reward per episode.
    pub episode_rewards: Vec<f64>,
    /// Mean critic loss per episode; NaN for episodes without updates.
    pub critic_losses: Vec<f64>,
    /// Set when a non-finite loss aborted training.
    pub divergence: Option<String>,
}

impl TrainOutcome {
    /// Serializes the trace as `episode,mean_reward,critic_loss` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("episode,mean_reward,critic_loss\n");
        for (i, (r, l)) in self
            .episode_rewards
            .iter()
            .zip(&self.critic_losses)
            .enumerate()
        {
            out.push_str(&format!("{i},{r},{l}\n"));
        }
        out
    }
}

/// Runs the full training loop and returns the trained agent with its
/// trace. Everything (network init, exploration noise, buffer sampling,
/// and per-episode channel draws) derives from `seed`, so a rerun with the
/// same environment configuration is bit-identical.
pub fn train(env: &mut RisEnv, cfg: AgentConfig, seed: u64) -> Result<(Agent, TrainOutcome)> {
    cfg.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let state_dim = env.state_len();
    let action_dim = env.action_len();
    let mut agent = Agent::new(state_dim, action_dim, cfg.clone(), &mut rng)?;
    let outcome = train_agent(env, &mut agent, &cfg, &mut rng)?;
    Ok((agent, outcome))
}

/// Training loop over an existing agent; exposed so callers can warm-start
/// from a checkpoint.
pub fn train_agent<R: Rng>(
    env: &mut RisEnv,
    agent: &mut Agent,
    cfg: &AgentConfig,
    rng: &mut R,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if env.config().steps_per_episode != cfg.steps_per_episode {
        return Err(Error::Config(format!(
            "environment runs {}-step episodes, agent config says {}",
            env.config().steps_per_episode,
            cfg.steps_per_episode
        )));
    }
    let action_dim = env.action_len();
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity)?;
    let mut outcome = TrainOutcome {
        episode_rewards: Vec::with_capacity(cfg.episodes),
        critic_losses: Vec::with_capacity(cfg.episodes),
        divergence: None,
    };
    let mut total_steps = 0usize;

    for _ in 0..cfg.episodes {
        let episode_seed = rng.random::<u64>();
        let mut state = env.reset(episode_seed)?;
        let mut reward_sum = 0.0;
        let mut loss_sum = 0.0;
        let mut updates = 0usize;

        for _ in 0..cfg.steps_per_episode {
            let a = agent.select_action(&state, cfg.noise_std, rng)?;
            if a.iter().any(|v| !v.is_finite()) {
                outcome.divergence = Some("actor produced a non-finite action".into());
                return Ok(outcome);
            }
            let action = Action::new(a.clone(), action_dim)?;
            let out = env.step(&action)?;
            reward_sum += out.reward;
            buffer.push(Transition {
                s: state,
                a,
                r: out.reward,
                s_next: out.next_state.clone(),
            });
            state = out.next_state;
            total_steps += 1;

            if total_steps % cfg.update_every != 0 {
                continue;
            }
            let Some(batch) = buffer.sample(cfg.batch_size, rng) else {
                continue;
            };
            let critic_loss = match agent.critic_update(&batch) {
                Ok(l) => l,
                Err(Error::Numeric(msg)) => {
                    outcome.divergence = Some(msg);
                    return Ok(outcome);
                }
                Err(e) => return Err(e),
            };
            match agent.actor_update(&batch) {
                Ok(_) => {}
                Err(Error::Numeric(msg)) => {
                    outcome.divergence = Some(msg);
                    return Ok(outcome);
                }
                Err(e) => return Err(e),
            }
            agent.soft_update_targets()?;
            loss_sum += critic_loss;
            updates += 1;
        }

        outcome
            .episode_rewards
            .push(reward_sum / cfg.steps_per_episode as f64);
        outcome.critic_losses.push(if updates > 0 {
            loss_sum / updates as f64
        } else {
            f64::NAN
        });
    }
    Ok(outcome)
}

/// Mean per-episode reward of a uniformly random policy; the reference
/// level a trained agent has to beat.
pub fn random_policy_mean_reward(env: &mut RisEnv, episodes: usize, seed: u64) -> Result<f64> {
    if episodes == 0 {
        return Err(Error::Config("need at least one rollout episode".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let steps = env.config().steps_per_episode;
    let action_dim = env.action_len();
    let mut total = 0.0;
    for _ in 0..episodes {
        let episode_seed = rng.random::<u64>();
        env.reset(episode_seed)?;
        for _ in 0..steps {
            let raw: Vec<f64> = (0..action_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let out = env.step(&Action::new(raw, action_dim)?)?;
            total += out.reward;
        }
    }
    Ok(total / (episodes * steps) as f64)
}

/// Mean per-episode reward of the agent's noiseless policy over freshly
/// seeded episodes.
pub fn evaluate_policy(
    env: &mut RisEnv,
    agent: &Agent,
    episodes: usize,
    seed: u64,
) -> Result<f64> {
    if episodes == 0 {
        return Err(Error::Config("need at least one rollout episode".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let steps = env.config().steps_per_episode;
    let action_dim = env.action_len();
    let mut total = 0.0;
    for _ in 0..episodes {
        let episode_seed = rng.random::<u64>();
        let mut state = env.reset(episode_seed)?;
        for _ in 0..steps {
            let a = agent.actor_forward(&state)?;
            let out = env.step(&Action::new(a, action_dim)?)?;
            total += out.reward;
            state = out.next_state;
        }
    }
    Ok(total / (episodes * steps) as f64)
}
