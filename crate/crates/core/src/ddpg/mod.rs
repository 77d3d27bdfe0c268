//! Deterministic policy-gradient training: agent networks, replay memory,
//! and the seeded episode loop.

pub mod agent;
pub mod buffer;
pub mod train;

pub use agent::{Agent, AgentConfig};
pub use buffer::{ReplayBuffer, Transition};
pub use train::{evaluate_policy, random_policy_mean_reward, train, train_agent, TrainOutcome};
