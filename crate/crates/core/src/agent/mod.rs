//! Seed-selecting agent: single-step episodes against a frozen AE/GAN
//! environment, trained off-policy from a replay buffer.

mod env;
mod nets;
mod replay;
mod td3;

pub use env::{Environment, RewardBreakdown, RewardWeights};
pub use nets::{soft_update, Actor, QNetwork, QTrace};
pub use replay::{ReplayBuffer, Transition};
pub use td3::{
    encode_episodes, evaluate_policy, evaluate_random, train_agent, AgentConfig, AgentReport,
    StepLog, Td3Agent, UpdateStats,
};
