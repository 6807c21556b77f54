//! Contextual multi-arm bandit over data bins.
//!
//! The reward model predicts the delta-perplexity reward of every bin from the
//! current observation. Agents explore epsilon-greedily, learn only from their
//! own transitions while running, and are pooled afterwards to fit one final
//! greedy policy.

mod agent;
mod epsilon;
mod mlp;
mod replay;

pub use agent::{
    fit_pass, optimizer, run_agent, schedule, train_final_policy, AgentOutcome,
};
pub use epsilon::{act, act_with_epsilon, EpsilonSchedule};
pub use mlp::{argmax, softmax, Dense, Gradients, MlpModel, RmsProp};
pub use replay::ReplayBuffer;
