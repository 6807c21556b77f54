use std::sync::Arc;

use rand::seq::SliceRandom;

use super::epsilon::{act_with_epsilon, EpsilonSchedule};
use super::mlp::{MlpModel, RmsProp};
use super::replay::ReplayBuffer;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::observer::{observe, PrototypeBatch, RewardLedger};
use crate::policy::{draw_fixed, CurriculumPolicy};
use crate::report::RunReport;
use crate::rng::{seeded_rng, Stream};
use crate::runner::{self, Driver};
use crate::trainee::Trainee;
use crate::types::{BinId, ObservationVector, Transition};

pub fn optimizer(cfg: &RunConfig) -> RmsProp {
    RmsProp {
        learning_rate: cfg.learning_rate,
        decay: cfg.rmsprop_decay,
        ..RmsProp::default()
    }
}

pub fn schedule(cfg: &RunConfig) -> EpsilonSchedule {
    EpsilonSchedule {
        start: cfg.epsilon_start,
        floor: cfg.epsilon_floor,
        decay_steps: cfg.epsilon_decay_steps,
    }
}

/// One shuffled pass over `transitions` in mini-batches; returns the mean pre-update batch loss.
pub fn fit_pass(
    model: &mut MlpModel,
    transitions: &[Transition],
    batch_size: usize,
    rng: &mut Stream,
) -> Result<f64> {
    if transitions.is_empty() {
        return Err(Error::InvalidArgument("nothing to fit".into()));
    }
    let mut order: Vec<usize> = (0..transitions.len()).collect();
    order.shuffle(rng);
    let mut total = 0.0;
    let mut batches = 0usize;
    for chunk in order.chunks(batch_size.max(1)) {
        let batch: Vec<&Transition> = chunk.iter().map(|&i| &transitions[i]).collect();
        total += model.fit(&batch)?;
        batches += 1;
    }
    Ok(total / batches as f64)
}

struct BanditDriver {
    agent_id: u32,
    model: MlpModel,
    schedule: EpsilonSchedule,
    warmup: u64,
    cadence: u64,
    fit_batch: usize,
    normalize: bool,
    n_bins: usize,
    prototypes: PrototypeBatch,
    ledger: RewardLedger,
    pending: Vec<(ObservationVector, BinId, u64)>,
    buffer: ReplayBuffer,
    policy_rng: Stream,
    explore_rng: Stream,
    shuffle_rng: Stream,
    refits: usize,
}

impl Driver for BanditDriver {
    fn choose(&mut self, trainee: &mut dyn Trainee) -> Result<BinId> {
        let step = trainee.steps_taken();
        if step < self.warmup {
            return Ok(draw_fixed(0.5, self.n_bins, &mut self.policy_rng));
        }
        let obs = observe(trainee, &self.prototypes, self.normalize)?;
        let eps = self.schedule.value(step - self.warmup);
        let action = act_with_epsilon(&self.model, &obs.scores, eps, &mut self.explore_rng)?;
        self.pending.push((obs, action, step));
        Ok(action)
    }

    fn epsilon(&self, step: u64) -> Option<f64> {
        (step >= self.warmup).then(|| self.schedule.value(step - self.warmup))
    }

    fn on_evaluation(&mut self, step: u64, ppl: f64) -> Result<Option<f64>> {
        let reward = self.ledger.reward(step, ppl)?;
        if self.pending.is_empty() {
            return Ok(None);
        }
        let pending = std::mem::take(&mut self.pending);
        let Some(reward) = reward else {
            // Not enough history yet for this window: the interval goes uncredited.
            return Ok(None);
        };
        // Every transition in the interval shares its delta.
        for (observation, action, step) in pending {
            self.buffer.push(Transition {
                observation,
                action,
                reward,
                step,
                agent_id: self.agent_id,
            });
        }
        Ok(Some(reward))
    }

    fn after_step(&mut self, step: u64) -> Result<()> {
        if step > self.warmup && (step - self.warmup) % self.cadence == 0 && !self.buffer.is_empty()
        {
            fit_pass(
                &mut self.model,
                self.buffer.transitions(),
                self.fit_batch,
                &mut self.shuffle_rng,
            )?;
            self.refits += 1;
        }
        Ok(())
    }
}

/// Result of one online bandit run.
#[derive(Debug, Clone)]
pub struct AgentOutcome {
    pub agent_id: u32,
    pub report: RunReport,
    pub buffer: ReplayBuffer,
    pub model: MlpModel,
    pub refits: usize,
}

/// Online contextual-bandit loop on `trainee` for `cfg.total_steps` steps.
///
/// Warmup steps are chosen by a 50/50 mix and never recorded. Afterwards each
/// step observes the prototype batch, acts epsilon-greedily and trains. Rewards
/// arrive at every reward-interval evaluation and are credited to all
/// transitions of that interval. The model is refit on this agent's own buffer
/// every `bandit_update_cadence` post-warmup steps.
pub fn run_agent(
    agent_id: u32,
    cfg: &RunConfig,
    trainee: &mut dyn Trainee,
    seed: u64,
) -> Result<AgentOutcome> {
    let model = MlpModel::new(
        &cfg.layer_sizes(),
        optimizer(cfg),
        &mut seeded_rng(seed, "agent/init"),
    )?;
    let prototypes = PrototypeBatch::sample(
        &trainee.bin_sizes(),
        cfg.prototype_per_bin,
        &mut seeded_rng(seed, "prototypes"),
    )?;
    let mut driver = BanditDriver {
        agent_id,
        model,
        schedule: schedule(cfg),
        warmup: cfg.warmup_steps,
        cadence: cfg.bandit_update_cadence.max(1),
        fit_batch: cfg.fit_batch_size,
        normalize: cfg.normalize_observations,
        n_bins: trainee.n_bins(),
        prototypes,
        ledger: RewardLedger::new(cfg.reward_window, cfg.reward_interval),
        pending: Vec::new(),
        buffer: ReplayBuffer::new(),
        policy_rng: seeded_rng(seed, "policy"),
        explore_rng: seeded_rng(seed, "agent/explore"),
        shuffle_rng: seeded_rng(seed, "agent/shuffle"),
        refits: 0,
    };
    let label = format!("bandit(agent={agent_id})");
    let steps = cfg.total_steps.saturating_sub(trainee.steps_taken());
    let report = runner::run(trainee, &mut driver, steps, cfg.reward_interval, &label, seed)?;
    Ok(AgentOutcome {
        agent_id,
        report,
        buffer: driver.buffer,
        model: driver.model,
        refits: driver.refits,
    })
}

/// Fit `model` on the pooled transitions for `epochs` shuffled passes and wrap it as a greedy policy.
pub fn train_final_policy(
    pooled: &ReplayBuffer,
    epochs: usize,
    mut model: MlpModel,
    batch_size: usize,
    rng: &mut Stream,
) -> Result<(CurriculumPolicy, Arc<MlpModel>)> {
    if pooled.is_empty() {
        return Err(Error::InvalidArgument("pooled buffer is empty".into()));
    }
    for _ in 0..epochs {
        fit_pass(&mut model, pooled.transitions(), batch_size, rng)?;
    }
    let model = Arc::new(model);
    Ok((CurriculumPolicy::Learned(model.clone()), model))
}
