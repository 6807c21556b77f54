#![allow(dead_code)]

use curriculum::config::{RunConfig, Scale};
use curriculum::trainee::{RiggedTrainee, SpecFactory, Trainee};
use curriculum::Result;

/// Desk profile with the default synthetic trainee, validated.
pub fn desk() -> RunConfig {
    RunConfig::profile(Scale::Small).validate().unwrap()
}

pub fn desk_with(edit: impl FnOnce(&mut RunConfig)) -> RunConfig {
    let mut cfg = RunConfig::profile(Scale::Small);
    edit(&mut cfg);
    cfg.validate().unwrap()
}

pub fn factory(cfg: &RunConfig) -> SpecFactory {
    SpecFactory::new(cfg)
}

pub const RIGGED_BIN_SIZE: usize = 64;

/// Two-bin rigged environment: bin 0 always lowers perplexity by 1, bin 1 raises it by 1,
/// and every prototype scores the same.
pub fn rigged(_seed: u64) -> Result<Box<dyn Trainee>> {
    Ok(Box::new(RiggedTrainee::two_bin(RIGGED_BIN_SIZE)))
}

/// Bandit config for the rigged environment: 2000 post-warmup steps per agent.
pub fn rigged_cfg() -> RunConfig {
    desk_with(|c| {
        c.prototype_per_bin = 4;
        c.total_steps = c.warmup_steps + 2000;
        c.bins[0].epoch_size = Some(RIGGED_BIN_SIZE as u64);
        c.bins[1].epoch_size = Some(RIGGED_BIN_SIZE as u64);
    })
}
