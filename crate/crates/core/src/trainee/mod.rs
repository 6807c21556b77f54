//! The system under curriculum control.
//!
//! A [`Trainee`] trains on one batch from a chosen bin, scores samples, reports
//! bin-0 validation perplexity and can be checkpointed and restored exactly.

mod rigged;
mod synthetic;

pub use rigged::RiggedTrainee;
pub use synthetic::SyntheticTrainee;

use crate::config::{RunConfig, TraineeSpec};
use crate::container::Container;
use crate::error::{Error, Result};
use crate::types::{BinId, SampleRef};

/// Serialized trainee state.
///
/// Restoring a checkpoint reproduces every later observable behaviour, provided
/// the same actions are applied afterwards.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraineeCheckpoint {
    pub format_version: u32,
    pub step: u64,
    pub payload: Vec<u8>,
}

impl TraineeCheckpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        Container {
            format_version: self.format_version,
            step: self.step,
            payload: self.payload.clone(),
        }
        .encode()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let c = Container::decode(bytes)?;
        Ok(Self {
            format_version: c.format_version,
            step: c.step,
            payload: c.payload,
        })
    }

    pub fn write_file(&self, path: &std::path::Path) -> Result<()> {
        crate::container::write_creating(path, &self.to_bytes())
    }

    pub fn read_file(path: &std::path::Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub(crate) fn expect_version(&self, expected: u32) -> Result<()> {
        if self.format_version == expected {
            Ok(())
        } else {
            Err(Error::VersionMismatch {
                expected,
                found: self.format_version,
            })
        }
    }
}

pub trait Trainee: Send {
    fn n_bins(&self) -> usize;

    /// Training-set size of every bin.
    fn bin_sizes(&self) -> Vec<usize>;

    /// Train on one batch drawn from `bin`; returns the mean batch loss before the update.
    fn train_step(&mut self, bin: BinId) -> Result<f64>;

    /// Perplexity on the bin-0 validation set. Does not change state.
    fn validation_perplexity(&mut self) -> Result<f64>;

    /// Per-sample log-likelihood of each referenced training sample. Does not change state.
    fn score_samples(&mut self, samples: &[SampleRef]) -> Result<Vec<f64>>;

    fn checkpoint(&mut self) -> Result<TraineeCheckpoint>;

    fn restore(&mut self, checkpoint: &TraineeCheckpoint) -> Result<()>;

    fn steps_taken(&self) -> u64;
}

impl<T: Trainee + ?Sized> Trainee for Box<T> {
    fn n_bins(&self) -> usize {
        (**self).n_bins()
    }
    fn bin_sizes(&self) -> Vec<usize> {
        (**self).bin_sizes()
    }
    fn train_step(&mut self, bin: BinId) -> Result<f64> {
        (**self).train_step(bin)
    }
    fn validation_perplexity(&mut self) -> Result<f64> {
        (**self).validation_perplexity()
    }
    fn score_samples(&mut self, samples: &[SampleRef]) -> Result<Vec<f64>> {
        (**self).score_samples(samples)
    }
    fn checkpoint(&mut self) -> Result<TraineeCheckpoint> {
        (**self).checkpoint()
    }
    fn restore(&mut self, checkpoint: &TraineeCheckpoint) -> Result<()> {
        (**self).restore(checkpoint)
    }
    fn steps_taken(&self) -> u64 {
        (**self).steps_taken()
    }
}

/// Builds fresh trainees for runs. Each call must return an independent instance.
pub trait TraineeFactory: Sync {
    fn make(&self, seed: u64) -> Result<Box<dyn Trainee>>;
}

/// Builds the trainee described by a run configuration's `trainee_spec`.
#[derive(Debug, Clone)]
pub struct SpecFactory {
    spec: TraineeSpec,
}

impl SpecFactory {
    pub fn new(cfg: &RunConfig) -> Self {
        Self {
            spec: cfg.trainee_spec.clone(),
        }
    }
}

impl TraineeFactory for SpecFactory {
    fn make(&self, seed: u64) -> Result<Box<dyn Trainee>> {
        match &self.spec {
            TraineeSpec::Synthetic(spec) => Ok(Box::new(SyntheticTrainee::new(spec, seed)?)),
            TraineeSpec::Remote {
                address,
                timeout_secs,
            } => Ok(Box::new(crate::protocol::RemoteTrainee::connect(
                address,
                std::time::Duration::from_secs_f64(*timeout_secs),
                seed,
            )?)),
        }
    }
}

impl<F> TraineeFactory for F
where
    F: Fn(u64) -> Result<Box<dyn Trainee>> + Sync,
{
    fn make(&self, seed: u64) -> Result<Box<dyn Trainee>> {
        self(seed)
    }
}

pub(crate) fn check_bin(bin: BinId, n_bins: usize) -> Result<()> {
    if bin.index() < n_bins {
        Ok(())
    } else {
        Err(Error::UnknownBin {
            bin: bin.index(),
            n_bins,
        })
    }
}
