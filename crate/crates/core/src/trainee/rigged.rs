//! A stationary stand-in trainee with scripted rewards.
//!
//! Each training step on bin `k` moves validation perplexity by `-gain[k]`, and
//! every sample scores the same constant, so the observation never changes. With
//! a reward interval of one step the delta-perplexity reward of an action on bin
//! `k` is exactly `gain[k]`.

use super::{check_bin, Trainee, TraineeCheckpoint};
use crate::container::{format, Reader};
use crate::error::{Error, Result};
use crate::types::{BinId, SampleRef};

#[derive(Debug, Clone)]
pub struct RiggedTrainee {
    gains: Vec<f64>,
    score: f64,
    bin_size: usize,
    perplexity: f64,
    steps: u64,
}

impl RiggedTrainee {
    pub fn new(gains: Vec<f64>, start_perplexity: f64, score: f64, bin_size: usize) -> Self {
        Self {
            gains,
            score,
            bin_size,
            perplexity: start_perplexity,
            steps: 0,
        }
    }

    /// Two bins: bin 0 earns `+1` per step, bin 1 earns `-1`.
    pub fn two_bin(bin_size: usize) -> Self {
        Self::new(vec![1.0, -1.0], 1.0e6, -1.0, bin_size)
    }
}

impl Trainee for RiggedTrainee {
    fn n_bins(&self) -> usize {
        self.gains.len()
    }

    fn bin_sizes(&self) -> Vec<usize> {
        vec![self.bin_size; self.gains.len()]
    }

    fn train_step(&mut self, bin: BinId) -> Result<f64> {
        check_bin(bin, self.gains.len())?;
        let before = self.perplexity.ln();
        self.perplexity -= self.gains[bin.index()];
        self.steps += 1;
        Ok(before)
    }

    fn validation_perplexity(&mut self) -> Result<f64> {
        if self.perplexity > 0.0 {
            Ok(self.perplexity)
        } else {
            Err(Error::InvalidArgument(
                "rigged trainee perplexity fell to zero; raise the starting value".into(),
            ))
        }
    }

    fn score_samples(&mut self, samples: &[SampleRef]) -> Result<Vec<f64>> {
        Ok(vec![self.score; samples.len()])
    }

    fn checkpoint(&mut self) -> Result<TraineeCheckpoint> {
        Ok(TraineeCheckpoint {
            format_version: format::RIGGED_TRAINEE,
            step: self.steps,
            payload: self.perplexity.to_le_bytes().to_vec(),
        })
    }

    fn restore(&mut self, cp: &TraineeCheckpoint) -> Result<()> {
        cp.expect_version(format::RIGGED_TRAINEE)?;
        let mut r = Reader::new(&cp.payload);
        let ppl = r.f64()?;
        r.finish()?;
        self.perplexity = ppl;
        self.steps = cp.step;
        Ok(())
    }

    fn steps_taken(&self) -> u64 {
        self.steps
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gains_drive_perplexity() {
        let mut t = RiggedTrainee::two_bin(8);
        let p0 = t.validation_perplexity().unwrap();
        t.train_step(BinId(0)).unwrap();
        assert_eq!(p0 - t.validation_perplexity().unwrap(), 1.0);
        let cp = t.checkpoint().unwrap();
        t.train_step(BinId(1)).unwrap();
        t.train_step(BinId(1)).unwrap();
        t.restore(&cp).unwrap();
        assert_eq!(t.validation_perplexity().unwrap(), p0 - 1.0);
        assert_eq!(t.steps_taken(), 1);
    }
}
