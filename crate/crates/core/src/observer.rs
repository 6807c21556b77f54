//! Observations, warmup exclusion and delta-perplexity rewards.

use std::collections::VecDeque;
use std::io::Write;

use rand::seq::index;

use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::trainee::Trainee;
use crate::types::{BinId, ObservationVector, SampleRef, Transition};

/// Fixed set of training samples, `per_bin` from every bin, laid out bin after bin.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeBatch {
    samples: Vec<SampleRef>,
    per_bin: usize,
}

impl PrototypeBatch {
    /// Draw `per_bin` distinct samples from each bin's training set.
    pub fn sample(bin_sizes: &[usize], per_bin: usize, rng: &mut Stream) -> Result<Self> {
        let mut samples = Vec::with_capacity(bin_sizes.len() * per_bin);
        for (b, &size) in bin_sizes.iter().enumerate() {
            if per_bin > size {
                return Err(Error::InvalidArgument(format!(
                    "cannot draw {per_bin} prototypes from bin {b} with {size} samples"
                )));
            }
            samples.extend(index::sample(rng, size, per_bin).into_iter().map(|i| SampleRef {
                bin: BinId(b),
                index: i,
            }));
        }
        Ok(Self { samples, per_bin })
    }

    pub fn samples(&self) -> &[SampleRef] {
        &self.samples
    }

    pub fn per_bin(&self) -> usize {
        self.per_bin
    }

    pub fn total_size(&self) -> usize {
        self.samples.len()
    }
}

/// Score the prototype batch under the trainee's current parameters.
pub fn observe(
    trainee: &mut dyn Trainee,
    prototypes: &PrototypeBatch,
    normalize: bool,
) -> Result<ObservationVector> {
    let mut scores = trainee.score_samples(prototypes.samples())?;
    if scores.len() != prototypes.total_size() {
        return Err(Error::Dimension {
            expected: prototypes.total_size(),
            found: scores.len(),
        });
    }
    if normalize {
        z_score(&mut scores);
    }
    Ok(ObservationVector {
        scores,
        step: trainee.steps_taken(),
    })
}

pub(crate) fn z_score(v: &mut [f64]) {
    let n = v.len() as f64;
    if n == 0.0 {
        return;
    }
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt().max(1e-12);
    v.iter_mut().for_each(|x| *x = (*x - mean) / sd);
}

/// True when transitions at `step` may be recorded.
pub fn warmup_filter(step: u64, warmup_steps: u64) -> bool {
    step >= warmup_steps
}

/// Recent validation perplexities, differenced over `window` evaluations.
#[derive(Debug, Clone)]
pub struct RewardLedger {
    history: VecDeque<(u64, f64)>,
    window: usize,
    interval: u64,
}

impl RewardLedger {
    pub fn new(window: usize, interval: u64) -> Self {
        Self {
            history: VecDeque::with_capacity(window + 1),
            window: window.max(1),
            interval: interval.max(1),
        }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn interval(&self) -> u64 {
        self.interval
    }

    /// Evaluations land on multiples of the interval.
    pub fn is_reward_step(&self, step: u64) -> bool {
        step % self.interval == 0
    }

    /// Append `ppl` and return `ppl[t - window] - ppl[t]` once enough history exists.
    /// Improvement (falling perplexity) is positive.
    pub fn reward(&mut self, step: u64, ppl: f64) -> Result<Option<f64>> {
        if !(ppl > 0.0 && ppl.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "perplexity must be positive and finite, got {ppl}"
            )));
        }
        let reward = if self.history.len() >= self.window {
            let (_, past) = self.history[self.history.len() - self.window];
            Some(past - ppl)
        } else {
            None
        };
        self.history.push_back((step, ppl));
        while self.history.len() > self.window {
            self.history.pop_front();
        }
        Ok(reward)
    }

    pub fn latest(&self) -> Option<(u64, f64)> {
        self.history.back().copied()
    }
}

/// CSV rows `step,action,reward,score_0..score_{n-1}` with a header line.
pub fn write_trace_csv<W: Write>(out: &mut W, transitions: &[Transition]) -> Result<()> {
    let width = transitions.first().map_or(0, |t| t.observation.len());
    let mut header = String::from("step,action,reward");
    for i in 0..width {
        header.push_str(&format!(",score_{i}"));
    }
    writeln!(out, "{header}")?;
    for t in transitions {
        let mut line = format!("{},{},{}", t.step, t.action.index(), t.reward);
        for s in &t.observation.scores {
            line.push(',');
            line.push_str(&s.to_string());
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SyntheticTraineeSpec;
    use crate::rng::seeded_rng;
    use crate::trainee::SyntheticTrainee;

    #[test]
    fn prototype_layout_is_bin_blocks() {
        let mut rng = seeded_rng(1, "prototypes");
        let p = PrototypeBatch::sample(&[512, 1536], 32, &mut rng).unwrap();
        assert_eq!(p.total_size(), 64);
        assert!(p.samples()[..32].iter().all(|s| s.bin == BinId(0)));
        assert!(p.samples()[32..].iter().all(|s| s.bin == BinId(1)));
        let mut idx: Vec<usize> = p.samples()[..32].iter().map(|s| s.index).collect();
        idx.sort_unstable();
        idx.dedup();
        assert_eq!(idx.len(), 32, "drawn without replacement");
        assert!(PrototypeBatch::sample(&[4, 100], 8, &mut rng).is_err());
    }

    #[test]
    fn perfect_model_scores_zero_on_bin_zero() {
        let spec = SyntheticTraineeSpec {
            noise_sigma: vec![0.0, 0.0],
            ..SyntheticTraineeSpec::default()
        };
        let mut t = SyntheticTrainee::new(&spec, 3).unwrap();
        let target = t.targets()[0].clone();
        t.set_theta(&target).unwrap();
        let p = PrototypeBatch::sample(&[512, 1536], 32, &mut seeded_rng(3, "p")).unwrap();
        let obs = observe(&mut t, &p, false).unwrap();
        assert_eq!(obs.len(), 64);
        assert!(obs.scores[..32].iter().all(|s| s.abs() < 1e-20));
        assert!(obs.scores[32..].iter().any(|s| *s < -1e-6));
        assert_eq!(obs, observe(&mut t, &p, false).unwrap());
    }

    #[test]
    fn zero_model_scores_minus_y_squared() {
        let mut t = SyntheticTrainee::new(&SyntheticTraineeSpec::default(), 8).unwrap();
        let p = PrototypeBatch::sample(&[512, 1536], 1, &mut seeded_rng(0, "p")).unwrap();
        let obs = observe(&mut t, &p, false).unwrap();
        for (s, r) in obs.scores.iter().zip(p.samples()) {
            let y = t.dataset(r.bin).unwrap().ys[r.index];
            assert_eq!(*s, -(y * y));
        }
    }

    #[test]
    fn normalization_is_opt_in() {
        let mut t = SyntheticTrainee::new(&SyntheticTraineeSpec::default(), 8).unwrap();
        let p = PrototypeBatch::sample(&[512, 1536], 4, &mut seeded_rng(0, "p")).unwrap();
        let obs = observe(&mut t, &p, true).unwrap();
        let mean = obs.scores.iter().sum::<f64>() / 8.0;
        assert!(mean.abs() < 1e-12);
    }

    #[test]
    fn reward_sign_and_history() {
        let mut l = RewardLedger::new(1, 10);
        assert_eq!(l.reward(0, 9.0).unwrap(), None);
        let mut l = RewardLedger::new(1, 10);
        l.reward(0, 12.0).unwrap();
        assert_eq!(l.reward(10, 11.5).unwrap(), Some(0.5));
        let mut l = RewardLedger::new(1, 10);
        l.reward(0, 10.0).unwrap();
        assert_eq!(l.reward(10, 10.0).unwrap(), Some(0.0));
        assert!(l.reward(20, 0.0).is_err());
        assert!(l.reward(20, -1.0).is_err());
    }

    #[test]
    fn wider_window_differences_further_back() {
        let mut l = RewardLedger::new(2, 1);
        assert_eq!(l.reward(0, 5.0).unwrap(), None);
        assert_eq!(l.reward(1, 4.0).unwrap(), None);
        assert_eq!(l.reward(2, 3.5).unwrap(), Some(1.5));
        assert_eq!(l.reward(3, 3.0).unwrap(), Some(1.0));
    }

    #[test]
    fn warmup_boundary_is_inclusive() {
        assert!(!warmup_filter(4999, 5000));
        assert!(warmup_filter(5000, 5000));
        assert!(warmup_filter(0, 0));
    }

    #[test]
    fn trace_csv_has_header_and_rows() {
        let t = Transition {
            observation: ObservationVector {
                scores: vec![-0.5, -1.25],
                step: 7,
            },
            action: BinId(1),
            reward: 0.25,
            step: 7,
            agent_id: 0,
        };
        let mut out = Vec::new();
        write_trace_csv(&mut out, &[t]).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "step,action,reward,score_0,score_1\n7,1,0.25,-0.5,-1.25\n"
        );
    }
}
