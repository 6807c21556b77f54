use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::BinId;

/// One validation evaluation inside a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub step: u64,
    pub validation_perplexity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Actions per bin taken since the previous record.
    pub action_counts: Vec<u64>,
    /// Reward emitted at this evaluation, if any transitions were credited.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub policy_used: String,
    pub seed: u64,
    /// Trainee step at which this run began (non-zero for continued training).
    pub start_step: u64,
    /// Trainee step at which this run ended.
    pub wall_steps: u64,
    pub final_validation_perplexity: f64,
    pub records: Vec<EvalRecord>,
    /// Every action taken, in order, starting at `start_step`.
    pub actions: Vec<BinId>,
}

impl RunReport {
    pub fn new(policy_used: impl Into<String>, seed: u64, start_step: u64) -> Self {
        Self {
            policy_used: policy_used.into(),
            seed,
            start_step,
            wall_steps: start_step,
            final_validation_perplexity: f64::NAN,
            records: Vec::new(),
            actions: Vec::new(),
        }
    }

    pub fn action_totals(&self, n_bins: usize) -> Vec<u64> {
        let mut totals = vec![0u64; n_bins];
        for a in &self.actions {
            if let Some(t) = totals.get_mut(a.index()) {
                *t += 1;
            }
        }
        totals
    }

    /// Fraction of actions that chose `bin`.
    pub fn action_share(&self, bin: BinId) -> f64 {
        if self.actions.is_empty() {
            return 0.0;
        }
        self.actions.iter().filter(|&&a| a == bin).count() as f64 / self.actions.len() as f64
    }

    pub fn rewards(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().filter_map(|r| r.reward)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn write_file(&self, path: &std::path::Path) -> Result<()> {
        crate::container::write_creating(path, self.to_json().as_bytes())
    }

    pub fn read_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::from_json(&text)
    }
}

/// Accumulates a [`RunReport`] while a run is in progress.
#[derive(Debug, Clone)]
pub struct ReportBuilder {
    report: RunReport,
    pending_counts: Vec<u64>,
}

impl ReportBuilder {
    pub fn new(policy_used: impl Into<String>, seed: u64, start_step: u64, n_bins: usize) -> Self {
        Self {
            report: RunReport::new(policy_used, seed, start_step),
            pending_counts: vec![0; n_bins],
        }
    }

    pub fn action(&mut self, bin: BinId) {
        self.report.actions.push(bin);
        if let Some(c) = self.pending_counts.get_mut(bin.index()) {
            *c += 1;
        }
        self.report.wall_steps += 1;
    }

    pub fn evaluation(&mut self, step: u64, ppl: f64, epsilon: Option<f64>, reward: Option<f64>) {
        debug_assert!(self.report.records.last().is_none_or(|r| r.step < step));
        let n = self.pending_counts.len();
        let counts = std::mem::replace(&mut self.pending_counts, vec![0; n]);
        self.report.records.push(EvalRecord {
            step,
            validation_perplexity: ppl,
            epsilon,
            action_counts: counts,
            reward,
        });
        self.report.final_validation_perplexity = ppl;
    }

    pub fn last_step(&self) -> Option<u64> {
        self.report.records.last().map(|r| r.step)
    }

    pub fn report(&self) -> &RunReport {
        &self.report
    }

    pub fn finish(self) -> RunReport {
        self.report
    }

    /// Wrap `cause` together with what has been recorded so far.
    pub fn abort(self, cause: Error) -> Error {
        match cause {
            e @ Error::Aborted { .. } => e,
            cause => Error::Aborted {
                partial: Box::new(self.report),
                cause: Box::new(cause),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn builder_tracks_counts_between_records() {
        let mut b = ReportBuilder::new("fixed(p=0.5)", 3, 0, 2);
        b.evaluation(0, 2.0, None, None);
        b.action(BinId(0));
        b.action(BinId(1));
        b.action(BinId(0));
        b.evaluation(3, 1.5, Some(0.2), Some(0.5));
        let r = b.finish();
        assert_eq!(r.records[1].action_counts, vec![2, 1]);
        assert_eq!(r.records[0].action_counts, vec![0, 0]);
        assert_eq!(r.wall_steps, 3);
        assert_eq!(r.final_validation_perplexity, 1.5);
        assert_eq!(r.action_totals(2), vec![2, 1]);
        assert_eq!(r.rewards().collect::<Vec<_>>(), vec![0.5]);
    }

    fn arb_record() -> impl Strategy<Value = EvalRecord> {
        (
            any::<u32>(),
            0.0f64..1e6,
            proptest::option::of(0.0f64..1.0),
            proptest::collection::vec(0u64..1000, 2),
            proptest::option::of(-1e3f64..1e3),
        )
            .prop_map(|(step, ppl, eps, counts, reward)| EvalRecord {
                step: step as u64,
                validation_perplexity: ppl,
                epsilon: eps,
                action_counts: counts,
                reward,
            })
    }

    proptest! {
        #[test]
        fn report_json_round_trip(records in proptest::collection::vec(arb_record(), 0..8),
                                  actions in proptest::collection::vec(0usize..2, 0..32),
                                  seed in any::<u64>(), last in 0.5f64..100.0) {
            let report = RunReport {
                policy_used: "learned".into(),
                seed,
                start_step: 0,
                wall_steps: actions.len() as u64,
                final_validation_perplexity: last,
                records,
                actions: actions.into_iter().map(BinId).collect(),
            };
            let back = RunReport::from_json(&report.to_json()).unwrap();
            prop_assert_eq!(back, report);
        }
    }
}
