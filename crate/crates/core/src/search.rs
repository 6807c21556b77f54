//! Search-based curricula: fixed-ratio grid search, phase-wise pruned tree search,
//! fixed baselines and continued training on the target bin.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::policy::{draw_fixed, CurriculumPolicy};
use crate::report::{ReportBuilder, RunReport};
use crate::rng::{seeded_rng, Stream};
use crate::runner::{self, Driver};
use crate::trainee::{Trainee, TraineeCheckpoint, TraineeFactory};
use crate::types::BinId;

/// Upper bound on continued-training epochs, in case perplexity keeps creeping down.
pub const CONTINUED_MAX_EPOCHS: usize = 1000;

/// Train a fresh trainee under `policy` for `cfg.total_steps` steps.
/// Returns the report and the final trainee state.
pub fn run_policy(
    policy: &CurriculumPolicy,
    cfg: &RunConfig,
    factory: &dyn TraineeFactory,
    seed: u64,
) -> Result<(RunReport, TraineeCheckpoint)> {
    let mut trainee = factory.make(seed)?;
    let mut driver = policy.driver(cfg, seed, trainee.as_ref())?;
    let report = runner::run(
        trainee.as_mut(),
        &mut driver,
        cfg.total_steps,
        cfg.reward_interval,
        &policy.describe(),
        seed,
    )?;
    let cp = trainee.checkpoint()?;
    Ok((report, cp))
}

/// Sample bin 0 with probability `p` at every step of a fresh run.
pub fn run_fixed_policy(
    p: f64,
    cfg: &RunConfig,
    factory: &dyn TraineeFactory,
    seed: u64,
) -> Result<RunReport> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidProbability(p));
    }
    Ok(run_policy(&CurriculumPolicy::Fixed(p), cfg, factory, seed)?.0)
}

fn sorted_candidates(candidates: &[f64]) -> Result<Vec<f64>> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("candidate set is empty".into()));
    }
    if let Some(&p) = candidates.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidProbability(p));
    }
    let mut c = candidates.to_vec();
    c.sort_by(f64::total_cmp);
    c.dedup();
    Ok(c)
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Index of the smallest value; the first one wins ties.
fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = i;
        }
    }
    best
}

/// Work counters for searches.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchStats {
    pub training_runs: usize,
    pub phase_trainings: usize,
    pub max_retained_checkpoints: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridEvaluation {
    pub p: f64,
    pub seed: u64,
    pub final_perplexity: f64,
    pub report: RunReport,
    pub checkpoint: TraineeCheckpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub p: f64,
    pub mean_perplexity: f64,
    pub sd_perplexity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchResult {
    /// Candidate-major, seed-minor.
    pub evaluations: Vec<GridEvaluation>,
    /// Ascending in `p`.
    pub curve: Vec<CurvePoint>,
    pub best_p: f64,
    pub stats: SearchStats,
}

impl GridSearchResult {
    pub fn evaluations_for(&self, p: f64) -> impl Iterator<Item = &GridEvaluation> {
        self.evaluations.iter().filter(move |e| e.p == p)
    }
}

/// Line search over fixed sampling probabilities, averaging final perplexity over `seeds`.
/// Lowest mean perplexity wins; ties go to the lower `p`.
pub fn grid_search(
    cfg: &RunConfig,
    factory: &dyn TraineeFactory,
    candidates: &[f64],
    seeds: &[u64],
) -> Result<GridSearchResult> {
    let candidates = sorted_candidates(candidates)?;
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("no seeds given".into()));
    }
    let jobs: Vec<(f64, u64)> = candidates
        .iter()
        .flat_map(|&p| seeds.iter().map(move |&s| (p, s)))
        .collect();
    let evaluations: Vec<GridEvaluation> = jobs
        .par_iter()
        .map(|&(p, seed)| {
            let (report, checkpoint) = run_policy(&CurriculumPolicy::Fixed(p), cfg, factory, seed)?;
            Ok(GridEvaluation {
                p,
                seed,
                final_perplexity: report.final_validation_perplexity,
                report,
                checkpoint,
            })
        })
        .collect::<Result<_>>()?;
    let curve: Vec<CurvePoint> = candidates
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let ppls: Vec<f64> = evaluations[i * seeds.len()..(i + 1) * seeds.len()]
                .iter()
                .map(|e| e.final_perplexity)
                .collect();
            let (mean, sd) = mean_sd(&ppls);
            CurvePoint {
                p,
                mean_perplexity: mean,
                sd_perplexity: sd,
            }
        })
        .collect();
    let means: Vec<f64> = curve.iter().map(|c| c.mean_perplexity).collect();
    let best_p = candidates[argmin(&means)];
    let stats = SearchStats {
        training_runs: evaluations.len(),
        ..SearchStats::default()
    };
    Ok(GridSearchResult {
        evaluations,
        curve,
        best_p,
        stats,
    })
}

/// Fixed-probability driver over a caller-owned stream, so the stream position
/// can be carried between phases.
struct PhaseDriver<'a> {
    p: f64,
    n_bins: usize,
    rng: &'a mut Stream,
}

impl Driver for PhaseDriver<'_> {
    fn choose(&mut self, _: &mut dyn Trainee) -> Result<BinId> {
        Ok(draw_fixed(self.p, self.n_bins, self.rng))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseScores {
    pub phase: usize,
    /// `(p, mean validation perplexity at the end of the phase)`, ascending in `p`.
    pub candidates: Vec<(f64, f64)>,
    pub chosen: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeSearchResult {
    pub schedule: Vec<(usize, f64)>,
    pub phase_scores: Vec<PhaseScores>,
    /// Final kept state for every seed, in seed order.
    pub final_checkpoints: Vec<(u64, TraineeCheckpoint)>,
    pub final_perplexities: Vec<f64>,
    pub stats: SearchStats,
}

impl TreeSearchResult {
    pub fn policy(&self) -> CurriculumPolicy {
        CurriculumPolicy::PhaseWise(self.schedule.clone())
    }
}

struct Branch {
    trainee: Box<dyn Trainee>,
    kept: TraineeCheckpoint,
    kept_rng: Stream,
}

/// Greedy phase-wise search with beam width one.
///
/// Each phase trains every candidate probability for one bin-0 epoch from the
/// kept checkpoint (restoring the sampling streams too, so siblings see the same
/// draws), keeps only the checkpoint with the lowest mean validation perplexity
/// across seeds, and moves on. Ties go to the lower `p`.
pub fn pruned_tree_search(
    cfg: &RunConfig,
    factory: &dyn TraineeFactory,
    candidates: &[f64],
    phases: usize,
    seeds: &[u64],
) -> Result<TreeSearchResult> {
    let candidates = sorted_candidates(candidates)?;
    if phases == 0 {
        return Err(Error::InvalidArgument("phases must be >= 1".into()));
    }
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("no seeds given".into()));
    }
    let phase_len = cfg.phase_len();
    let interval = cfg.reward_interval;
    let mut branches: Vec<Branch> = seeds
        .iter()
        .map(|&seed| {
            let mut trainee = factory.make(seed)?;
            let kept = trainee.checkpoint()?;
            Ok(Branch {
                trainee,
                kept,
                kept_rng: seeded_rng(seed, "policy"),
            })
        })
        .collect::<Result<_>>()?;

    let mut schedule = Vec::with_capacity(phases);
    let mut phase_scores = Vec::with_capacity(phases);
    let mut stats = SearchStats::default();
    let mut final_perplexities = vec![f64::NAN; seeds.len()];

    for phase in 0..phases {
        // children[c][s] = (ppl, checkpoint, stream) of candidate c on seed s.
        let mut children: Vec<Vec<(f64, TraineeCheckpoint, Stream)>> =
            Vec::with_capacity(candidates.len());
        for &p in &candidates {
            let results: Vec<(f64, TraineeCheckpoint, Stream)> = branches
                .par_iter_mut()
                .zip(seeds.par_iter())
                .map(|(b, &seed)| {
                    b.trainee.restore(&b.kept)?;
                    let mut rng = b.kept_rng.clone();
                    let n_bins = b.trainee.n_bins();
                    let mut driver = PhaseDriver {
                        p,
                        n_bins,
                        rng: &mut rng,
                    };
                    runner::run(
                        b.trainee.as_mut(),
                        &mut driver,
                        phase_len,
                        interval,
                        "tree-phase",
                        seed,
                    )
                    .map_err(runner::strip_abort)?;
                    let ppl = b.trainee.validation_perplexity()?;
                    Ok((ppl, b.trainee.checkpoint()?, rng))
                })
                .collect::<Result<_>>()?;
            stats.phase_trainings += 1;
            children.push(results);
            stats.max_retained_checkpoints = stats.max_retained_checkpoints.max(children.len() + 1);
        }
        let means: Vec<f64> = children
            .iter()
            .map(|c| c.iter().map(|(ppl, _, _)| ppl).sum::<f64>() / seeds.len() as f64)
            .collect();
        let best = argmin(&means);
        let chosen = candidates[best];
        for (s, (b, (ppl, cp, rng))) in branches
            .iter_mut()
            .zip(children.swap_remove(best))
            .enumerate()
        {
            b.kept = cp;
            b.kept_rng = rng;
            final_perplexities[s] = ppl;
        }
        schedule.push((phase, chosen));
        phase_scores.push(PhaseScores {
            phase,
            candidates: candidates.iter().copied().zip(means).collect(),
            chosen,
        });
    }

    Ok(TreeSearchResult {
        schedule,
        phase_scores,
        final_checkpoints: seeds
            .iter()
            .copied()
            .zip(branches.into_iter().map(|b| b.kept))
            .collect(),
        final_perplexities,
        stats,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Bin0Only,
    Bin1Only,
    UpsampledMix,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [
        BaselineKind::Bin0Only,
        BaselineKind::Bin1Only,
        BaselineKind::UpsampledMix,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::Bin0Only => "bin0_only",
            BaselineKind::Bin1Only => "bin1_only",
            BaselineKind::UpsampledMix => "upsampled_mix",
        }
    }

    pub fn probability(self) -> f64 {
        match self {
            BaselineKind::Bin0Only => 1.0,
            BaselineKind::Bin1Only => 0.0,
            BaselineKind::UpsampledMix => 0.5,
        }
    }

    /// Config the baseline runs under. The upsampled mix raises bin 0's epoch to bin 1's size;
    /// sampling with replacement does the rest.
    pub fn config(self, cfg: &RunConfig) -> RunConfig {
        let mut cfg = cfg.clone();
        if self == BaselineKind::UpsampledMix && cfg.bins.len() > 1 {
            let target = cfg.epoch_size(1);
            cfg.bins[0].epoch_size = target;
        }
        cfg
    }
}

pub fn run_baseline(
    kind: BaselineKind,
    cfg: &RunConfig,
    factory: &dyn TraineeFactory,
    seed: u64,
) -> Result<(RunReport, TraineeCheckpoint)> {
    let cfg = kind.config(cfg);
    run_policy(&CurriculumPolicy::Fixed(kind.probability()), &cfg, factory, seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuedOutcome {
    pub report: RunReport,
    /// State at the best evaluation (possibly the starting state).
    pub best: TraineeCheckpoint,
    pub starting_perplexity: f64,
}

/// Fine-tune on bin 0 only, evaluating once per bin-0 epoch, until `patience`
/// consecutive evaluations fail to improve on the best seen. Returns the best state.
pub fn continued_training(
    start: &TraineeCheckpoint,
    cfg: &RunConfig,
    factory: &dyn TraineeFactory,
    seed: u64,
    patience: usize,
) -> Result<ContinuedOutcome> {
    let mut trainee = factory.make(seed)?;
    trainee.restore(start)?;
    let mut builder = ReportBuilder::new(
        format!("continued(bin0, patience={patience})"),
        seed,
        trainee.steps_taken(),
        trainee.n_bins(),
    );
    let epoch = cfg.phase_len();
    let result = (|| -> Result<(f64, f64, TraineeCheckpoint)> {
        let start_ppl = trainee.validation_perplexity()?;
        builder.evaluation(trainee.steps_taken(), start_ppl, None, None);
        let mut best = (start_ppl, start.clone());
        let mut misses = 0;
        let mut epochs = 0;
        while misses < patience && epochs < CONTINUED_MAX_EPOCHS {
            for _ in 0..epoch {
                trainee.train_step(BinId::TARGET)?;
                builder.action(BinId::TARGET);
            }
            epochs += 1;
            let ppl = trainee.validation_perplexity()?;
            builder.evaluation(trainee.steps_taken(), ppl, None, None);
            if ppl < best.0 {
                best = (ppl, trainee.checkpoint()?);
                misses = 0;
            } else {
                misses += 1;
            }
        }
        Ok((start_ppl, best.0, best.1))
    })();
    match result {
        Ok((starting_perplexity, best_ppl, best)) => {
            let mut report = builder.finish();
            report.final_validation_perplexity = best_ppl;
            Ok(ContinuedOutcome {
                report,
                best,
                starting_perplexity,
            })
        }
        Err(e) => Err(builder.abort(e)),
    }
}
