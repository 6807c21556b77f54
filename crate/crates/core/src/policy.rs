//! Curriculum policies and the drivers that execute them.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bandit::MlpModel;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::observer::{observe, z_score, PrototypeBatch};
use crate::rng::{seeded_rng, Stream};
use crate::runner::Driver;
use crate::trainee::Trainee;
use crate::types::BinId;

/// Anything that maps trainee state to a bin choice.
#[derive(Debug, Clone, PartialEq)]
pub enum CurriculumPolicy {
    /// Sample bin 0 with probability `p`, otherwise another bin.
    Fixed(f64),
    /// `(phase_index, p)` pairs; phase `t` covers steps `[t * phase_len, (t + 1) * phase_len)`.
    /// Steps past the last phase keep its probability.
    PhaseWise(Vec<(usize, f64)>),
    /// Greedy argmax of a trained reward model over prototype-batch observations.
    Learned(Arc<MlpModel>),
}

fn check_p(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidProbability(p))
    }
}

impl CurriculumPolicy {
    pub fn validate(&self, cfg: &RunConfig) -> Result<()> {
        match self {
            CurriculumPolicy::Fixed(p) => check_p(*p),
            CurriculumPolicy::PhaseWise(schedule) => {
                if schedule.is_empty() {
                    return Err(Error::InvalidArgument("empty phase schedule".into()));
                }
                for (i, &(phase, p)) in schedule.iter().enumerate() {
                    if phase != i {
                        return Err(Error::InvalidArgument(format!(
                            "phase indices must run 0, 1, 2, ... without gaps; found {phase} at position {i}"
                        )));
                    }
                    check_p(p)?;
                }
                Ok(())
            }
            CurriculumPolicy::Learned(model) => {
                if model.input_dim() != cfg.obs_dim() {
                    return Err(Error::Dimension {
                        expected: cfg.obs_dim(),
                        found: model.input_dim(),
                    });
                }
                if model.n_outputs() != cfg.n_bins() {
                    return Err(Error::Dimension {
                        expected: cfg.n_bins(),
                        found: model.n_outputs(),
                    });
                }
                Ok(())
            }
        }
    }

    pub fn describe(&self) -> String {
        match self {
            CurriculumPolicy::Fixed(p) => format!("fixed(p={p})"),
            CurriculumPolicy::PhaseWise(s) => {
                let ps: Vec<String> = s.iter().map(|(_, p)| p.to_string()).collect();
                format!("phase_wise[{}]", ps.join(","))
            }
            CurriculumPolicy::Learned(m) => format!("learned(layers={:?})", m.layer_sizes()),
        }
    }

    /// Driver executing this policy on `trainee` for a run seeded with `seed`.
    pub fn driver(
        &self,
        cfg: &RunConfig,
        seed: u64,
        trainee: &dyn Trainee,
    ) -> Result<PolicyDriver> {
        self.validate(cfg)?;
        let prototypes = match self {
            CurriculumPolicy::Learned(_) => Some(PrototypeBatch::sample(
                &trainee.bin_sizes(),
                cfg.prototype_per_bin,
                &mut seeded_rng(seed, "prototypes"),
            )?),
            _ => None,
        };
        Ok(PolicyDriver {
            policy: self.clone(),
            n_bins: trainee.n_bins(),
            phase_len: cfg.phase_len(),
            warmup: cfg.warmup_steps,
            normalize: cfg.normalize_observations,
            prototypes,
            rng: seeded_rng(seed, "policy"),
        })
    }

    /// Driver for callers that supply observations themselves (the decision server).
    pub fn detached_driver(&self, cfg: &RunConfig, seed: u64) -> Result<PolicyDriver> {
        self.validate(cfg)?;
        Ok(PolicyDriver {
            policy: self.clone(),
            n_bins: cfg.n_bins(),
            phase_len: cfg.phase_len(),
            warmup: cfg.warmup_steps,
            normalize: cfg.normalize_observations,
            prototypes: None,
            rng: seeded_rng(seed, "policy"),
        })
    }
}

/// Bin 0 with probability `p`; otherwise bin 1, or a uniform non-zero bin when there are more.
pub fn draw_fixed(p: f64, n_bins: usize, rng: &mut Stream) -> BinId {
    let u: f64 = rng.random();
    if u < p {
        BinId(0)
    } else if n_bins <= 2 {
        BinId(1)
    } else {
        BinId(rng.random_range(1..n_bins))
    }
}

pub struct PolicyDriver {
    policy: CurriculumPolicy,
    n_bins: usize,
    phase_len: u64,
    warmup: u64,
    normalize: bool,
    prototypes: Option<PrototypeBatch>,
    rng: Stream,
}

impl PolicyDriver {
    pub fn policy(&self) -> &CurriculumPolicy {
        &self.policy
    }

    /// Sampling probability of bin 0 at `step`, for the stochastic variants.
    pub fn probability_at(&self, step: u64) -> Option<f64> {
        match &self.policy {
            CurriculumPolicy::Fixed(p) => Some(*p),
            CurriculumPolicy::PhaseWise(s) => {
                let phase = (step / self.phase_len.max(1)) as usize;
                s.get(phase).or(s.last()).map(|&(_, p)| p)
            }
            CurriculumPolicy::Learned(_) => None,
        }
    }
}

impl PolicyDriver {
    /// Swap the reward model of a learned policy (online refits).
    pub fn set_model(&mut self, model: Arc<MlpModel>) -> Result<()> {
        match &mut self.policy {
            CurriculumPolicy::Learned(m) => {
                *m = model;
                Ok(())
            }
            _ => Err(Error::InvalidArgument("only learned policies carry a model".into())),
        }
    }

    /// Whether `decide` at `step` needs an observation.
    pub fn needs_observation(&self, step: u64) -> bool {
        matches!(self.policy, CurriculumPolicy::Learned(_)) && step >= self.warmup
    }

    /// Input width a learned policy expects, if any.
    pub fn obs_dim(&self) -> Option<usize> {
        match &self.policy {
            CurriculumPolicy::Learned(m) => Some(m.input_dim()),
            _ => None,
        }
    }

    /// Bin for `step` given raw (unnormalized) prototype scores.
    /// Scores are ignored by the stochastic variants and during warmup.
    pub fn decide(&mut self, step: u64, scores: Option<&[f64]>) -> Result<BinId> {
        if let Some(p) = self.probability_at(step) {
            return Ok(draw_fixed(p, self.n_bins, &mut self.rng));
        }
        let CurriculumPolicy::Learned(model) = &self.policy else {
            unreachable!("stochastic variants handled above")
        };
        if step < self.warmup {
            return Ok(draw_fixed(0.5, self.n_bins, &mut self.rng));
        }
        let scores = scores.ok_or_else(|| {
            Error::InvalidArgument(format!("learned policy needs an observation at step {step}"))
        })?;
        if self.normalize {
            let mut v = scores.to_vec();
            z_score(&mut v);
            model.greedy(&v)
        } else {
            model.greedy(scores)
        }
    }
}

impl Driver for PolicyDriver {
    fn choose(&mut self, trainee: &mut dyn Trainee) -> Result<BinId> {
        let step = trainee.steps_taken();
        if !self.needs_observation(step) {
            return self.decide(step, None);
        }
        let prototypes = self.prototypes.as_ref().expect("learned driver has prototypes");
        let obs = observe(trainee, prototypes, false)?;
        self.decide(step, Some(&obs.scores))
    }
}

/// On-disk policy description. Learned models are stored in a separate container file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyFile {
    Fixed { p: f64 },
    PhaseWise { schedule: Vec<(usize, f64)> },
    Learned { model: PathBuf },
}

impl PolicyFile {
    /// Read a policy file; a relative model path resolves against the file's directory.
    pub fn load(path: &Path) -> Result<CurriculumPolicy> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let file: PolicyFile = serde_json::from_str(&text)?;
        Ok(match file {
            PolicyFile::Fixed { p } => CurriculumPolicy::Fixed(p),
            PolicyFile::PhaseWise { schedule } => CurriculumPolicy::PhaseWise(schedule),
            PolicyFile::Learned { model } => {
                let model_path = if model.is_relative() {
                    path.parent().unwrap_or(Path::new(".")).join(model)
                } else {
                    model
                };
                let bytes = std::fs::read(&model_path).map_err(|e| Error::file(&model_path, e))?;
                CurriculumPolicy::Learned(Arc::new(MlpModel::from_bytes(&bytes)?))
            }
        })
    }

    /// Write `policy` to `path`; a learned model goes to `model_name` beside it.
    pub fn save(policy: &CurriculumPolicy, path: &Path, model_name: &str) -> Result<()> {
        let file = match policy {
            CurriculumPolicy::Fixed(p) => PolicyFile::Fixed { p: *p },
            CurriculumPolicy::PhaseWise(s) => PolicyFile::PhaseWise { schedule: s.clone() },
            CurriculumPolicy::Learned(model) => {
                let model_path = path.parent().unwrap_or(Path::new(".")).join(model_name);
                std::fs::write(&model_path, model.to_bytes())
                    .map_err(|e| Error::file(&model_path, e))?;
                PolicyFile::Learned {
                    model: PathBuf::from(model_name),
                }
            }
        };
        let text = serde_json::to_string_pretty(&file)?;
        std::fs::write(path, text).map_err(|e| Error::file(path, e))
    }
}
