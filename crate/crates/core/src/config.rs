//! Run configuration: schema, defaults, scale profiles and validation.
//!
//! Defaults are the values used for full-size training runs. The `small` scale
//! profile shrinks the step-denominated constants in proportion to a short run so
//! that whole campaigns finish in seconds.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Run length the full-size step constants are expressed against.
pub const REFERENCE_TOTAL_STEPS: u64 = 100_000;
/// Run length of the `small` scale profile.
pub const DESK_TOTAL_STEPS: u64 = 2_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    #[default]
    Full,
    Small,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinSpec {
    pub name: String,
    /// Samples making up one epoch of this bin. Filled from the trainee's
    /// dataset size when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epoch_size: Option<u64>,
}

impl BinSpec {
    pub fn named(name: &str) -> Self {
        Self {
            name: name.to_string(),
            epoch_size: None,
        }
    }
}

/// Parameters of the quadratic student-teacher trainee.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticTraineeSpec {
    pub dim: usize,
    /// Cosine between the bin-0 target and every other bin's target.
    pub relatedness: f64,
    pub noise_sigma: Vec<f64>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub samples_per_bin: Vec<usize>,
    pub validation_size: usize,
}

impl Default for SyntheticTraineeSpec {
    fn default() -> Self {
        Self {
            dim: 16,
            relatedness: 0.7,
            noise_sigma: vec![0.05, 0.05],
            learning_rate: 0.05,
            batch_size: 8,
            samples_per_bin: vec![512, 1536],
            validation_size: 256,
        }
    }
}

impl SyntheticTraineeSpec {
    pub fn n_bins(&self) -> usize {
        self.samples_per_bin.len()
    }

    pub fn check(&self) -> Vec<ConfigError> {
        let mut errs = Vec::new();
        if !(self.relatedness.abs() <= 1.0) {
            errs.push(ConfigError::Relatedness(self.relatedness));
        }
        if self.dim < 2 {
            errs.push(ConfigError::TraineeDim {
                dim: self.dim,
                n_bins: self.n_bins(),
            });
        } else if self.dim < self.n_bins() {
            errs.push(ConfigError::TraineeDim {
                dim: self.dim,
                n_bins: self.n_bins(),
            });
        }
        if self.noise_sigma.len() != self.samples_per_bin.len() {
            errs.push(ConfigError::TraineeShape(format!(
                "noise_sigma has {} entries but samples_per_bin has {}",
                self.noise_sigma.len(),
                self.samples_per_bin.len()
            )));
        }
        if self.noise_sigma.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            errs.push(ConfigError::TraineeShape(
                "noise_sigma entries must be finite and >= 0".into(),
            ));
        }
        if self.samples_per_bin.iter().any(|&n| n == 0)
            || self.batch_size == 0
            || self.validation_size == 0
        {
            errs.push(ConfigError::TraineeShape("all sizes must be >= 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            errs.push(ConfigError::TraineeShape(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        errs
    }
}

fn default_timeout_secs() -> f64 {
    300.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraineeSpec {
    Synthetic(SyntheticTraineeSpec),
    Remote {
        address: String,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: f64,
    },
}

impl Default for TraineeSpec {
    fn default() -> Self {
        TraineeSpec::Synthetic(SyntheticTraineeSpec::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub bins: Vec<BinSpec>,
    pub batch_size: usize,
    pub total_steps: u64,
    pub warmup_steps: u64,
    pub prototype_per_bin: usize,
    pub reward_interval: u64,
    pub reward_window: usize,
    pub epsilon_start: f64,
    pub epsilon_floor: f64,
    pub epsilon_decay_steps: u64,
    pub bandit_update_cadence: u64,
    pub n_agents: usize,
    pub trainee_spec: TraineeSpec,

    /// Number of seeds (`seed`, `seed + 1`, ...) aggregated by searches and tables.
    pub n_seeds: usize,
    /// Fixed sampling probabilities of bin 0 explored by grid and tree search.
    pub candidates: Vec<f64>,
    /// Tree-search phase count; defaults to as many whole bin-0 epochs as fit in `total_steps`.
    pub tree_phases: Option<usize>,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub learning_rate: f64,
    pub rmsprop_decay: f64,
    pub fit_batch_size: usize,
    pub final_policy_epochs: usize,
    pub continued_patience: usize,
    pub normalize_observations: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            bins: vec![BinSpec::named("ne-en"), BinSpec::named("hi-en")],
            batch_size: 8,
            total_steps: REFERENCE_TOTAL_STEPS,
            warmup_steps: 5000,
            prototype_per_bin: 32,
            reward_interval: 10,
            reward_window: 1,
            epsilon_start: 1.0,
            epsilon_floor: 0.01,
            epsilon_decay_steps: 25_000,
            bandit_update_cadence: 500,
            n_agents: 5,
            trainee_spec: TraineeSpec::default(),
            n_seeds: 1,
            candidates: default_candidates(),
            tree_phases: None,
            hidden_width: 256,
            hidden_layers: 2,
            learning_rate: 0.00025,
            rmsprop_decay: 0.95,
            fit_batch_size: 32,
            final_policy_epochs: 5,
            continued_patience: 3,
            normalize_observations: false,
        }
    }
}

/// `{0.0, 0.1, ..., 1.0}`.
pub fn default_candidates() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

impl RunConfig {
    /// Default configuration for a scale profile.
    pub fn profile(scale: Scale) -> Self {
        match scale {
            Scale::Full => Self::default(),
            Scale::Small => Self::scaled_to(DESK_TOTAL_STEPS),
        }
    }

    /// Defaults with the step-denominated constants shrunk to a `total_steps` run.
    ///
    /// Warmup and epsilon decay keep their share of the run (5% and 25%). The
    /// refit cadence keeps the number of refits per post-warmup step at one per
    /// `500 * ratio` steps but never drops below five reward intervals.
    pub fn scaled_to(total_steps: u64) -> Self {
        let base = Self::default();
        let ratio = total_steps as f64 / REFERENCE_TOTAL_STEPS as f64;
        let interval = base.reward_interval;
        let round_to_interval = |v: f64| -> u64 {
            let steps = (v / interval as f64).round() as u64 * interval;
            steps.max(interval)
        };
        Self {
            total_steps,
            warmup_steps: round_to_interval(base.warmup_steps as f64 * ratio),
            epsilon_decay_steps: ((base.epsilon_decay_steps as f64 * ratio).round() as u64).max(1),
            bandit_update_cadence: round_to_interval(base.bandit_update_cadence as f64 * ratio)
                .max(DESK_MIN_CADENCE_INTERVALS * interval),
            n_seeds: 10,
            ..base
        }
    }

    pub fn n_bins(&self) -> usize {
        self.bins.len()
    }

    pub fn obs_dim(&self) -> usize {
        self.n_bins() * self.prototype_per_bin
    }

    /// Seeds aggregated by searches: `seed, seed + 1, ...`.
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.n_seeds as u64).map(|i| self.seed.wrapping_add(i)).collect()
    }

    pub fn synthetic(&self) -> Option<&SyntheticTraineeSpec> {
        match &self.trainee_spec {
            TraineeSpec::Synthetic(s) => Some(s),
            TraineeSpec::Remote { .. } => None,
        }
    }

    pub fn synthetic_mut(&mut self) -> Option<&mut SyntheticTraineeSpec> {
        match &mut self.trainee_spec {
            TraineeSpec::Synthetic(s) => Some(s),
            TraineeSpec::Remote { .. } => None,
        }
    }

    /// Samples in one epoch of `bin` (after validation this is always known for synthetic trainees).
    pub fn epoch_size(&self, bin: usize) -> Option<u64> {
        self.bins.get(bin).and_then(|b| b.epoch_size).or_else(|| {
            self.synthetic()
                .and_then(|s| s.samples_per_bin.get(bin))
                .map(|&n| n as u64)
        })
    }

    /// Steps in one epoch of bin-0 data: `ceil(epoch_size / batch_size)`.
    pub fn phase_len(&self) -> u64 {
        let epoch = self.epoch_size(0).unwrap_or(self.batch_size as u64).max(1);
        epoch.div_ceil(self.batch_size.max(1) as u64)
    }

    pub fn tree_phase_count(&self) -> usize {
        self.tree_phases
            .unwrap_or_else(|| (self.total_steps / self.phase_len()).max(1) as usize)
    }

    /// Layer widths of the bandit reward model.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.obs_dim()];
        sizes.extend(std::iter::repeat_n(self.hidden_width, self.hidden_layers));
        sizes.push(self.n_bins());
        sizes
    }

    /// Fill defaults that depend on other fields and check every invariant.
    /// All violations are reported together.
    pub fn validate(mut self) -> Result<Self, ConfigErrors> {
        let mut errs = Vec::new();
        if self.bins.is_empty() {
            errs.push(ConfigError::NoBins);
        } else if self.bins.len() < 2 {
            errs.push(ConfigError::TooFewBins(self.bins.len()));
        }
        if self.warmup_steps >= self.total_steps {
            errs.push(ConfigError::WarmupNotBeforeTotal {
                warmup: self.warmup_steps,
                total: self.total_steps,
            });
        }
        if self.reward_interval < 1 {
            errs.push(ConfigError::Zero("reward_interval"));
        }
        if self.reward_window < 1 {
            errs.push(ConfigError::Zero("reward_window"));
        }
        for (name, v) in [
            ("epsilon_start", self.epsilon_start),
            ("epsilon_floor", self.epsilon_floor),
        ] {
            if !(0.0..=1.0).contains(&v) {
                errs.push(ConfigError::Probability { field: name, value: v });
            }
        }
        if self.epsilon_floor > self.epsilon_start {
            errs.push(ConfigError::EpsilonOrder {
                floor: self.epsilon_floor,
                start: self.epsilon_start,
            });
        }
        for (name, v) in [
            ("batch_size", self.batch_size as u64),
            ("prototype_per_bin", self.prototype_per_bin as u64),
            ("epsilon_decay_steps", self.epsilon_decay_steps),
            ("bandit_update_cadence", self.bandit_update_cadence),
            ("n_agents", self.n_agents as u64),
            ("n_seeds", self.n_seeds as u64),
            ("hidden_width", self.hidden_width as u64),
            ("fit_batch_size", self.fit_batch_size as u64),
        ] {
            if v == 0 {
                errs.push(ConfigError::Zero(name));
            }
        }
        if self.candidates.is_empty() {
            errs.push(ConfigError::NoCandidates);
        }
        for &p in &self.candidates {
            if !(0.0..=1.0).contains(&p) {
                errs.push(ConfigError::Probability {
                    field: "candidates",
                    value: p,
                });
            }
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            errs.push(ConfigError::Range {
                field: "learning_rate",
                value: self.learning_rate,
            });
        }
        if !(0.0..1.0).contains(&self.rmsprop_decay) {
            errs.push(ConfigError::Range {
                field: "rmsprop_decay",
                value: self.rmsprop_decay,
            });
        }
        if self.tree_phases == Some(0) {
            errs.push(ConfigError::Zero("tree_phases"));
        }
        for b in &self.bins {
            if b.epoch_size == Some(0) {
                errs.push(ConfigError::Zero("bins[].epoch_size"));
            }
        }

        let n_bins = self.bins.len();
        let batch_size = self.batch_size;
        let prototypes = self.prototype_per_bin;
        match &mut self.trainee_spec {
            TraineeSpec::Synthetic(spec) => {
                errs.extend(spec.check());
                if spec.n_bins() != n_bins {
                    errs.push(ConfigError::TraineeShape(format!(
                        "trainee has {} bins but config lists {n_bins}",
                        spec.n_bins()
                    )));
                }
                if spec.batch_size != batch_size {
                    errs.push(ConfigError::BatchMismatch {
                        run: batch_size,
                        trainee: spec.batch_size,
                    });
                }
                if let Some(&smallest) = spec.samples_per_bin.iter().min() {
                    if prototypes > smallest {
                        errs.push(ConfigError::TooManyPrototypes {
                            per_bin: prototypes,
                            smallest_bin: smallest,
                        });
                    }
                }
                for (bin, &n) in self.bins.iter_mut().zip(spec.samples_per_bin.iter()) {
                    bin.epoch_size.get_or_insert(n as u64);
                }
            }
            TraineeSpec::Remote {
                address,
                timeout_secs,
            } => {
                if address.is_empty() {
                    errs.push(ConfigError::TraineeShape("remote address is empty".into()));
                }
                if !(timeout_secs.is_finite() && *timeout_secs > 0.0) {
                    errs.push(ConfigError::Range {
                        field: "trainee_spec.timeout_secs",
                        value: *timeout_secs,
                    });
                }
            }
        }

        if errs.is_empty() {
            Ok(self)
        } else {
            Err(ConfigErrors(errs))
        }
    }

    /// Load a JSON document layered over the defaults of `scale`, apply dotted
    /// `key=value` overrides, then validate.
    pub fn load(path: Option<&Path>, scale: Scale, overrides: &[String]) -> Result<Self> {
        let mut doc = serde_json::to_value(Self::profile(scale))?;
        if let Some(path) = path {
            let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
            let file: Value = serde_json::from_str(&text).map_err(|e| {
                ConfigErrors(vec![ConfigError::Parse(format!("{}: {e}", path.display()))])
            })?;
            merge(&mut doc, file);
        }
        for ov in overrides {
            apply_override(&mut doc, ov).map_err(|e| ConfigErrors(vec![e]))?;
        }
        let cfg: Self = serde_json::from_value(doc)
            .map_err(|e| ConfigErrors(vec![ConfigError::Parse(e.to_string())]))?;
        Ok(cfg.validate()?)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Cadence floor of the scaled profiles, in reward intervals.
const DESK_MIN_CADENCE_INTERVALS: u64 = 5;

/// Recursive object merge; non-object values in `over` replace those in `base`.
fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    // A tagged object switching variant replaces the old one wholesale.
                    Some(slot) if slot.is_object() && v.is_object() && same_kind(slot, &v) => {
                        merge(slot, v)
                    }
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn same_kind(a: &Value, b: &Value) -> bool {
    match (a.get("kind"), b.get("kind")) {
        (Some(x), Some(y)) => x == y,
        _ => true,
    }
}

/// Apply `a.b.c=value`. The value is parsed as JSON when possible, else taken as a string.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError::Override(format!("`{assignment}` is not key=value")))?;
    let value: Value =
        serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut slot = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(ConfigError::Override(format!("empty key segment in `{key}`")));
        }
        let last = i + 1 == parts.len();
        slot = match slot {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.entry(part.to_string())
                    .or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = part.parse().map_err(|_| {
                    ConfigError::Override(format!("`{part}` is not an index in `{key}`"))
                })?;
                let len = items.len();
                let item = items.get_mut(idx).ok_or_else(|| {
                    ConfigError::Override(format!("index {idx} out of range ({len}) in `{key}`"))
                })?;
                if last {
                    *item = value;
                    return Ok(());
                }
                item
            }
            _ => {
                return Err(ConfigError::Override(format!(
                    "`{key}` descends into a non-container value"
                )))
            }
        };
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    NoBins,
    TooFewBins(usize),
    WarmupNotBeforeTotal { warmup: u64, total: u64 },
    Zero(&'static str),
    Probability { field: &'static str, value: f64 },
    Range { field: &'static str, value: f64 },
    EpsilonOrder { floor: f64, start: f64 },
    NoCandidates,
    Relatedness(f64),
    TraineeDim { dim: usize, n_bins: usize },
    TraineeShape(String),
    BatchMismatch { run: usize, trainee: usize },
    TooManyPrototypes { per_bin: usize, smallest_bin: usize },
    Parse(String),
    Override(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ConfigError::*;
        match self {
            NoBins => write!(f, "at least one bin is required (zero bins configured)"),
            TooFewBins(n) => write!(f, "at least 2 bins are required, got {n}"),
            WarmupNotBeforeTotal { warmup, total } => write!(
                f,
                "warmup must be < total_steps (warmup_steps={warmup}, total_steps={total})"
            ),
            Zero(field) => write!(f, "{field} must be >= 1"),
            Probability { field, value } => {
                write!(f, "{field}: probability {value} out of range [0, 1]")
            }
            Range { field, value } => write!(f, "{field}: value {value} out of range"),
            EpsilonOrder { floor, start } => write!(
                f,
                "epsilon_floor ({floor}) must be <= epsilon_start ({start})"
            ),
            NoCandidates => write!(f, "candidates must be non-empty"),
            Relatedness(r) => write!(f, "trainee relatedness {r} must satisfy |rho| <= 1"),
            TraineeDim { dim, n_bins } => write!(
                f,
                "trainee dim {dim} must be >= 2 and >= the number of bins ({n_bins})"
            ),
            TraineeShape(msg) => write!(f, "trainee_spec: {msg}"),
            BatchMismatch { run, trainee } => write!(
                f,
                "batch_size {run} differs from trainee_spec.batch_size {trainee}"
            ),
            TooManyPrototypes {
                per_bin,
                smallest_bin,
            } => write!(
                f,
                "prototype_per_bin {per_bin} exceeds the smallest bin ({smallest_bin} samples)"
            ),
            Parse(msg) => write!(f, "config parse error: {msg}"),
            Override(msg) => write!(f, "bad override: {msg}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_document_fills_reference_defaults() {
        let cfg: RunConfig = serde_json::from_str("{}").unwrap();
        let cfg = cfg.validate().unwrap();
        assert_eq!(cfg.warmup_steps, 5000);
        assert_eq!(cfg.prototype_per_bin, 32);
        assert_eq!(cfg.reward_interval, 10);
        assert_eq!(cfg.reward_window, 1);
        assert_eq!(cfg.epsilon_decay_steps, 25_000);
        assert_eq!(cfg.epsilon_floor, 0.01);
        assert_eq!(cfg.epsilon_start, 1.0);
        assert_eq!(cfg.bandit_update_cadence, 500);
        assert_eq!(cfg.n_agents, 5);
        assert_eq!(cfg.hidden_width, 256);
        assert_eq!(cfg.learning_rate, 0.00025);
        assert_eq!(cfg.rmsprop_decay, 0.95);
        assert_eq!(cfg.bins[0].epoch_size, Some(512));
        assert_eq!(cfg.bins[1].epoch_size, Some(1536));
        assert_eq!(cfg.obs_dim(), 64);
    }

    #[test]
    fn floor_and_start_accepted() {
        let cfg = RunConfig {
            epsilon_floor: 0.01,
            epsilon_start: 1.0,
            ..RunConfig::default()
        };
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn warmup_equal_total_rejected() {
        let cfg = RunConfig {
            warmup_steps: 100,
            total_steps: 100,
            ..RunConfig::default()
        };
        let errs = cfg.validate().unwrap_err();
        assert_eq!(errs.0.len(), 1);
        assert!(errs.to_string().contains("warmup must be < total_steps"));
    }

    #[test]
    fn every_violation_is_listed() {
        let mut cfg = RunConfig {
            bins: vec![],
            warmup_steps: 10,
            total_steps: 5,
            epsilon_floor: 0.5,
            epsilon_start: 0.2,
            candidates: vec![0.5, 1.5],
            ..RunConfig::default()
        };
        cfg.synthetic_mut().unwrap().relatedness = 2.0;
        let errs = cfg.validate().unwrap_err().0;
        assert!(errs.contains(&ConfigError::NoBins));
        assert!(errs.iter().any(|e| matches!(e, ConfigError::WarmupNotBeforeTotal { .. })));
        assert!(errs.iter().any(|e| matches!(e, ConfigError::EpsilonOrder { .. })));
        assert!(errs.iter().any(|e| matches!(e, ConfigError::Probability { value, .. } if *value == 1.5)));
        assert!(errs.iter().any(|e| matches!(e, ConfigError::Relatedness(_))));
    }

    #[test]
    fn small_profile_scales_step_constants() {
        let cfg = RunConfig::profile(Scale::Small).validate().unwrap();
        assert_eq!(cfg.total_steps, 2000);
        assert_eq!(cfg.warmup_steps, 100);
        assert_eq!(cfg.epsilon_decay_steps, 500);
        assert_eq!(cfg.reward_interval, 10);
        assert_eq!(cfg.prototype_per_bin, 32);
        assert_eq!(cfg.bandit_update_cadence, 50);
        assert_eq!(cfg.n_seeds, 10);
    }

    #[test]
    fn overrides_descend_objects_and_arrays() {
        let mut doc = serde_json::to_value(RunConfig::default()).unwrap();
        apply_override(&mut doc, "trainee_spec.relatedness=0.25").unwrap();
        apply_override(&mut doc, "bins.0.name=target").unwrap();
        apply_override(&mut doc, "total_steps=400").unwrap();
        let cfg: RunConfig = serde_json::from_value(doc.clone()).unwrap();
        assert_eq!(cfg.synthetic().unwrap().relatedness, 0.25);
        assert_eq!(cfg.bins[0].name, "target");
        assert_eq!(cfg.total_steps, 400);
        assert!(apply_override(&mut doc, "novalue").is_err());
        assert!(apply_override(&mut doc, "bins.9.name=x").is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"warmup": 3}"#).is_err());
    }

    #[test]
    fn remote_trainee_round_trips() {
        let cfg = RunConfig {
            trainee_spec: TraineeSpec::Remote {
                address: "127.0.0.1:7000".into(),
                timeout_secs: 300.0,
            },
            ..RunConfig::default()
        };
        let json = serde_json::to_string(&cfg).unwrap();
        assert!(json.contains(r#""kind":"remote""#));
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
    }

    proptest! {
        #[test]
        fn accepted_configs_satisfy_invariants(
            warmup in 0u64..300,
            total in 0u64..300,
            interval in 0u64..20,
            floor in -0.5f64..1.5,
            start in -0.5f64..1.5,
            n_bins in 0usize..4,
            rho in -1.5f64..1.5,
        ) {
            let mut cfg = RunConfig {
                warmup_steps: warmup,
                total_steps: total,
                reward_interval: interval,
                epsilon_floor: floor,
                epsilon_start: start,
                bins: (0..n_bins).map(|i| BinSpec::named(&format!("b{i}"))).collect(),
                ..RunConfig::default()
            };
            {
                let s = cfg.synthetic_mut().unwrap();
                s.relatedness = rho;
                s.samples_per_bin = vec![64; n_bins];
                s.noise_sigma = vec![0.1; n_bins];
            }
            if let Ok(v) = cfg.validate() {
                prop_assert!(v.warmup_steps < v.total_steps);
                prop_assert!(v.reward_interval >= 1);
                prop_assert!(v.epsilon_floor <= v.epsilon_start && v.epsilon_start <= 1.0);
                prop_assert!(v.epsilon_floor >= 0.0);
                prop_assert!(v.n_bins() >= 2);
                prop_assert!(v.synthetic().unwrap().relatedness.abs() <= 1.0);
                prop_assert!(v.bins.iter().all(|b| b.epoch_size.is_some()));
            }
        }
    }
}
