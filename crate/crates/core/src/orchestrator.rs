//! Campaigns: run a family of experiments, persist every artifact, summarize.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandit::{optimizer, run_agent, train_final_policy, AgentOutcome, MlpModel, ReplayBuffer};
use crate::config::RunConfig;
use crate::container::write_creating;
use crate::error::{Error, Result};
use crate::policy::{CurriculumPolicy, PolicyFile};
use crate::report::RunReport;
use crate::rng::seeded_rng;
use crate::search::{
    continued_training, grid_search, pruned_tree_search, run_baseline, run_policy, BaselineKind,
    GridSearchResult,
};
use crate::trainee::{TraineeCheckpoint, TraineeFactory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CampaignKind {
    Baselines,
    Grid,
    Tree,
    Bandit,
}

#[derive(Debug, Clone)]
pub struct Campaign {
    pub kind: CampaignKind,
    pub cfg: RunConfig,
    pub out_dir: PathBuf,
}

/// Mean and sample standard deviation of final perplexity for one named policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl SummaryRow {
    pub fn from_values(name: impl Into<String>, values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n.max(1) as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self {
            name: name.into(),
            mean,
            sd,
            n,
        }
    }
}

/// Flat policy → final perplexity table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
}

impl Summary {
    pub fn row(&self, name: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// Group reports by `policy_used`, in order of first appearance.
    pub fn from_reports<'a>(reports: impl IntoIterator<Item = &'a RunReport>) -> Self {
        let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
        for r in reports {
            match groups.iter_mut().find(|(n, _)| *n == r.policy_used) {
                Some((_, v)) => v.push(r.final_validation_perplexity),
                None => groups.push((r.policy_used.clone(), vec![r.final_validation_perplexity])),
            }
        }
        Self {
            rows: groups
                .into_iter()
                .map(|(name, v)| SummaryRow::from_values(name, &v))
                .collect(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("policy,mean_perplexity,sd_perplexity,n\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{}", r.name, r.mean, r.sd, r.n);
        }
        s
    }

    /// Aligned plain-text table.
    pub fn to_text(&self) -> String {
        let width = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max(6);
        let mut s = format!("{:<width$}  {:>14}  {:>12}  {:>4}\n", "policy", "perplexity", "sd", "n");
        for r in &self.rows {
            let _ = writeln!(s, "{:<width$}  {:>14.6}  {:>12.6}  {:>4}", r.name, r.mean, r.sd, r.n);
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
        write_text(&dir.join("summary.csv"), &self.to_csv())?;
        write_text(&dir.join("summary.txt"), &self.to_text())
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_creating(path, text.as_bytes())
}

/// Orders `seed2` before `seed10`: digit runs compare numerically.
fn natural_key(s: &str) -> Vec<(String, u128)> {
    let mut key = Vec::new();
    let mut text = String::new();
    let mut chars = s.chars().peekable();
    while let Some(c) = chars.next() {
        if c.is_ascii_digit() {
            let mut n = c.to_digit(10).unwrap() as u128;
            while let Some(d) = chars.peek().and_then(|d| d.to_digit(10)) {
                n = n.saturating_mul(10).saturating_add(d as u128);
                chars.next();
            }
            key.push((std::mem::take(&mut text), n));
        } else {
            text.push(c);
        }
    }
    key.push((text, 0));
    key
}

/// Load every `*.json` report under `dir`, in natural file-name order.
pub fn load_reports(dir: &Path) -> Result<Vec<RunReport>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::file(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort_by_cached_key(|p| natural_key(&p.file_name().unwrap_or_default().to_string_lossy()));
    paths.iter().map(|p| RunReport::read_file(p)).collect()
}

/// Plot-ready `p,mean_final_perplexity` rows, ascending in `p`.
pub fn export_curve(grid: &GridSearchResult) -> String {
    let mut s = String::from("p,mean_final_perplexity\n");
    for c in &grid.curve {
        let _ = writeln!(s, "{},{}", c.p, c.mean_perplexity);
    }
    s
}

/// Final states and reports of one policy trained on several seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyEvaluation {
    pub reports: Vec<RunReport>,
    pub checkpoints: Vec<TraineeCheckpoint>,
}

impl PolicyEvaluation {
    pub fn final_perplexities(&self) -> Vec<f64> {
        self.reports.iter().map(|r| r.final_validation_perplexity).collect()
    }
}

/// Fresh runs of `policy` on every seed.
pub fn evaluate_policy(
    policy: &CurriculumPolicy,
    cfg: &RunConfig,
    factory: &dyn TraineeFactory,
    seeds: &[u64],
) -> Result<PolicyEvaluation> {
    let runs: Vec<(RunReport, TraineeCheckpoint)> = seeds
        .par_iter()
        .map(|&s| run_policy(policy, cfg, factory, s))
        .collect::<Result<_>>()?;
    let (reports, checkpoints) = runs.into_iter().unzip();
    Ok(PolicyEvaluation {
        reports,
        checkpoints,
    })
}

/// Continued training from each checkpoint, seed by seed; returns the best-state reports.
fn continue_all(
    checkpoints: &[TraineeCheckpoint],
    cfg: &RunConfig,
    factory: &dyn TraineeFactory,
    seeds: &[u64],
) -> Result<Vec<RunReport>> {
    checkpoints
        .par_iter()
        .zip(seeds.par_iter())
        .map(|(cp, &s)| {
            Ok(continued_training(cp, cfg, factory, s, cfg.continued_patience)?.report)
        })
        .collect()
}

/// Everything a bandit campaign produces.
#[derive(Debug, Clone)]
pub struct BanditCampaign {
    pub agents: Vec<AgentOutcome>,
    pub pooled: ReplayBuffer,
    pub model: Arc<MlpModel>,
    pub policy: CurriculumPolicy,
}

/// Run `cfg.n_agents` independent agents (agent `i` seeded `cfg.seed + i`), pool
/// their buffers in agent order and fit the final greedy policy on the pool.
pub fn run_bandit_campaign(cfg: &RunConfig, factory: &dyn TraineeFactory) -> Result<BanditCampaign> {
    if cfg.n_agents == 0 {
        return Err(Error::InvalidArgument("n_agents must be >= 1".into()));
    }
    let agents: Vec<AgentOutcome> = (0..cfg.n_agents)
        .into_par_iter()
        .map(|i| {
            let seed = cfg.seed.wrapping_add(i as u64);
            let mut trainee = factory.make(seed)?;
            run_agent(i as u32, cfg, trainee.as_mut(), seed)
        })
        .collect::<Result<_>>()?;
    let pooled = ReplayBuffer::merge(agents.iter().map(|a| &a.buffer));
    let init = MlpModel::new(
        &cfg.layer_sizes(),
        optimizer(cfg),
        &mut seeded_rng(cfg.seed, "final-policy/init"),
    )?;
    let (policy, model) = train_final_policy(
        &pooled,
        cfg.final_policy_epochs,
        init,
        cfg.fit_batch_size,
        &mut seeded_rng(cfg.seed, "final-policy/shuffle"),
    )?;
    Ok(BanditCampaign {
        agents,
        pooled,
        model,
        policy,
    })
}

fn seed_file(prefix: &str, seed: u64, ext: &str) -> String {
    format!("{prefix}_seed{seed}.{ext}")
}

/// Execute a campaign and write its artifacts:
/// `reports/*.json`, `checkpoints/*.ckpt`, `buffers/*.buf`, `summary.csv`, `summary.txt`,
/// plus kind-specific extras (`curve.csv`, `policy.json`, `phases.csv`, `models/`).
/// On failure, artifacts written so far stay in place.
pub fn run_campaign(c: &Campaign, factory: &dyn TraineeFactory) -> Result<Summary> {
    let cfg = &c.cfg;
    let out = &c.out_dir;
    let reports_dir = out.join("reports");
    let ckpt_dir = out.join("checkpoints");
    fs::create_dir_all(&reports_dir).map_err(|e| Error::file(&reports_dir, e))?;
    fs::create_dir_all(&ckpt_dir).map_err(|e| Error::file(&ckpt_dir, e))?;
    write_text(&out.join("config.json"), &cfg.to_json_pretty())?;
    let seeds = cfg.seeds();

    let summary = match c.kind {
        CampaignKind::Baselines => {
            let mut reports = Vec::new();
            for kind in BaselineKind::ALL {
                for &s in &seeds {
                    let (mut report, cp) = run_baseline(kind, cfg, factory, s)?;
                    report.policy_used = kind.name().to_string();
                    report.write_file(&reports_dir.join(seed_file(kind.name(), s, "json")))?;
                    cp.write_file(&ckpt_dir.join(seed_file(kind.name(), s, "ckpt")))?;
                    reports.push(report);
                }
            }
            Summary::from_reports(&reports)
        }
        CampaignKind::Grid => {
            let grid = grid_search(cfg, factory, &cfg.candidates, &seeds)?;
            for e in &grid.evaluations {
                let stem = format!("grid_p{:.4}", e.p);
                e.report.write_file(&reports_dir.join(seed_file(&stem, e.seed, "json")))?;
                e.checkpoint.write_file(&ckpt_dir.join(seed_file(&stem, e.seed, "ckpt")))?;
            }
            write_text(&out.join("curve.csv"), &export_curve(&grid))?;
            PolicyFile::save(&CurriculumPolicy::Fixed(grid.best_p), &out.join("policy.json"), "")?;
            Summary::from_reports(grid.evaluations.iter().map(|e| &e.report))
        }
        CampaignKind::Tree => {
            let phases = cfg.tree_phase_count();
            let tree = pruned_tree_search(cfg, factory, &cfg.candidates, phases, &seeds)?;
            let mut phases_csv = String::from("phase,p,mean_perplexity,chosen\n");
            for ph in &tree.phase_scores {
                for &(p, m) in &ph.candidates {
                    let _ = writeln!(phases_csv, "{},{},{},{}", ph.phase, p, m, u8::from(p == ph.chosen));
                }
            }
            write_text(&out.join("phases.csv"), &phases_csv)?;
            let policy = tree.policy();
            PolicyFile::save(&policy, &out.join("policy.json"), "")?;
            for (s, cp) in &tree.final_checkpoints {
                cp.write_file(&ckpt_dir.join(seed_file("tree", *s, "ckpt")))?;
            }
            // Replay the schedule so the campaign leaves full reports behind.
            let mut replay_cfg = cfg.clone();
            replay_cfg.total_steps = phases as u64 * cfg.phase_len();
            let eval = evaluate_policy(&policy, &replay_cfg, factory, &seeds)?;
            for r in &eval.reports {
                r.write_file(&reports_dir.join(seed_file("tree", r.seed, "json")))?;
            }
            Summary::from_reports(&eval.reports)
        }
        CampaignKind::Bandit => {
            let campaign = run_bandit_campaign(cfg, factory)?;
            let buf_dir = out.join("buffers");
            for a in &campaign.agents {
                a.report
                    .write_file(&reports_dir.join(format!("agent_{}.json", a.agent_id)))?;
            }
            write_creating(&buf_dir.join("pooled.buf"), &campaign.pooled.to_bytes())?;
            let mut csv = Vec::new();
            campaign.pooled.write_csv(&mut csv)?;
            write_creating(&buf_dir.join("pooled.csv"), &csv)?;
            let models = out.join("models");
            fs::create_dir_all(&models).map_err(|e| Error::file(&models, e))?;
            PolicyFile::save(&campaign.policy, &out.join("policy.json"), "models/final_policy.model")?;
            let (mut report, cp) = run_policy(&campaign.policy, cfg, factory, cfg.seed)?;
            report.policy_used = "final_policy".into();
            report.write_file(&reports_dir.join("final_policy.json"))?;
            cp.write_file(&ckpt_dir.join("final_policy.ckpt"))?;
            let mut reports: Vec<RunReport> = campaign.agents.into_iter().map(|a| a.report).collect();
            reports.push(report);
            Summary::from_reports(&reports)
        }
    };
    summary.write(out)?;
    Ok(summary)
}

/// Row names of the end-to-end table, in order.
pub const END_TO_END_ROWS: [&str; 10] = [
    "bin0_only",
    "bin1_only",
    "upsampled_mix",
    "upsampled_mix + continued",
    "grid_best",
    "grid_best + continued",
    "tree",
    "tree + continued",
    "bandit",
    "bandit + continued",
];

/// Every campaign kind plus continued training on top of the mix, grid-best, tree
/// and bandit policies, all scored on `cfg.seeds()`. The bandit's agents run once
/// (seeds `cfg.seed + i`); its final policy is evaluated on every seed.
pub fn end_to_end(cfg: &RunConfig, factory: &dyn TraineeFactory) -> Result<Summary> {
    let seeds = cfg.seeds();
    let mut rows = Vec::new();
    let finals = |rs: &[RunReport]| -> Vec<f64> {
        rs.iter().map(|r| r.final_validation_perplexity).collect()
    };

    let mut mix_cps = Vec::new();
    for kind in BaselineKind::ALL {
        let runs: Vec<(RunReport, TraineeCheckpoint)> = seeds
            .par_iter()
            .map(|&s| run_baseline(kind, cfg, factory, s))
            .collect::<Result<_>>()?;
        let (reports, cps): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
        rows.push(SummaryRow::from_values(kind.name(), &finals(&reports)));
        if kind == BaselineKind::UpsampledMix {
            mix_cps = cps;
        }
    }
    let cont = continue_all(&mix_cps, cfg, factory, &seeds)?;
    rows.push(SummaryRow::from_values("upsampled_mix + continued", &finals(&cont)));

    let grid = grid_search(cfg, factory, &cfg.candidates, &seeds)?;
    let best: Vec<&_> = grid.evaluations_for(grid.best_p).collect();
    let best_reports: Vec<RunReport> = best.iter().map(|e| e.report.clone()).collect();
    let best_cps: Vec<TraineeCheckpoint> = best.iter().map(|e| e.checkpoint.clone()).collect();
    rows.push(SummaryRow::from_values(format!("grid_best (p={})", grid.best_p), &finals(&best_reports)));
    let cont = continue_all(&best_cps, cfg, factory, &seeds)?;
    rows.push(SummaryRow::from_values("grid_best + continued", &finals(&cont)));

    let tree = pruned_tree_search(cfg, factory, &cfg.candidates, cfg.tree_phase_count(), &seeds)?;
    rows.push(SummaryRow::from_values("tree", &tree.final_perplexities));
    let tree_cps: Vec<TraineeCheckpoint> = tree.final_checkpoints.iter().map(|(_, c)| c.clone()).collect();
    let cont = continue_all(&tree_cps, cfg, factory, &seeds)?;
    rows.push(SummaryRow::from_values("tree + continued", &finals(&cont)));

    let bandit = run_bandit_campaign(cfg, factory)?;
    let eval = evaluate_policy(&bandit.policy, cfg, factory, &seeds)?;
    rows.push(SummaryRow::from_values("bandit", &eval.final_perplexities()));
    let cont = continue_all(&eval.checkpoints, cfg, factory, &seeds)?;
    rows.push(SummaryRow::from_values("bandit + continued", &finals(&cont)));

    Ok(Summary { rows })
}
