//! Command-line front end. Exit codes: 0 success, 1 configuration or usage
//! error, 2 failure while running.

use std::ffi::OsString;
use std::fs;
use std::io::{self, BufReader, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use serde_json::Value;

use crate::config::{RunConfig, Scale};
use crate::error::{Error, Result};
use crate::orchestrator::{
    end_to_end, evaluate_policy, load_reports, run_campaign, Campaign, CampaignKind, Summary,
};
use crate::policy::PolicyFile;
use crate::protocol::{DecisionServer, EventLog, TrainerServer};
use crate::search::continued_training;
use crate::trainee::{SpecFactory, TraineeCheckpoint};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "curriculum",
    version,
    about = "Search and learn data-sampling curricula over bins of training data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON config layered over the defaults, or `default` for none
    #[arg(long, default_value = "default", global = true)]
    pub config: String,
    /// Override a config key after loading, e.g. `--set trainee_spec.relatedness=0.5` (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Output directory for artifacts
    #[arg(long, default_value = "out", global = true)]
    pub out: PathBuf,
    /// Base seed (overrides the config's `seed`)
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Default profile: full-size constants or the short desk-scale run
    #[arg(long, value_enum, default_value_t = Scale::Full, global = true)]
    pub scale: Scale,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ServeMode {
    /// Answer `observe` with `action` from a policy file
    Decisions,
    /// Host the configured synthetic trainee for a remote engine
    Trainer,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Single-bin and upsampled-mix baselines on every seed
    Baselines(#[command(flatten)] Common),
    /// Fixed-ratio grid search over `candidates`
    Grid(#[command(flatten)] Common),
    /// Phase-wise pruned tree search (beam width one)
    Tree(#[command(flatten)] Common),
    /// Multi-agent bandit campaign, pooled final policy and one evaluation run
    Bandit(#[command(flatten)] Common),
    /// Train fresh trainees under a stored policy on every seed
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Policy file (as written by grid, tree or bandit campaigns)
        #[arg(long)]
        policy: PathBuf,
    },
    /// Fine-tune a stored trainee checkpoint on bin 0 with early stopping
    Continue {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Defaults to the config's `continued_patience`
        #[arg(long)]
        patience: Option<usize>,
    },
    /// Run a protocol server
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = ServeMode::Decisions)]
        mode: ServeMode,
        /// Policy file (decisions mode)
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: String,
        /// Speak the protocol on stdin/stdout for one session instead of listening
        #[arg(long)]
        stdio: bool,
        /// Keep learning from rewards (decisions mode, learned policies)
        #[arg(long)]
        online: bool,
        /// Append every protocol line to this file
        #[arg(long)]
        log: Option<PathBuf>,
        /// Exit after this many sessions
        #[arg(long)]
        max_sessions: Option<usize>,
    },
    /// Re-render the summary table from stored reports
    Report {
        #[command(flatten)]
        common: Common,
        /// Directory of report files (or a campaign directory containing `reports/`)
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Every campaign plus continued training; one comparison table
    EndToEnd(#[command(flatten)] Common),
}

/// One-line descriptions of the config keys, in schema order.
const KEY_DOCS: &[(&str, &str)] = &[
    ("seed", "base seed; searches use seed, seed+1, ..."),
    ("bins", "data bins; bin 0 is the target"),
    ("batch_size", "samples per training step"),
    ("total_steps", "trainee steps per run"),
    ("warmup_steps", "steps of 50/50 sampling before the bandit acts"),
    ("prototype_per_bin", "prototype samples per bin in each observation"),
    ("reward_interval", "steps between perplexity evaluations / rewards"),
    ("reward_window", "evaluations back the reward differences against"),
    ("epsilon_start", "exploration rate at the end of warmup"),
    ("epsilon_floor", "exploration rate after decay"),
    ("epsilon_decay_steps", "post-warmup steps of linear decay"),
    ("bandit_update_cadence", "post-warmup steps between bandit refits"),
    ("n_agents", "concurrent bandit agents"),
    ("trainee_spec", "synthetic trainee parameters or {kind: remote, address, timeout_secs}"),
    ("n_seeds", "seeds aggregated by searches and tables"),
    ("candidates", "bin-0 sampling probabilities searched"),
    ("tree_phases", "tree-search phases (null: as many bin-0 epochs as fit)"),
    ("hidden_width", "bandit reward-model hidden width"),
    ("hidden_layers", "bandit reward-model hidden layers"),
    ("learning_rate", "RMSProp learning rate"),
    ("rmsprop_decay", "RMSProp squared-gradient decay"),
    ("fit_batch_size", "mini-batch size of bandit refits"),
    ("final_policy_epochs", "passes over the pooled buffer for the final policy"),
    ("continued_patience", "non-improving epoch evaluations before continued training stops"),
    ("normalize_observations", "z-score observation vectors"),
];

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(map) if !prefix.is_empty() => {
            for (k, v) in map {
                flatten(&format!("{prefix}.{k}"), v, out);
            }
        }
        _ => out.push((prefix.to_string(), v.to_string())),
    }
}

/// Help text listing every config key with its default (and desk-scale value where different).
pub fn config_help() -> String {
    let full = serde_json::to_value(RunConfig::default()).expect("config serializes");
    let small = serde_json::to_value(RunConfig::profile(Scale::Small)).expect("config serializes");
    let mut s = String::from("Config keys (default; [--scale small value]):\n");
    for (key, doc) in KEY_DOCS {
        let mut rows = Vec::new();
        flatten(key, &full[key], &mut rows);
        let mut small_rows = Vec::new();
        flatten(key, &small[key], &mut small_rows);
        if rows.len() == 1 {
            let d = &rows[0].1;
            let alt = if small_rows[0].1 != *d {
                format!(" [{}]", small_rows[0].1)
            } else {
                String::new()
            };
            s.push_str(&format!("  {key} = {d}{alt}\n      {doc}\n"));
        } else {
            s.push_str(&format!("  {key}: {doc}\n"));
            for (k, d) in rows {
                s.push_str(&format!("    {k} = {d}\n"));
            }
        }
    }
    s
}

enum Failure {
    Config(Error),
    Runtime(Error),
}

fn load_config(common: &Common) -> Result<RunConfig, Failure> {
    let path = (common.config != "default").then(|| Path::new(&common.config));
    let mut overrides = common.overrides.clone();
    if let Some(seed) = common.seed {
        overrides.push(format!("seed={seed}"));
    }
    RunConfig::load(path, common.scale, &overrides).map_err(Failure::Config)
}

fn runtime<T>(r: Result<T>) -> Result<T, Failure> {
    r.map_err(Failure::Runtime)
}

fn print_summary(summary: &Summary) {
    print!("{}", summary.to_text());
}

fn campaign(kind: CampaignKind, common: &Common) -> Result<(), Failure> {
    let cfg = load_config(common)?;
    let factory = SpecFactory::new(&cfg);
    let summary = runtime(run_campaign(
        &Campaign {
            kind,
            cfg,
            out_dir: common.out.clone(),
        },
        &factory,
    ))?;
    print_summary(&summary);
    Ok(())
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Baselines(c) => campaign(CampaignKind::Baselines, &c),
        Command::Grid(c) => campaign(CampaignKind::Grid, &c),
        Command::Tree(c) => campaign(CampaignKind::Tree, &c),
        Command::Bandit(c) => campaign(CampaignKind::Bandit, &c),
        Command::Evaluate { common, policy } => {
            let cfg = load_config(&common)?;
            let policy = PolicyFile::load(&policy).map_err(Failure::Config)?;
            policy.validate(&cfg).map_err(Failure::Config)?;
            let factory = SpecFactory::new(&cfg);
            let eval = runtime(evaluate_policy(&policy, &cfg, &factory, &cfg.seeds()))?;
            let dir = common.out.join("reports");
            for r in &eval.reports {
                runtime(r.write_file(&dir.join(format!("evaluate_seed{}.json", r.seed))))?;
            }
            let summary = Summary::from_reports(&eval.reports);
            runtime(summary.write(&common.out))?;
            print_summary(&summary);
            Ok(())
        }
        Command::Continue {
            common,
            checkpoint,
            patience,
        } => {
            let cfg = load_config(&common)?;
            let start = TraineeCheckpoint::read_file(&checkpoint).map_err(Failure::Config)?;
            let factory = SpecFactory::new(&cfg);
            let patience = patience.unwrap_or(cfg.continued_patience);
            let outcome = runtime(continued_training(&start, &cfg, &factory, cfg.seed, patience))?;
            runtime(outcome.report.write_file(&common.out.join("reports").join("continued.json")))?;
            runtime(outcome.best.write_file(&common.out.join("checkpoints").join("continued_best.ckpt")))?;
            let summary = Summary::from_reports([&outcome.report]);
            runtime(summary.write(&common.out))?;
            println!("starting perplexity {}", outcome.starting_perplexity);
            print_summary(&summary);
            Ok(())
        }
        Command::Serve {
            common,
            mode,
            policy,
            listen,
            stdio,
            online,
            log,
            max_sessions,
        } => {
            let cfg = load_config(&common)?;
            let log = match log {
                Some(p) => {
                    let f = fs::OpenOptions::new()
                        .create(true)
                        .append(true)
                        .open(&p)
                        .map_err(|e| Failure::Config(Error::file(&p, e)))?;
                    Some(Arc::new(EventLog::new(f)))
                }
                None => None,
            };
            match mode {
                ServeMode::Decisions => {
                    let Some(path) = policy else {
                        return Err(Failure::Config(Error::InvalidArgument(
                            "decisions mode needs --policy".into(),
                        )));
                    };
                    let policy = PolicyFile::load(&path).map_err(Failure::Config)?;
                    let mut server = DecisionServer::new(policy, cfg)
                        .and_then(|s| s.online(online))
                        .map_err(Failure::Config)?;
                    if let Some(log) = log {
                        server = server.with_log(log);
                    }
                    if stdio {
                        let stdin = io::stdin();
                        runtime(server.session(0, stdin.lock(), io::stdout().lock()).map(drop))
                    } else {
                        let listener = bind(&listen)?;
                        runtime(server.serve(&listener, max_sessions))
                    }
                }
                ServeMode::Trainer => {
                    if cfg.synthetic().is_none() {
                        return Err(Failure::Config(Error::InvalidArgument(
                            "trainer mode hosts the synthetic trainee; trainee_spec must be synthetic".into(),
                        )));
                    }
                    let mut server = TrainerServer::new(SpecFactory::new(&cfg));
                    if let Some(log) = log {
                        server = server.with_log(log);
                    }
                    if stdio {
                        let stdin = io::stdin();
                        runtime(server.session(0, BufReader::new(stdin.lock()), io::stdout().lock()))
                    } else {
                        let listener = bind(&listen)?;
                        runtime(server.serve(&listener, max_sessions))
                    }
                }
            }
        }
        Command::Report { common, input } => {
            let dir = if input.join("reports").is_dir() {
                input.join("reports")
            } else {
                input
            };
            let reports = load_reports(&dir).map_err(Failure::Config)?;
            let summary = Summary::from_reports(&reports);
            print_summary(&summary);
            if common.out != Path::new("out") {
                runtime(summary.write(&common.out))?;
            }
            Ok(())
        }
        Command::EndToEnd(common) => {
            let cfg = load_config(&common)?;
            let factory = SpecFactory::new(&cfg);
            let summary = runtime(end_to_end(&cfg, &factory))?;
            runtime(summary.write(&common.out))?;
            print_summary(&summary);
            Ok(())
        }
    }
}

fn bind(addr: &str) -> Result<TcpListener, Failure> {
    let listener = TcpListener::bind(addr).map_err(|e| Failure::Runtime(Error::Io(e)))?;
    if let Ok(a) = listener.local_addr() {
        eprintln!("listening on {a}");
    }
    Ok(listener)
}

/// Parse `args` (including the program name) and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let help = config_help();
    let command = Cli::command()
        .after_long_help(help.clone())
        .mut_subcommands(|s| s.after_long_help(help.clone()));
    let matches = match command.try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return EXIT_CONFIG;
        }
    };
    let result = execute(cli.command);
    let _ = io::stdout().flush();
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}
