//! One PASS/FAIL line per acceptance criterion, tolerances pinned below.
//! Exits non-zero when any criterion fails.

mod common;

use std::net::TcpListener;
use std::thread;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use common::{desk, desk_with, factory, rigged, rigged_cfg};
use curriculum::bandit::{run_agent, EpsilonSchedule, Gradients, MlpModel, RmsProp};
use curriculum::config::{RunConfig, TraineeSpec};
use curriculum::orchestrator::{end_to_end, evaluate_policy, run_bandit_campaign};
use curriculum::protocol::{RemoteTrainee, TrainerServer};
use curriculum::report::RunReport;
use curriculum::rng::seeded_rng;
use curriculum::search::{grid_search, pruned_tree_search, run_policy};
use curriculum::trainee::{SpecFactory, SyntheticTrainee, Trainee, TraineeFactory};
use curriculum::{BinId, CurriculumPolicy, ObservationVector, Transition};

const FD_REL_TOL: f64 = 1e-4;
const FD_STEP: f64 = 1e-6;
const RMSPROP_TOL: f64 = 1e-9;
const TELESCOPE_TOL: f64 = 1e-9;
const FLAT_TOL: f64 = 1e-6;
const RIGGED_MIN_SHARE: f64 = 0.95;
const BANDIT_SLACK: f64 = 1.05;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn within(t: Instant, limit_s: f64) -> (bool, String) {
    let s = t.elapsed().as_secs_f64();
    (s < limit_s, format!("{s:.2} s (limit {limit_s} s)"))
}

fn transition(obs: Vec<f64>, action: usize, reward: f64) -> Transition {
    Transition {
        observation: ObservationVector { scores: obs, step: 0 },
        action: BinId(action),
        reward,
        step: 0,
        agent_id: 0,
    }
}

fn c1_gradient_check() -> Outcome {
    let t0 = Instant::now();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut worst: f64 = 0.0;
    for pair in 0..20u64 {
        let mut rng = seeded_rng(pair, "acceptance/fd");
        let model = MlpModel::new(&[4, 8, 8, 2], RmsProp::default(), &mut rng).unwrap();
        let obs: Vec<f64> = (0..4).map(|_| normal.sample(&mut rng)).collect();
        let t = transition(obs, rng.random_range(0..2), normal.sample(&mut rng));
        let (_, grads) = model.loss_and_gradients(&[&t]).unwrap();
        let analytic = grads.flat();
        let mut m = model.clone();
        for (i, &a) in analytic.iter().enumerate() {
            let w = m.param(i);
            m.set_param(i, w + FD_STEP);
            let up = m.loss(&[&t]).unwrap();
            m.set_param(i, w - FD_STEP);
            let down = m.loss(&[&t]).unwrap();
            m.set_param(i, w);
            let numeric = (up - down) / (2.0 * FD_STEP);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    let (fast, time) = within(t0, 5.0);
    outcome(
        worst < FD_REL_TOL && fast,
        format!("max relative error {worst:.2e} (tol < {FD_REL_TOL:e}) over 20 pairs, {time}"),
    )
}

fn c2_rmsprop_hand_step() -> Outcome {
    let mut m = MlpModel::zeros(&[1, 1], RmsProp::default()).unwrap();
    let mut g = Gradients::zeros_like(&m);
    g.layers[0].weights[0] = 1.0;
    m.rmsprop_step(&g).unwrap();
    let expected = -0.00025 / (0.05f64.sqrt() + 1e-8);
    let got = m.layers()[0].weights[0];
    let err = (got - expected).abs();
    outcome(
        err < RMSPROP_TOL,
        format!("w = {got:e}, expected {expected:e}, |diff| {err:.1e} (tol < {RMSPROP_TOL:e})"),
    )
}

fn c3_epsilon() -> Outcome {
    let s = EpsilonSchedule::default();
    let got: Vec<f64> = [0, 12_500, 25_000, 1_000_000].iter().map(|&t| s.value(t)).collect();
    let want = [1.0, 0.505, 0.01, 0.01];
    outcome(got == want, format!("eps(0, 12500, 25000, 1e6) = {got:?}, exact"))
}

fn c4_tree_vs_enumeration() -> Outcome {
    let t0 = Instant::now();
    let cfg = desk_with(|c| c.n_seeds = 3);
    let f = factory(&cfg);
    let cands = [0.0, 0.5, 1.0];
    let tree = pruned_tree_search(&cfg, &f, &cands, 2, &cfg.seeds()).unwrap();
    // Full enumeration: every depth-1 node and all 9 leaves.
    let score = |sched: Vec<(usize, f64)>| {
        let mut c = cfg.clone();
        c.total_steps = sched.len() as u64 * cfg.phase_len();
        let e = evaluate_policy(&CurriculumPolicy::PhaseWise(sched), &c, &f, &cfg.seeds()).unwrap();
        mean(&e.final_perplexities())
    };
    let depth1: Vec<f64> = cands.iter().map(|&p| score(vec![(0, p)])).collect();
    let leaves: Vec<Vec<f64>> = cands
        .iter()
        .map(|&a| cands.iter().map(|&b| score(vec![(0, a), (1, b)])).collect())
        .collect();
    let argmin = |v: &[f64]| (0..v.len()).fold(0, |b, i| if v[i] < v[b] { i } else { b });
    let i = argmin(&depth1);
    let j = argmin(&leaves[i]);
    let greedy = vec![(0, cands[i]), (1, cands[j])];
    let (fast, time) = within(t0, 30.0);
    outcome(
        tree.schedule == greedy && fast,
        format!("tree {:?}, enumeration greedy path {greedy:?}, {time}", tree.schedule),
    )
}

/// Independent oracle: drives the trainee directly with its own Bernoulli draws.
fn oracle_final_ppl(cfg: &RunConfig, p: f64, seed: u64) -> f64 {
    let mut t = SyntheticTrainee::new(cfg.synthetic().unwrap(), seed).unwrap();
    let mut rng = seeded_rng(seed, "policy");
    for _ in 0..cfg.total_steps {
        let u: f64 = rng.random();
        t.train_step(if u < p { BinId(0) } else { BinId(1) }).unwrap();
    }
    t.validation_perplexity().unwrap()
}

fn c5_grid_vs_brute_force() -> Outcome {
    let t0 = Instant::now();
    let cfg = desk();
    let g = grid_search(&cfg, &factory(&cfg), &cfg.candidates, &cfg.seeds()).unwrap();
    let mut best = (f64::INFINITY, f64::NAN);
    for &p in &cfg.candidates {
        let m = mean(&cfg.seeds().iter().map(|&s| oracle_final_ppl(&cfg, p, s)).collect::<Vec<_>>());
        if m < best.0 {
            best = (m, p);
        }
    }
    let (fast, time) = within(t0, 120.0);
    outcome(
        g.best_p == best.1 && fast,
        format!("grid best_p {} vs oracle {} (11 x 10 seeds), {time}", g.best_p, best.1),
    )
}

fn c6_degenerate_relatedness() -> Outcome {
    let unrelated = desk_with(|c| c.synthetic_mut().unwrap().relatedness = 0.0);
    let g0 = grid_search(&unrelated, &factory(&unrelated), &unrelated.candidates, &unrelated.seeds()).unwrap();
    let same = desk_with(|c| {
        let s = c.synthetic_mut().unwrap();
        s.relatedness = 1.0;
        s.noise_sigma = vec![0.0, 0.0];
    });
    let g1 = grid_search(&same, &factory(&same), &same.candidates, &same.seeds()).unwrap();
    let means: Vec<f64> = g1.curve.iter().map(|c| c.mean_perplexity).collect();
    let m = mean(&means);
    let spread = means.iter().map(|x| (x - m).abs()).fold(0.0, f64::max);
    outcome(
        g0.best_p == 1.0 && spread < FLAT_TOL,
        format!(
            "rho=0 best_p {}; rho=1 sigma=0 max |curve - mean| {spread:.2e} (tol < {FLAT_TOL:e})",
            g0.best_p
        ),
    )
}

fn max_telescoping_gap(reports: &[&RunReport]) -> f64 {
    reports
        .iter()
        .map(|r| {
            let first = r.records.iter().position(|x| x.reward.is_some()).unwrap();
            let last = r.records.iter().rposition(|x| x.reward.is_some()).unwrap();
            let sum: f64 = r.rewards().sum();
            let net = r.records[first - 1].validation_perplexity - r.records[last].validation_perplexity;
            if r.records[first..=last].iter().all(|x| x.reward.is_some()) {
                (sum - net).abs()
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max)
}

fn c7_rigged(reports: &mut Vec<RunReport>) -> Outcome {
    let t0 = Instant::now();
    let cfg = rigged_cfg();
    let campaign = run_bandit_campaign(&cfg, &rigged).unwrap();
    let jitter = Normal::new(0.0, 0.1).unwrap();
    let mut rng = seeded_rng(0, "acceptance/probes");
    let probes = 1000;
    let hits = (0..probes)
        .filter(|_| {
            let obs: Vec<f64> = (0..cfg.obs_dim()).map(|_| -1.0 + jitter.sample(&mut rng)).collect();
            campaign.model.greedy(&obs).unwrap() == BinId(0)
        })
        .count();
    let share = hits as f64 / probes as f64;
    reports.extend(campaign.agents.into_iter().map(|a| a.report));
    let (fast, time) = within(t0, 60.0);
    outcome(
        share >= RIGGED_MIN_SHARE && fast,
        format!("final policy picks bin 0 on {:.1}% of {probes} probes (need >= 95%), 5 agents x 2000 steps, {time}", share * 100.0),
    )
}

fn c9_determinism(reports: &mut Vec<RunReport>) -> Outcome {
    let cfg = desk_with(|c| c.seed = 42);
    let f = factory(&cfg);
    let a = run_bandit_campaign(&cfg, &f).unwrap();
    let b = run_bandit_campaign(&cfg, &f).unwrap();
    let same_buf = a.pooled.to_bytes() == b.pooled.to_bytes();
    let same_model = a.model.to_bytes() == b.model.to_bytes();
    reports.extend(a.agents.into_iter().map(|x| x.report));
    outcome(
        same_buf && same_model,
        format!("pooled buffers identical: {same_buf}; final-policy parameters identical: {same_model}"),
    )
}

fn c13_loopback() -> Outcome {
    let cfg = desk();
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let server = TrainerServer::new(SpecFactory::new(&cfg));
    let h = thread::spawn(move || server.serve(&listener, Some(2)).unwrap());

    let mut remote_cfg = cfg.clone();
    remote_cfg.trainee_spec = TraineeSpec::Remote {
        address: addr.clone(),
        timeout_secs: 60.0,
    };
    let policy = CurriculumPolicy::Fixed(0.5);
    let (a, _) = run_policy(&policy, &cfg, &SpecFactory::new(&cfg), 7).unwrap();
    let (b, _) = run_policy(&policy, &remote_cfg, &SpecFactory::new(&remote_cfg), 7).unwrap();
    let fixed_same = a == b;

    let local = SpecFactory::new(&cfg).make(7).unwrap();
    let mut local = local;
    let x = run_agent(0, &cfg, local.as_mut(), 7).unwrap();
    let mut remote = RemoteTrainee::connect(&addr, Duration::from_secs(60), 7).unwrap();
    let y = run_agent(0, &cfg, &mut remote, 7).unwrap();
    drop(remote);
    h.join().unwrap();
    let bandit_same = x.report == y.report;
    outcome(
        fixed_same && bandit_same,
        format!("fixed(0.5) run identical: {fixed_same}; bandit agent run identical: {bandit_same} (seed 7, {} steps)", cfg.total_steps),
    )
}

fn main() {
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut bandit_reports = Vec::new();
    results.push((1, "MLP gradient vs central finite differences", c1_gradient_check()));
    results.push((2, "RMSProp single-step hand example", c2_rmsprop_hand_step()));
    results.push((3, "epsilon schedule fixed points", c3_epsilon()));
    results.push((4, "pruned tree search vs 9-leaf enumeration", c4_tree_vs_enumeration()));
    results.push((5, "grid best_p vs brute-force oracle", c5_grid_vs_brute_force()));
    results.push((6, "degenerate relatedness (rho=0, rho=1)", c6_degenerate_relatedness()));
    results.push((7, "rigged environment, pooled final policy", c7_rigged(&mut bandit_reports)));
    let c9 = c9_determinism(&mut bandit_reports);

    let cfg = desk();
    let table = end_to_end(&cfg, &factory(&cfg)).unwrap();
    let row = |name: &str| {
        table
            .rows
            .iter()
            .find(|r| r.name.starts_with(name))
            .unwrap_or_else(|| panic!("missing row {name}"))
    };
    let gap = max_telescoping_gap(&bandit_reports.iter().collect::<Vec<_>>());
    results.push((
        8,
        "telescoping reward sum (window 1)",
        outcome(
            gap < TELESCOPE_TOL,
            format!("max |sum(rewards) - net perplexity drop| {gap:.2e} over {} agent runs (tol < {TELESCOPE_TOL:e})", bandit_reports.len()),
        ),
    ));
    results.push((9, "bandit campaign determinism (seed 42)", c9));

    let (b0, b1, mix) = (row("bin0_only"), row("bin1_only"), row("upsampled_mix"));
    results.push((
        10,
        "mixed beats both single-bin baselines",
        outcome(
            mix.mean < b1.mean && mix.mean < b0.mean,
            format!("mixed {:.6}, bin1-only {:.6}, bin0-only {:.6} (mean final perplexity, 10 seeds)", mix.mean, b1.mean, b0.mean),
        ),
    ));
    let (grid, grid_c) = (row("grid_best"), row("grid_best + continued"));
    results.push((
        11,
        "grid-best + continued <= grid-best and <= mixed",
        outcome(
            grid.mean - grid_c.mean >= 0.0 && mix.mean - grid_c.mean >= 0.0,
            format!("{} {:.6}, + continued {:.6}, mixed {:.6}", grid.name, grid.mean, grid_c.mean, mix.mean),
        ),
    ));
    let bandit = row("bandit");
    results.push((
        12,
        "bandit final policy <= mixed x 1.05",
        outcome(
            bandit.mean <= mix.mean * BANDIT_SLACK,
            format!("bandit {:.6} vs limit {:.6} (mixed {:.6} x {BANDIT_SLACK})", bandit.mean, mix.mean * BANDIT_SLACK, mix.mean),
        ),
    ));
    results.push((13, "loopback protocol run equals in-process run", c13_loopback()));

    results.sort_by_key(|r| r.0);
    println!();
    print!("{}", table.to_text());
    println!();
    let mut failed = 0;
    for (n, name, o) in &results {
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!o.pass);
        println!("criterion {n:>2} {verdict}  {name}: {}", o.detail);
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
