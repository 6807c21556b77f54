mod common;

use common::{desk_with, factory};
use curriculum::orchestrator::{
    end_to_end, load_reports, run_campaign, Campaign, CampaignKind, Summary, END_TO_END_ROWS,
};
use curriculum::TraineeCheckpoint;

fn files(dir: &std::path::Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

#[test]
fn baselines_campaign_emits_three_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = desk_with(|c| c.n_seeds = 1);
    let c = Campaign {
        kind: CampaignKind::Baselines,
        cfg: cfg.clone(),
        out_dir: dir.path().to_path_buf(),
    };
    let summary = run_campaign(&c, &factory(&cfg)).unwrap();
    assert_eq!(
        files(&dir.path().join("reports")),
        ["bin0_only_seed0.json", "bin1_only_seed0.json", "upsampled_mix_seed0.json"]
    );
    assert_eq!(summary.rows.len(), 3);
    for f in files(&dir.path().join("checkpoints")) {
        let path = dir.path().join("checkpoints").join(f);
        let bytes = std::fs::read(&path).unwrap();
        let cp = TraineeCheckpoint::read_file(&path).unwrap();
        assert_eq!(cp.to_bytes(), bytes);
    }
    let csv = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(csv.starts_with("policy,mean_perplexity,sd_perplexity,n\n"));
}

#[test]
fn bandit_campaign_layout() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = desk_with(|c| c.total_steps = 300);
    let c = Campaign {
        kind: CampaignKind::Bandit,
        cfg: cfg.clone(),
        out_dir: dir.path().to_path_buf(),
    };
    run_campaign(&c, &factory(&cfg)).unwrap();
    assert_eq!(
        files(&dir.path().join("reports")),
        ["agent_0.json", "agent_1.json", "agent_2.json", "agent_3.json", "agent_4.json", "final_policy.json"]
    );
    assert!(files(&dir.path().join("buffers")).contains(&"pooled.buf".to_string()));
    let policy = curriculum::policy::PolicyFile::load(&dir.path().join("policy.json")).unwrap();
    assert!(matches!(policy, curriculum::CurriculumPolicy::Learned(_)));
    let summary = Summary::from_reports(&load_reports(&dir.path().join("reports")).unwrap());
    assert_eq!(summary.rows.len(), 6);
}

#[test]
fn tree_campaign_replays_its_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = desk_with(|c| {
        c.n_seeds = 2;
        c.tree_phases = Some(3);
        c.candidates = vec![0.0, 0.5, 1.0];
    });
    let c = Campaign {
        kind: CampaignKind::Tree,
        cfg: cfg.clone(),
        out_dir: dir.path().to_path_buf(),
    };
    run_campaign(&c, &factory(&cfg)).unwrap();
    // The replayed reports end exactly where the search's kept states were.
    for s in cfg.seeds() {
        let r = curriculum::RunReport::read_file(&dir.path().join(format!("reports/tree_seed{s}.json"))).unwrap();
        let cp = TraineeCheckpoint::read_file(&dir.path().join(format!("checkpoints/tree_seed{s}.ckpt"))).unwrap();
        assert_eq!(r.wall_steps, cp.step);
    }
    let phases = std::fs::read_to_string(dir.path().join("phases.csv")).unwrap();
    assert_eq!(phases.lines().count(), 1 + 3 * 3);
}

#[test]
fn end_to_end_table_shape_and_determinism() {
    let cfg = desk_with(|c| {
        c.total_steps = 400;
        c.n_seeds = 2;
    });
    let f = factory(&cfg);
    let a = end_to_end(&cfg, &f).unwrap();
    assert_eq!(a.rows.len(), END_TO_END_ROWS.len());
    assert!(a.rows.len() >= 9);
    for (row, name) in a.rows.iter().zip(END_TO_END_ROWS) {
        assert!(row.name.starts_with(name), "{} vs {name}", row.name);
        assert_eq!(row.n, 2);
        assert!(row.mean.is_finite() && row.mean >= 1.0);
    }
    let b = end_to_end(&cfg, &f).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    // Continued training keeps the best state, so it never loses to its start.
    for (plain, cont) in [(2, 3), (4, 5), (6, 7), (8, 9)] {
        assert!(a.rows[cont].mean <= a.rows[plain].mean + 1e-12);
    }
}
