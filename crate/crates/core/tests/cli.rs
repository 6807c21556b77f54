use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_curriculum"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

#[test]
fn help_documents_every_config_key() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&["--help"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let help = text(&out.stdout);
    let keys = serde_json::to_value(curriculum::RunConfig::default()).unwrap();
    for key in keys.as_object().unwrap().keys() {
        assert!(help.contains(&format!("  {key}")), "--help misses {key}");
    }
    assert!(help.contains("warmup_steps = 5000 [100]"));
    let sub = text(&cli(&["grid", "--help"], dir.path()).stdout);
    assert!(sub.contains("bandit_update_cadence = 500"));
}

#[test]
fn missing_config_file_exits_1_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&["grid", "--config", "nowhere.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("nowhere.json"));
}

#[test]
fn invalid_config_lists_every_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(
        &["baselines", "--scale", "small", "--set", "warmup_steps=5000", "--set", "epsilon_floor=2"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let err = text(&out.stderr);
    assert!(err.contains("warmup"), "{err}");
    assert!(err.contains("epsilon_floor"), "{err}");
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cli(&["fly"], dir.path()).status.code(), Some(1));
    assert_eq!(cli(&["grid", "--scale", "huge"], dir.path()).status.code(), Some(1));
}

#[test]
fn unreachable_remote_trainee_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("remote.json");
    std::fs::write(
        &cfg,
        r#"{"trainee_spec": {"kind": "remote", "address": "127.0.0.1:1", "timeout_secs": 1}}"#,
    )
    .unwrap();
    let out = cli(
        &["baselines", "--scale", "small", "--config", cfg.to_str().unwrap(), "--set", "n_seeds=1"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2), "{}", text(&out.stderr));
}

#[test]
fn grid_campaign_artifacts_and_report_rerender() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["grid", "--scale", "small", "--seed", "1", "--set", "n_seeds=2", "--out", "g"];
    let out = cli(&args, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let g = dir.path().join("g");
    assert_eq!(std::fs::read_dir(g.join("reports")).unwrap().count(), 11 * 2);
    assert_eq!(std::fs::read_dir(g.join("checkpoints")).unwrap().count(), 11 * 2);
    let curve = std::fs::read_to_string(g.join("curve.csv")).unwrap();
    let rows: Vec<&str> = curve.lines().collect();
    assert_eq!(rows[0], "p,mean_final_perplexity");
    assert_eq!(rows.len(), 12);
    let ps: Vec<f64> = rows[1..].iter().map(|r| r.split(',').next().unwrap().parse().unwrap()).collect();
    assert!(ps.windows(2).all(|w| w[0] < w[1]));

    // Re-running overwrites with identical bytes.
    let summary = std::fs::read(g.join("summary.csv")).unwrap();
    assert_eq!(cli(&args, dir.path()).status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(g.join("curve.csv")).unwrap(), curve);
    assert_eq!(std::fs::read(g.join("summary.csv")).unwrap(), summary);

    let re = cli(&["report", "--in", "g"], dir.path());
    assert_eq!(re.status.code(), Some(0));
    assert_eq!(text(&re.stdout), text(&out.stdout));
}

#[test]
fn evaluate_and_continue_from_campaign_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let base = ["--scale", "small", "--set", "n_seeds=2"];
    let run = |extra: &[&str]| {
        let mut a: Vec<&str> = extra.to_vec();
        a.extend_from_slice(&base);
        cli(&a, dir.path())
    };
    assert_eq!(run(&["baselines", "--out", "b"]).status.code(), Some(0));
    assert_eq!(std::fs::read_dir(dir.path().join("b/reports")).unwrap().count(), 3 * 2);
    let out = run(&["continue", "--checkpoint", "b/checkpoints/upsampled_mix_seed0.ckpt", "--out", "c"]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    assert!(dir.path().join("c/checkpoints/continued_best.ckpt").exists());

    std::fs::write(dir.path().join("p.json"), r#"{"kind":"fixed","p":0.5}"#).unwrap();
    let out = run(&["evaluate", "--policy", "p.json", "--out", "e"]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    // The evaluation reproduces the mix baseline exactly.
    let a = curriculum::RunReport::read_file(&dir.path().join("e/reports/evaluate_seed1.json")).unwrap();
    let b = curriculum::RunReport::read_file(&dir.path().join("b/reports/upsampled_mix_seed1.json")).unwrap();
    assert_eq!(a.actions, b.actions);
    assert_eq!(a.final_validation_perplexity, b.final_validation_perplexity);

    let out = run(&["evaluate", "--policy", "missing.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn serve_decisions_over_stdio() {
    use std::io::Write;
    use std::process::Stdio;
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("p.json"), r#"{"kind":"fixed","p":1.0}"#).unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_curriculum"))
        .args(["serve", "--policy", "p.json", "--stdio"])
        .current_dir(dir.path())
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(
            b"{\"type\":\"hello\",\"protocol_version\":1,\"obs_dim\":2,\"n_bins\":2}\n\
              {\"type\":\"observe\",\"scores\":[0,0],\"step\":6000}\n{\"type\":\"bye\"}\n",
        )
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let lines: Vec<String> = text(&out.stdout).lines().map(String::from).collect();
    assert_eq!(lines[1], r#"{"type":"action","bin":0}"#);
    assert_eq!(lines[2], r#"{"type":"bye"}"#);
}
