use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"
rng_seed = 7
repetitions = 2
sigma_grid = [0.0, 0.5, 1.0]

[network]
nodes = 200
density = 0.03

[population]
groups = ["HO", "mixed"]

[attack]
sigmas = [0.5]
max_false_identities = 3
repetitions = 3

[bench]
sizes = [100, 200]
large = 300
repetitions = 1

[verify]
oracle_trials = 20
attack_trials = 20
rationality_trials = 20
budget_trials = 20
monotonicity_trials = 20
subgraph_trials = 20
csf_trials = 20
"#;

fn mwc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mwc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn setup() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("small.toml");
    std::fs::write(&config, SMALL).unwrap();
    (dir, config)
}

fn run_dirs(out: &Path) -> Vec<PathBuf> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(out).unwrap().map(|e| e.unwrap().path()).collect();
    dirs.sort();
    dirs
}

fn first_line(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .next()
        .unwrap_or("")
        .to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_config_is_a_usage_error() {
    let o = mwc(&["sweep-noise", "--config", "missing.toml"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("missing.toml"), "{err}");
}

#[test]
fn unknown_subcommand_and_flag_exit_1() {
    assert_eq!(mwc(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(mwc(&["verify", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(mwc(&[]).status.code(), Some(1));
    assert_eq!(mwc(&["--help"]).status.code(), Some(0));
}

#[test]
fn unknown_config_key_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "[mechanism]\nlambada = 0.5\n").unwrap();
    let o = mwc(&["simulate", "--config", config.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("lambada"), "{}", stderr(&o));
}

#[test]
fn invalid_mechanism_parameters_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "[mechanism]\nlambda = 1.5\n").unwrap();
    let o = mwc(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn attack_eval_writes_results() {
    let (dir, config) = setup();
    let out = dir.path().join("runs");
    let o = mwc(&[
        "attack-eval",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let runs = run_dirs(&out);
    assert_eq!(runs.len(), 1);
    assert!(runs[0]
        .file_name()
        .unwrap()
        .to_str()
        .unwrap()
        .starts_with("attack-eval-7-"));
    let csv = runs[0].join("attack_results.csv");
    assert_eq!(
        first_line(&csv),
        "shape,m,sigma,split,trial,baseline,replica_total,normalized"
    );
    // 1 sigma x 3 trials x (0..=3) identities
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 1 + 12);
    assert!(runs[0].join("attack_summary.json").is_file());
    assert!(runs[0].join("run_meta.json").is_file());
}

#[test]
fn simulate_writes_rewards_and_dag() {
    let (dir, config) = setup();
    let out = dir.path().join("runs");
    let o = mwc(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "11",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let run = &run_dirs(&out)[0];
    assert_eq!(
        first_line(&run.join("rewards.csv")),
        "node_id,task_effort,credits,win_prob,pool,pi_t,pi_d,pi_total"
    );
    assert_eq!(first_line(&run.join("referral_dag.txt")), "# mwc-dag v1");
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("run_meta.json")).unwrap()).unwrap();
    assert_eq!(meta["rng_seed"], 11);
    assert_eq!(meta["command"], "simulate");
}

#[test]
fn sweep_noise_writes_results() {
    let (dir, config) = setup();
    let out = dir.path().join("runs");
    let o = mwc(&[
        "sweep-noise",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--threads",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let run = &run_dirs(&out)[0];
    let csv = run.join("noise_results.csv");
    assert_eq!(
        first_line(&csv),
        "experiment_id,sigma,repetition,total_effort,participant_count,avg_effort_per_player,total_payout,payout_ratio,wall_time_ms"
    );
    // 2 populations x 3 sigmas x 2 repetitions
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 1 + 12);
}

#[test]
fn runs_never_overwrite() {
    let (dir, config) = setup();
    let out = dir.path().join("runs");
    for _ in 0..2 {
        let o = mwc(&[
            "bench",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let runs = run_dirs(&out);
    assert_eq!(runs.len(), 2);
    assert_ne!(runs[0], runs[1]);
    assert!(runs.iter().all(|r| r.join("bench.csv").is_file()));
}

#[test]
fn verify_exit_code_follows_report() {
    let (dir, config) = setup();
    let out = dir.path().join("runs");
    let o = mwc(&[
        "verify",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_dirs(&out)[0].join("verify_report.json")).unwrap()).unwrap();
    let all_pass = report["properties"]
        .as_array()
        .unwrap()
        .iter()
        .all(|p| p["violations"] == 0);
    assert_eq!(o.status.code(), Some(if all_pass { 0 } else { 2 }), "{}", stderr(&o));
}

#[test]
fn estimate_probs_from_files() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("edges.tsv"), "0\t1\n1\t2\n").unwrap();
    std::fs::write(
        dir.path().join("actions.csv"),
        "user_id,action_id,timestamp\n0,1,10\n1,1,20\n0,2,30\n2,2,5\n",
    )
    .unwrap();
    let config = dir.path().join("c.toml");
    std::fs::write(&config, "[network]\nedges = \"edges.tsv\"\nactions = \"actions.csv\"\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_mwc"))
        .current_dir(dir.path())
        .args(["estimate-probs", "--config", "c.toml", "--out", "runs"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let run = &run_dirs(&dir.path().join("runs"))[0];
    let text = std::fs::read_to_string(run.join("probabilities.csv")).unwrap();
    assert_eq!(text, "from,to,p\n0,1,0.5\n1,2,0.0\n");
}

#[test]
fn estimate_probs_without_inputs_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = mwc(&["estimate-probs", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}
