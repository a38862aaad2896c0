use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use mwc_core::cascade::estimate_probabilities;
use mwc_lab::config::ExperimentConfig;
use mwc_lab::formats::{read_actions, read_edge_list, write_json, write_probabilities};
use mwc_lab::network::NetworkSource;
use mwc_lab::run_dir::start_run;
use mwc_lab::{attack_eval, bench, noise, simulate, verify, LabError};

/// Multi-winner contest referral rewards: simulations, sweeps and checks.
#[derive(Debug, Parser)]
#[command(name = "mwc", version)]
struct Cli {
    /// TOML experiment config; defaults apply to every missing key.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides `rng_seed`.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Overrides `output_dir`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate influence probabilities from `network.edges` and `network.actions`.
    EstimateProbs,
    /// Run one campaign and settle its rewards.
    Simulate,
    /// Total effort against the noise factor for every population.
    SweepNoise,
    /// Normalized attacker reward against the number of false identities.
    AttackEval,
    /// Time the credit and reward pass against graph size.
    Bench,
    /// Run the property suite; exits with 2 if any property fails.
    Verify,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::EstimateProbs => "estimate-probs",
            Command::Simulate => "simulate",
            Command::SweepNoise => "sweep-noise",
            Command::AttackEval => "attack-eval",
            Command::Bench => "bench",
            Command::Verify => "verify",
        }
    }
}

enum Outcome {
    Done,
    PropertyFailure,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::PropertyFailure) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, LabError> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.rng_seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    Ok(config)
}

fn run(cli: &Cli) -> anyhow::Result<Outcome> {
    let config = load_config(cli)?;
    if let Some(n) = cli.threads {
        anyhow::ensure!(n > 0, "--threads must be at least 1");
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot start worker threads")?;
    }
    let name = cli.command.name();
    match cli.command {
        Command::EstimateProbs => {
            let (edges, actions) = match (&config.network.edges, &config.network.actions) {
                (Some(e), Some(a)) => (e, a),
                _ => anyhow::bail!("estimate-probs needs network.edges and network.actions in the config"),
            };
            let (graph, mut summary) = read_edge_list(edges)?;
            let log = read_actions(actions, graph.node_count())?;
            summary.actions = log.action_count();
            summary.action_records = log.len();
            summary.active_users = log.user_count();
            let probs = estimate_probabilities(&graph, &log)?;
            let dir = start_run(&config, name)?;
            write_probabilities(&dir.join("probabilities.csv"), &probs)?;
            write_json(&dir.join("network_summary.json"), &summary)?;
            println!(
                "{} users, {} edges, {} actions ({} records by {} users)",
                summary.nodes, summary.edges, summary.actions, summary.action_records, summary.active_users
            );
            println!("wrote {}", dir.display());
        }
        Command::Simulate => {
            let network = NetworkSource::from_config(&config)?.network(&config, 0)?;
            let mix = config.population.mix.group_mix().map_err(LabError::from)?;
            let run = simulate::run_campaign(&config, &network, &mix, 4, config.mechanism.sigma, 0)?;
            let dir = start_run(&config, name)?;
            run.write(&dir, &network.summary)?;
            let s = run.summary(&network.summary);
            println!(
                "{} players joined, {} participants, total effort {:.3}, payout ratio {:.4}",
                s.dag_nodes, s.participants, s.total_effort, s.payout_ratio
            );
            println!("wrote {}", dir.display());
        }
        Command::SweepNoise => {
            let sweep = noise::run_noise_sweep(&config)?;
            let dir = start_run(&config, name)?;
            sweep.write(&dir)?;
            for c in noise::curve_shapes(&noise::summarize(&sweep.rows)) {
                println!(
                    "{}: peak effort {:.1} at sigma {}, {:.1}% lower at sigma {}",
                    c.experiment_id,
                    c.peak_effort,
                    c.peak_sigma,
                    100.0 * c.drop_at_lowest,
                    c.lowest_sigma
                );
            }
            let audit = sweep.audit();
            println!(
                "budget audit: {} rows, max payout ratio {:.6}, {} violations",
                audit.rows,
                audit.max_payout_ratio,
                audit.violations.len()
            );
            println!("wrote {}", dir.display());
            if !audit.violations.is_empty() {
                return Ok(Outcome::PropertyFailure);
            }
        }
        Command::AttackEval => {
            let eval = attack_eval::run_attack_eval(&config)?;
            let dir = start_run(&config, name)?;
            eval.write(&dir, &config)?;
            for c in attack_eval::check_curves(&eval.cells) {
                let means: Vec<String> = eval
                    .cells
                    .iter()
                    .filter(|x| x.sigma == c.sigma)
                    .map(|x| format!("{:.3}", x.mean))
                    .collect();
                println!("sigma {}: {}", c.sigma, means.join(" "));
            }
            println!("wrote {}", dir.display());
        }
        Command::Bench => {
            let result = bench::run_bench(&config)?;
            let dir = start_run(&config, name)?;
            result.write(&dir)?;
            for r in result.rows.iter().chain([&result.large]) {
                println!("n = {:>6}, {:>7} edges: {:>10.1} ms", r.nodes, r.edges, r.total_ms);
            }
            println!("growth exponent {:.3}", result.exponent);
            println!("wrote {}", dir.display());
        }
        Command::Verify => {
            let report = verify::run_suite(&config.verify, config.rng_seed);
            let dir = start_run(&config, name)?;
            write_json(&dir.join("verify_report.json"), &report)?;
            for p in &report.properties {
                println!(
                    "{} {:<24} {:>6} checks, {} violations",
                    if p.passed() { "PASS" } else { "FAIL" },
                    p.name,
                    p.checks,
                    p.violations
                );
                if let Some(first) = &p.first_violation {
                    println!("     first violation: {}", first.lines().next().unwrap_or(""));
                }
            }
            println!("wrote {}", dir.display());
            if !report.passed() {
                return Ok(Outcome::PropertyFailure);
            }
        }
    }
    Ok(Outcome::Done)
}
