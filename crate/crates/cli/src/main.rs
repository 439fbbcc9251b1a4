mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use toml::Value;
use vlc_mvr::sim::{oracle_compare, run, IntuitionScenario, INTUITION_PRESET};
use vlc_mvr::verify::{run_all, Budget};
use vlc_mvr::ScenarioConfig;

use config::Layers;
use output::{metrics_checksum, write_json, write_rows, write_trajectory, Summary};

/// Environment variable naming the default output directory.
const OUT_ENV: &str = "VLC_MVR_OUT";

/// Bad flags, unreadable or invalid configuration; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(name = "vlc-mvr", version, about = "Mobility-aware VLC resource allocation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one scenario and write metrics, trajectory and a summary.
    Run(RunArgs),
    /// Run every combination of user count, look-ahead and seed.
    Sweep(SweepArgs),
    /// Solve every service time with both the relaxation solver and exhaustive search.
    OracleCompare(OracleArgs),
    /// Curvature, stationarity, mobility and handover-timing self-checks.
    Verify(VerifyArgs),
}

#[derive(Args, Debug, Clone)]
struct ScenarioArgs {
    /// Preset to start from (room2ap, room4ap; `run` also accepts intuition).
    #[arg(long, default_value = "room2ap")]
    scenario: String,
    /// TOML file layered over the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Field override such as `solver.max_iterations=500`; `--solver.max_iterations 500` is equivalent.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    overrides: Vec<String>,
    /// Simulated duration in seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Service time in seconds.
    #[arg(long)]
    service_time: Option<f64>,
    /// Output directory [default: $VLC_MVR_OUT, else ./out].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long)]
    users: Option<usize>,
    /// Look-ahead horizon in service times.
    #[arg(long = "T", value_parser = clap::value_parser!(u64).range(1..))]
    horizon: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Comma-separated user counts.
    #[arg(long, value_delimiter = ',', required = true)]
    users: Vec<usize>,
    /// Comma-separated look-ahead horizons.
    #[arg(long = "T", value_delimiter = ',', required = true, value_parser = clap::value_parser!(u64).range(1..))]
    horizons: Vec<u64>,
    /// Seeds as a list (`0,3,7`) or half-open range (`0..10`).
    #[arg(long, required = true)]
    seeds: String,
    /// Simulations run concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long)]
    users: Option<usize>,
    #[arg(long = "T", value_parser = clap::value_parser!(u64).range(1..))]
    horizon: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Maximum number of assignments enumerated per service time.
    #[arg(long)]
    cap: Option<u64>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Reduced sample counts.
    #[arg(long)]
    quick: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse_from(config::expand_dotted_flags(std::env::args())) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::OracleCompare(a) => cmd_oracle_compare(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_usage_error(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn is_usage_error(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.downcast_ref::<UsageError>().is_some()
            || matches!(
                c.downcast_ref::<vlc_mvr::Error>(),
                Some(vlc_mvr::Error::InvalidParameter { .. } | vlc_mvr::Error::EnumerationCap { .. } | vlc_mvr::Error::UnknownPreset(_))
            )
    })
}

fn out_dir(arg: &Option<PathBuf>) -> anyhow::Result<PathBuf> {
    let dir = arg
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating output directory {}", dir.display()))?;
    Ok(dir)
}

fn layers(s: &ScenarioArgs, users: Option<usize>, horizon: Option<u64>, seed: Option<u64>) -> Layers {
    let mut flags: Vec<(&'static str, Value)> = Vec::new();
    if let Some(u) = users {
        flags.push(("users", Value::Integer(u as i64)));
    }
    if let Some(t) = horizon {
        flags.push(("horizon", Value::Integer(t as i64)));
    }
    if let Some(s) = seed {
        flags.push(("seed", Value::Integer(s as i64)));
    }
    if let Some(d) = s.duration {
        flags.push(("duration_s", Value::Float(d)));
    }
    if let Some(t) = s.service_time {
        flags.push(("service_time_s", Value::Float(t)));
    }
    Layers {
        preset: s.scenario.clone(),
        file: s.config.clone(),
        overrides: s.overrides.clone(),
        flags,
    }
}

/// Summary, metrics checksum and wall time of one run.
type RunResult = anyhow::Result<(Summary, String, f64)>;

fn run_stem(cfg: &ScenarioConfig) -> String {
    format!("u{}_T{}_seed{}", cfg.users, cfg.horizon, cfg.seed)
}

/// Runs one scenario and writes `<stem>_metrics.csv`, `<stem>_trajectory.csv`
/// and `<stem>_summary.json` into `dir`.
fn run_to_files(cfg: &ScenarioConfig, dir: &Path, stem: &str) -> RunResult {
    let started = Instant::now();
    let out = run(cfg)?;
    let wall = started.elapsed().as_secs_f64();
    write_rows(&dir.join(format!("{stem}_metrics.csv")), Some(cfg), &[], &out.records)?;
    write_trajectory(&dir.join(format!("{stem}_trajectory.csv")), cfg, &out)?;
    let summary = Summary::new(cfg, &out);
    write_json(&dir.join(format!("{stem}_summary.json")), &summary)?;
    Ok((summary, metrics_checksum(&out), wall))
}

fn cmd_run(a: RunArgs) -> anyhow::Result<ExitCode> {
    if a.scenario.scenario == INTUITION_PRESET {
        return run_intuition(&a.scenario);
    }
    let cfg = config::resolve(&layers(&a.scenario, a.users, a.horizon, a.seed))?;
    let dir = out_dir(&a.scenario.out)?;
    let stem = run_stem(&cfg);
    let (s, checksum, wall) = run_to_files(&cfg, &dir, &stem)?;
    println!(
        "{stem}: {} steps, mean throughput {:.3} Mbit/s, total objective {:.4}, {} handovers, {:.1} s; metrics sha256 {checksum}; files in {}",
        s.steps,
        s.mean_throughput_bps / 1e6,
        s.total_objective,
        s.handovers,
        wall,
        dir.display()
    );
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct StrategyRow {
    first_slot_handovers: usize,
    first_slot_rate_bps: f64,
    second_slot_rate_bps: f64,
    average_rate_bps: f64,
}

fn run_intuition(s: &ScenarioArgs) -> anyhow::Result<ExitCode> {
    let scenario = IntuitionScenario::preset();
    let rows: Vec<StrategyRow> = scenario
        .strategies()?
        .iter()
        .map(|o| StrategyRow {
            first_slot_handovers: o.first_handovers,
            first_slot_rate_bps: o.first_rate,
            second_slot_rate_bps: o.second_rate,
            average_rate_bps: o.average(),
        })
        .collect();
    let dir = out_dir(&s.out)?;
    let path = dir.join("intuition_strategies.csv");
    let header = [format!("scenario = {INTUITION_PRESET}, rate_bps = {}, eta0 = {}", scenario.rate, scenario.eta0)];
    write_rows(&path, None, &header, &rows)?;
    for r in &rows {
        println!(
            "handovers in first slot {}: {:.1} then {:.1} Mbit/s, average {:.1} Mbit/s",
            r.first_slot_handovers,
            r.first_slot_rate_bps / 1e6,
            r.second_slot_rate_bps / 1e6,
            r.average_rate_bps / 1e6
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_seeds(spec: &str) -> anyhow::Result<Vec<u64>> {
    let spec = spec.trim();
    let seeds: Vec<u64> = if let Some((lo, hi)) = spec.split_once("..") {
        let lo: u64 = lo.trim().parse().map_err(|_| UsageError(format!("bad seed range `{spec}`")))?;
        let hi: u64 = hi.trim().parse().map_err(|_| UsageError(format!("bad seed range `{spec}`")))?;
        (lo..hi).collect()
    } else {
        spec.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| UsageError(format!("bad seed `{s}`"))))
            .collect::<Result<_, _>>()?
    };
    if seeds.is_empty() {
        bail!(UsageError(format!("seed list `{spec}` is empty")));
    }
    Ok(seeds)
}

#[derive(Serialize)]
struct AggregateRow {
    users: usize,
    #[serde(rename = "T")]
    horizon: usize,
    mean_throughput: f64,
    mean_objective: f64,
    total_handovers: f64,
    mean_runtime: f64,
}

#[derive(Serialize)]
struct FailureRow {
    users: usize,
    #[serde(rename = "T")]
    horizon: usize,
    seed: u64,
    error: String,
}

fn cmd_sweep(a: SweepArgs) -> anyhow::Result<ExitCode> {
    let seeds = parse_seeds(&a.seeds)?;
    if a.jobs == 0 {
        bail!(UsageError("--jobs must be >= 1".into()));
    }
    // Resolve every configuration up front so config errors abort before any run.
    let mut jobs = Vec::new();
    for &users in &a.users {
        for &horizon in &a.horizons {
            for &seed in &seeds {
                jobs.push(config::resolve(&layers(&a.scenario, Some(users), Some(horizon), Some(seed)))?);
            }
        }
    }
    let base = config::resolve(&layers(&a.scenario, None, None, None))?;
    let dir = out_dir(&a.scenario.out)?;
    let runs_dir = dir.join("runs");
    std::fs::create_dir_all(&runs_dir).with_context(|| format!("creating {}", runs_dir.display()))?;

    let pool = rayon::ThreadPoolBuilder::new().num_threads(a.jobs).build()?;
    let results: Vec<(ScenarioConfig, RunResult)> = pool.install(|| {
        jobs.into_par_iter()
            .map(|cfg| {
                let r = run_to_files(&cfg, &runs_dir, &run_stem(&cfg));
                (cfg, r)
            })
            .collect()
    });

    let mut aggregate = Vec::new();
    let mut failures = Vec::new();
    for &users in &a.users {
        for &horizon in &a.horizons {
            let horizon = horizon as usize;
            let ok: Vec<&(Summary, String, f64)> = results
                .iter()
                .filter(|(c, _)| c.users == users && c.horizon == horizon)
                .filter_map(|(_, r)| r.as_ref().ok())
                .collect();
            if ok.is_empty() {
                continue;
            }
            let n = ok.len() as f64;
            aggregate.push(AggregateRow {
                users,
                horizon,
                mean_throughput: ok.iter().map(|(s, _, _)| s.mean_throughput_bps).sum::<f64>() / n,
                mean_objective: ok.iter().map(|(s, _, _)| s.total_objective).sum::<f64>() / n,
                total_handovers: ok.iter().map(|(s, _, _)| s.handovers as f64).sum::<f64>() / n,
                mean_runtime: ok.iter().map(|(_, _, w)| w).sum::<f64>() / n,
            });
        }
    }
    for (cfg, r) in &results {
        if let Err(e) = r {
            eprintln!("run {} failed: {e:#}", run_stem(cfg));
            failures.push(FailureRow {
                users: cfg.users,
                horizon: cfg.horizon,
                seed: cfg.seed,
                error: format!("{e:#}"),
            });
        }
    }
    let note = [format!(
        "sweep users = {:?}, T = {:?}, seeds = {:?}; base seed line refers to the unswept config",
        a.users, a.horizons, seeds
    )];
    write_rows(&dir.join("aggregate.csv"), Some(&base), &note, &aggregate)?;
    if !failures.is_empty() {
        write_rows(&dir.join("failures.csv"), Some(&base), &note, &failures)?;
    }
    println!(
        "{} runs ({} failed); aggregate in {}",
        results.len(),
        failures.len(),
        dir.join("aggregate.csv").display()
    );
    Ok(if failures.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_oracle_compare(a: OracleArgs) -> anyhow::Result<ExitCode> {
    let mut l = layers(&a.scenario, a.users, a.horizon, a.seed);
    if let Some(cap) = a.cap {
        l.flags.push(("enumeration_cap", Value::Integer(cap.min(i64::MAX as u64) as i64)));
    }
    let cfg = config::resolve(&l)?;
    let count = vlc_mvr::oracle::assignment_count(cfg.users, cfg.aps.len(), cfg.horizon);
    if count > cfg.enumeration_cap as u128 {
        bail!(UsageError(format!(
            "refusing exhaustive search: {} APs ^ ({} users x T = {}) = {count} assignments per service time exceed the cap of {}",
            cfg.aps.len(),
            cfg.users,
            cfg.horizon,
            cfg.enumeration_cap
        )));
    }
    let dir = out_dir(&a.scenario.out)?;
    let gaps = oracle_compare(&cfg)?;
    let max = gaps.iter().map(|g| g.gap).fold(0.0, f64::max);
    let within = gaps.iter().filter(|g| g.gap <= 0.05).count();
    let path = dir.join(format!("oracle_{}.csv", run_stem(&cfg)));
    write_rows(&path, Some(&cfg), &[], &gaps)?;
    println!(
        "{} service times, {count} assignments each; max relative gap {:.4}%, {within} within 5%; gaps in {}",
        gaps.len(),
        100.0 * max,
        path.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(a: VerifyArgs) -> anyhow::Result<ExitCode> {
    let budget = if a.quick { Budget::QUICK } else { Budget::FULL };
    let checks = run_all(budget, a.seed);
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    for c in &checks {
        println!("{} {:width$}  {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("{} checks, {failed} failed", checks.len());
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use vlc_mvr::sim::PRESETS;

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("0..3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("4, 7").unwrap(), vec![4, 7]);
        assert!(parse_seeds("").is_err());
        assert!(parse_seeds("3..3").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn presets_are_known() {
        for p in PRESETS {
            assert!(config::resolve(&Layers { preset: p.into(), ..Layers::default() }).is_ok());
        }
    }
}
