//! Command-line entry point: train / eval / sweep / ablate / analyze.
//!
//! Every command prints its resolved effective config before running and
//! writes all artifacts into `--out-dir`. Exit codes are part of the
//! contract: 0 success, 2 config error, 3 numerical divergence, 4 one or
//! more grid cells failed (partial results are still written).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use proxmo::analysis::{
    ablation_grid, noise_grid_csv, noise_singleton_grid, rows_to_jsonl, singleton_csv,
    singleton_tracking, sweep, zscore_asymmetry_table, zscore_table_csv, SweepAxis,
};
use proxmo::error::Error;
use proxmo::policy::Policy;
use proxmo::trainer::{eval_policy, train};
use proxmo::TrainConfig;

const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGENCE: u8 = 3;
const EXIT_PARTIAL: u8 = 4;

#[derive(Parser)]
#[command(name = "proxmo", version, about = "Two-level credit assignment for multi-turn RL")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Path to the TOML config file.
    #[arg(long)]
    config: PathBuf,
    /// Override the config's run seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for all output artifacts.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads (default: logical cores). Ignored without the
    /// `parallel` feature.
    #[arg(long)]
    threads: Option<usize>,
    /// Emit JSON Lines instead of CSV for analysis tables.
    #[arg(long)]
    json: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run a training loop and write run.jsonl, summary.csv, policy.ckpt.
    Train(CommonArgs),
    /// Evaluate a saved policy checkpoint on a held-out task pool.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        /// Policy checkpoint written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Episodes to run (default: the config's eval_episodes).
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// One full training run per (value, seed) cell along one axis.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Hyperparameter to vary: alpha, beta, or tau.
        #[arg(long)]
        axis: String,
        /// Comma-separated values for the axis.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        /// Comma-separated seeds (default: the config's seed list).
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
    },
    /// All five estimators under identical seeds and configs.
    Ablate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
    },
    /// Diagnostic tables.
    Analyze {
        #[command(subcommand)]
        what: AnalyzeCommand,
    },
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Binary z-score closed forms over a success-rate grid.
    Zscore {
        /// Grid as start:stop:step, e.g. 0.05:0.95:0.05.
        #[arg(long)]
        grid: String,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Exact-match group-size fractions across a synonym-noise grid.
    Singletons {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated noise values.
        #[arg(long, value_delimiter = ',', default_value = "0.0,0.25,0.5,0.75,1.0")]
        noise_grid: Vec<f64>,
    },
    /// Train once and emit the per-iteration group-size table.
    Track(CommonArgs),
}

fn fail(code: u8, message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(code)
}

fn exit_code_for(error: &Error) -> u8 {
    match error {
        Error::NumericalDivergence(_) => EXIT_DIVERGENCE,
        _ => EXIT_CONFIG,
    }
}

/// Load the config, apply the seed override, echo the effective config to
/// stdout and into the out dir.
fn prepare(common: &CommonArgs) -> Result<TrainConfig, ExitCode> {
    let mut config = TrainConfig::from_path(&common.config)
        .map_err(|e| fail(EXIT_CONFIG, format!("{}: {e}", common.config.display())))?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    let echo = config
        .to_toml_string()
        .map_err(|e| fail(EXIT_CONFIG, e))?;
    println!("# effective config\n{echo}");
    fs::create_dir_all(&common.out_dir).map_err(|e| fail(EXIT_CONFIG, e))?;
    write_artifact(&common.out_dir, "effective_config.toml", &echo)?;
    Ok(config)
}

fn write_artifact(out_dir: &Path, name: &str, contents: &str) -> Result<(), ExitCode> {
    let path = out_dir.join(name);
    fs::write(&path, contents)
        .map_err(|e| fail(EXIT_CONFIG, format!("writing {}: {e}", path.display())))?;
    Ok(())
}

fn cmd_train(common: &CommonArgs) -> ExitCode {
    let config = match prepare(common) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let report = match train(&config) {
        Ok(r) => r,
        Err(e) => return fail(exit_code_for(&e), e),
    };
    let run_jsonl = match report.to_run_jsonl() {
        Ok(s) => s,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    if let Err(code) = write_artifact(&common.out_dir, "run.jsonl", &run_jsonl) {
        return code;
    }
    if let Err(code) = write_artifact(&common.out_dir, "summary.csv", &report.to_summary_csv()) {
        return code;
    }
    let mut checkpoint = Vec::new();
    if let Err(e) = report.policy.write_checkpoint(&mut checkpoint) {
        return fail(EXIT_CONFIG, e);
    }
    let ckpt_path = common.out_dir.join("policy.ckpt");
    if let Err(e) = fs::write(&ckpt_path, &checkpoint) {
        return fail(EXIT_CONFIG, format!("writing {}: {e}", ckpt_path.display()));
    }
    println!(
        "train: estimator={} seed={} initial_success={:.4} final_success={:.4} iterations={}",
        report.estimator,
        report.seed,
        report.initial_eval.success_rate,
        report.final_eval.success_rate,
        report.iterations.len()
    );
    ExitCode::SUCCESS
}

fn cmd_eval(common: &CommonArgs, checkpoint: &Path, episodes: Option<usize>) -> ExitCode {
    let config = match prepare(common) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let file = match fs::File::open(checkpoint) {
        Ok(f) => f,
        Err(e) => return fail(EXIT_CONFIG, format!("{}: {e}", checkpoint.display())),
    };
    let policy = match Policy::read_checkpoint(std::io::BufReader::new(file)) {
        Ok(p) => p,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let episodes = episodes.unwrap_or(config.eval_episodes);
    let report = match eval_policy(&config, &policy, episodes) {
        Ok(r) => r,
        Err(e) => return fail(exit_code_for(&e), e),
    };
    let mut table = String::from("difficulty,success_rate,episodes\n");
    for (difficulty, success, n) in &report.per_difficulty {
        table.push_str(&format!("{difficulty},{success},{n}\n"));
    }
    table.push_str(&format!("all,{},{episodes}\n", report.success_rate));
    if let Err(code) = write_artifact(&common.out_dir, "eval.csv", &table) {
        return code;
    }
    println!("eval: success_rate={:.4} over {episodes} episodes", report.success_rate);
    ExitCode::SUCCESS
}

fn cmd_sweep(common: &CommonArgs, axis: &str, values: &[f64], seeds: &[u64]) -> ExitCode {
    let config = match prepare(common) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let axis: SweepAxis = match axis.parse() {
        Ok(a) => a,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    if values.is_empty() {
        return fail(EXIT_CONFIG, "sweep needs at least one --values entry");
    }
    let seeds = if seeds.is_empty() {
        config.grid_seeds()
    } else {
        seeds.to_vec()
    };
    let grid = sweep(axis, values, &config, &seeds);
    let artifact = if common.json {
        match rows_to_jsonl(&grid.cells) {
            Ok(s) => ("sweep.jsonl", s),
            Err(e) => return fail(EXIT_CONFIG, e),
        }
    } else {
        ("sweep.csv", grid.to_csv())
    };
    if let Err(code) = write_artifact(&common.out_dir, artifact.0, &artifact.1) {
        return code;
    }
    println!(
        "sweep: axis={} cells={} failed={}",
        grid.axis,
        grid.cells.len(),
        grid.cells.iter().filter(|c| c.error.is_some()).count()
    );
    if grid.any_failed() {
        return ExitCode::from(EXIT_PARTIAL);
    }
    ExitCode::SUCCESS
}

fn cmd_ablate(common: &CommonArgs, seeds: &[u64]) -> ExitCode {
    let config = match prepare(common) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let seeds = if seeds.is_empty() {
        config.grid_seeds()
    } else {
        seeds.to_vec()
    };
    let grid = ablation_grid(&config, &seeds);
    let artifacts = if common.json {
        let cells = match rows_to_jsonl(&grid.cells) {
            Ok(s) => s,
            Err(e) => return fail(EXIT_CONFIG, e),
        };
        vec![("ablation.jsonl", cells)]
    } else {
        vec![
            ("ablation.csv", grid.to_csv()),
            ("ablation_summary.csv", grid.summary_csv()),
        ]
    };
    for (name, contents) in artifacts {
        if let Err(code) = write_artifact(&common.out_dir, name, &contents) {
            return code;
        }
    }
    for (estimator, mean, std, n) in grid.summary() {
        println!("ablate: {estimator} mean={mean:.4} std={std:.4} seeds={n}");
    }
    if grid.any_failed() {
        return ExitCode::from(EXIT_PARTIAL);
    }
    ExitCode::SUCCESS
}

/// Parse "start:stop:step" into an inclusive grid.
fn parse_grid(spec: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("grid '{spec}' is not start:stop:step"));
    }
    let parse = |s: &str| {
        s.parse::<f64>()
            .map_err(|e| format!("grid component '{s}': {e}"))
    };
    let (start, stop, step) = (parse(parts[0])?, parse(parts[1])?, parse(parts[2])?);
    if !(step > 0.0) {
        return Err(format!("grid step must be positive, got {step}"));
    }
    let mut values = Vec::new();
    let mut k = 0u32;
    loop {
        let v = start + f64::from(k) * step;
        if v > stop + 1e-12 {
            break;
        }
        values.push(v);
        k += 1;
    }
    Ok(values)
}

fn cmd_analyze_zscore(grid: &str, out_dir: &Path, json: bool) -> ExitCode {
    let values = match parse_grid(grid) {
        Ok(v) => v,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let rows = match zscore_asymmetry_table(&values) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    if let Err(e) = fs::create_dir_all(out_dir) {
        return fail(EXIT_CONFIG, e);
    }
    let artifact = if json {
        match rows_to_jsonl(&rows) {
            Ok(s) => ("zscore.jsonl", s),
            Err(e) => return fail(EXIT_CONFIG, e),
        }
    } else {
        ("zscore.csv", zscore_table_csv(&rows))
    };
    if let Err(code) = write_artifact(out_dir, artifact.0, &artifact.1) {
        return code;
    }
    println!("analyze zscore: {} rows", rows.len());
    ExitCode::SUCCESS
}

fn cmd_analyze_singletons(common: &CommonArgs, noise_grid: &[f64]) -> ExitCode {
    let config = match prepare(common) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let rows = match noise_singleton_grid(&config, noise_grid, config.seed) {
        Ok(r) => r,
        Err(e) => return fail(exit_code_for(&e), e),
    };
    let artifact = if common.json {
        match rows_to_jsonl(&rows) {
            Ok(s) => ("singleton_noise.jsonl", s),
            Err(e) => return fail(EXIT_CONFIG, e),
        }
    } else {
        ("singleton_noise.csv", noise_grid_csv(&rows))
    };
    if let Err(code) = write_artifact(&common.out_dir, artifact.0, &artifact.1) {
        return code;
    }
    for r in &rows {
        println!(
            "singletons: noise={:.2} size_1={:.4} size_2={:.4} size_3={:.4} size_gt3={:.4}",
            r.synonym_noise, r.size_1, r.size_2, r.size_3, r.size_gt3
        );
    }
    ExitCode::SUCCESS
}

fn cmd_analyze_track(common: &CommonArgs) -> ExitCode {
    let config = match prepare(common) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let report = match train(&config) {
        Ok(r) => r,
        Err(e) => return fail(exit_code_for(&e), e),
    };
    let rows = singleton_tracking(&report);
    let artifact = if common.json {
        match rows_to_jsonl(&rows) {
            Ok(s) => ("singleton_tracking.jsonl", s),
            Err(e) => return fail(EXIT_CONFIG, e),
        }
    } else {
        ("singleton_tracking.csv", singleton_csv(&rows))
    };
    if let Err(code) = write_artifact(&common.out_dir, artifact.0, &artifact.1) {
        return code;
    }
    println!("analyze track: {} iterations", rows.len());
    ExitCode::SUCCESS
}

fn dispatch(cli: Cli) -> ExitCode {
    match &cli.command {
        Command::Train(common) => cmd_train(common),
        Command::Eval {
            common,
            checkpoint,
            episodes,
        } => cmd_eval(common, checkpoint, *episodes),
        Command::Sweep {
            common,
            axis,
            values,
            seeds,
        } => cmd_sweep(common, axis, values, seeds),
        Command::Ablate { common, seeds } => cmd_ablate(common, seeds),
        Command::Analyze { what } => match what {
            AnalyzeCommand::Zscore { grid, out_dir, json } => {
                cmd_analyze_zscore(grid, out_dir, *json)
            }
            AnalyzeCommand::Singletons { common, noise_grid } => {
                cmd_analyze_singletons(common, noise_grid)
            }
            AnalyzeCommand::Track(common) => cmd_analyze_track(common),
        },
    }
}

fn threads_of(cli: &Cli) -> Option<usize> {
    match &cli.command {
        Command::Train(c) | Command::Ablate { common: c, .. } => c.threads,
        Command::Eval { common, .. } | Command::Sweep { common, .. } => common.threads,
        Command::Analyze { what } => match what {
            AnalyzeCommand::Zscore { .. } => None,
            AnalyzeCommand::Singletons { common, .. } | AnalyzeCommand::Track(common) => {
                common.threads
            }
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = threads_of(&cli);
    #[cfg(feature = "parallel")]
    if let Some(threads) = threads {
        let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(p) => p,
            Err(e) => return fail(EXIT_CONFIG, e),
        };
        return pool.install(|| dispatch(cli));
    }
    #[cfg(not(feature = "parallel"))]
    if let Some(threads) = threads {
        eprintln!("note: built without the `parallel` feature; --threads {threads} ignored");
    }
    dispatch(cli)
}
