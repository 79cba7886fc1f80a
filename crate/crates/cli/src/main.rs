use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use otrl_core::harness::{rows_to_csv, train_algorithm, ResultRow};
use otrl_core::{
    evaluate, generate_scenario, harness::convergence_traces, run_sweep, Algorithm, HarnessConfig, PolicyParams,
    SweepSpec,
};

#[derive(Parser)]
#[command(name = "otrl", version, about = "Cloud-edge-end offloading: train, evaluate and sweep")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct Common {
    /// JSON config; missing sections use defaults, unknown keys are rejected.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides both the scenario and the training seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Train a learned policy and emit its per-iteration trace.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "otrl")]
        algo: Algorithm,
        /// Also write the trained parameters as JSON.
        #[arg(long)]
        policy_out: Option<PathBuf>,
    },
    /// Evaluate one algorithm on the configured scenario.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "otrl")]
        algo: Algorithm,
        /// Trained parameters from `train --policy-out`; trains fresh when omitted.
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Run a parameter sweep (axis, points and seeds from the config's `sweep` section).
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Restrict to these algorithms (repeatable).
        #[arg(long)]
        algo: Vec<Algorithm>,
        /// Replace the configured sweep with a preset axis and its standard points.
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        #[arg(long)]
        repetitions: Option<usize>,
    },
    /// OTRL and plain-RL loss traces on the same scenario and seed.
    Converge {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    DataSize,
    CpuCycles,
    NumEds,
}

fn load_config(common: &Common) -> Result<HarnessConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            HarnessConfig::from_json(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => HarnessConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg = cfg.with_seed(seed);
    }
    Ok(cfg)
}

fn emit(common: &Common, text: &str) -> Result<()> {
    match &common.out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn rows_output(format: Format, rows: &[ResultRow]) -> Result<String> {
    Ok(match format {
        Format::Csv => rows_to_csv(rows),
        Format::Json => serde_json::to_string_pretty(rows)? + "\n",
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            common,
            algo,
            policy_out,
        } => {
            let cfg = load_config(&common)?;
            let scenario = generate_scenario(&cfg.scenario)?;
            let (theta, trace) = train_algorithm(algo, &scenario, &cfg.train, &cfg.schedule)?;
            if let Some(path) = policy_out {
                fs::write(&path, theta.to_json()? + "\n").with_context(|| format!("writing {}", path.display()))?;
            }
            let text = match common.format {
                Format::Csv => trace.to_csv(),
                Format::Json => serde_json::to_string_pretty(&trace.rows)? + "\n",
            };
            emit(&common, &text)
        }
        Command::Eval { common, algo, policy } => {
            let cfg = load_config(&common)?;
            let scenario = generate_scenario(&cfg.scenario)?;
            let theta = match &policy {
                Some(path) if algo.is_learned() => {
                    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                    Some(PolicyParams::from_json(&text)?)
                }
                Some(_) => bail!("--policy only applies to learned algorithms"),
                None => None,
            };
            let e = evaluate(algo, &scenario, &cfg.train, &cfg.schedule, theta.as_ref())?;
            let row = ResultRow::from_evaluation(algo, "none", 0.0, cfg.scenario.seed, &e);
            emit(&common, &rows_output(common.format, &[row])?)
        }
        Command::Sweep {
            common,
            algo,
            preset,
            repetitions,
        } => {
            let mut cfg = load_config(&common)?;
            let reps = repetitions.unwrap_or(cfg.sweep.repetitions);
            if let Some(p) = preset {
                cfg.sweep = match p {
                    Preset::DataSize => SweepSpec::data_size(reps),
                    Preset::CpuCycles => SweepSpec::cpu_cycles(reps),
                    Preset::NumEds => SweepSpec::num_eds(reps),
                };
            }
            cfg.sweep.repetitions = reps;
            if !algo.is_empty() {
                cfg.sweep.algorithms = algo;
            }
            let rows = run_sweep(&cfg.sweep, &cfg)?;
            emit(&common, &rows_output(common.format, &rows)?)
        }
        Command::Converge { common } => {
            let cfg = load_config(&common)?;
            let traces = convergence_traces(&cfg)?;
            let text = match common.format {
                Format::Csv => traces.to_csv(),
                Format::Json => traces.to_json()? + "\n",
            };
            emit(&common, &text)
        }
    }
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
