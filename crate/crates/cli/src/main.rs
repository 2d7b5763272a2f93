use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pcd_cli::config::{preset_by_name, RawConfig, RawGraph, RawInit, RawInstance, RawOutput, RawSchedule, RawSim, RawStop, RawWeights};
use pcd_cli::experiment;
use pcd_cli::exit_code;
use pcd_core::{csv_float, Result};

#[derive(Parser)]
#[command(
    name = "pcd",
    version,
    about = "Block-coordinate descent on graph-partitioned problems: centralized runs and an asynchronous gossip simulation"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build the configured instance and write it to a JSON file.
    Generate {
        #[command(flatten)]
        common: CommonOpts,
        /// Output path for the instance file.
        #[arg(long, default_value = "instance.json")]
        out: PathBuf,
    },
    /// Run one experiment and write trace, components, and summary files.
    Run {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Run asynchronously, replay the awake sequence through the
    /// centralized loop, and report per-iteration deviations.
    Compare {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Re-execute a saved run with per-awake cache audits and verify the
    /// stored trace byte for byte.
    Audit {
        /// Directory holding config.toml, instance.json, and trace.csv.
        #[arg(long)]
        dir: PathBuf,
    },
}

#[derive(Args)]
struct CommonOpts {
    /// TOML config file; fields default when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named settings bundle applied under the config file (available: paper).
    #[arg(long)]
    preset: Option<String>,
    /// Execution mode: centralized | async.
    #[arg(long)]
    mode: Option<String>,
    /// Node count for random graph generation (or with --graph-file, its node count).
    #[arg(long)]
    nodes: Option<usize>,
    /// Edge probability for random graph generation.
    #[arg(long)]
    edge_prob: Option<f64>,
    /// Random graph seed.
    #[arg(long)]
    graph_seed: Option<u64>,
    /// Edge-list file (one "i j" pair per line) instead of a random graph.
    #[arg(long)]
    graph_file: Option<PathBuf>,
    /// Saved instance JSON; overrides graph and instance generation.
    #[arg(long)]
    instance_file: Option<PathBuf>,
    /// Instance data seed.
    #[arg(long)]
    data_seed: Option<u64>,
    /// Indefiniteness shift (positive).
    #[arg(long)]
    shift: Option<f64>,
    /// Lower box bound for every block.
    #[arg(long, allow_hyphen_values = true)]
    lower: Option<f64>,
    /// Upper box bound for every block.
    #[arg(long, allow_hyphen_values = true)]
    upper: Option<f64>,
    /// Weight strategy: lipschitz | scaled_identity:alpha=A | second_order[:eps=E].
    #[arg(long)]
    weights: Option<String>,
    /// Starting point: auto | zeros | midpoint | uniform.
    #[arg(long)]
    init: Option<String>,
    /// Seed for the uniform starting point.
    #[arg(long)]
    init_seed: Option<u64>,
    /// Iteration budget (awakes in async mode); defaults to 1000 per node.
    #[arg(long)]
    max_iters: Option<usize>,
    /// Stop once a full window of per-node steps falls below this norm.
    #[arg(long)]
    step_tol: Option<f64>,
    /// Master seed for the per-node wake-up timers.
    #[arg(long)]
    timer_seed: Option<u64>,
    /// Common exponential timer rate.
    #[arg(long)]
    timer_rate: Option<f64>,
    /// Block-selection seed for centralized runs.
    #[arg(long)]
    schedule_seed: Option<u64>,
    /// Audit cache consistency before every awake (async mode).
    #[arg(long)]
    audit_every_awake: bool,
    /// Write a per-event log next to the other outputs.
    #[arg(long)]
    log_events: bool,
    /// Blocks whose components are written to components.csv.
    #[arg(long, value_delimiter = ',')]
    track_blocks: Option<Vec<usize>>,
    /// Output directory for run artifacts.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl CommonOpts {
    fn as_raw(&self) -> RawConfig {
        RawConfig {
            mode: self.mode.clone(),
            graph: Some(RawGraph {
                nodes: self.nodes,
                edge_prob: self.edge_prob,
                seed: self.graph_seed,
                file: self.graph_file.clone(),
            }),
            instance: Some(RawInstance {
                data_seed: self.data_seed,
                shift: self.shift,
                lower: self.lower,
                upper: self.upper,
                file: self.instance_file.clone(),
            }),
            weights: Some(RawWeights {
                strategy: self.weights.clone(),
            }),
            init: Some(RawInit {
                kind: self.init.clone(),
                seed: self.init_seed,
            }),
            stop: Some(RawStop {
                max_iters: self.max_iters,
                step_tol: self.step_tol,
            }),
            sim: Some(RawSim {
                timer_seed: self.timer_seed,
                timer_rate: self.timer_rate,
                audit_every_awake: self.audit_every_awake.then_some(true),
                log_events: self.log_events.then_some(true),
            }),
            schedule: Some(RawSchedule {
                seed: self.schedule_seed,
            }),
            output: Some(RawOutput {
                dir: self.out_dir.clone(),
                track_blocks: self.track_blocks.clone(),
            }),
        }
    }

    /// Layering: defaults < preset < config file < flags.
    fn layered(&self) -> Result<RawConfig> {
        let mut raw = RawConfig::default();
        if let Some(name) = &self.preset {
            raw.merge(&preset_by_name(name)?);
        }
        if let Some(path) = &self.config {
            raw.merge(&RawConfig::load(path)?);
        }
        raw.merge(&self.as_raw());
        Ok(raw)
    }
}

fn dispatch(cli: Cli) -> Result<bool> {
    let cwd = std::env::current_dir()?;
    match cli.cmd {
        Cmd::Generate { common, out } => {
            // Instance generation does not execute anything, so the mode
            // requirement is waived here.
            let mut raw = common.layered()?;
            raw.mode.get_or_insert_with(|| "async".into());
            let cfg = raw.materialize()?;
            let built = experiment::generate_instance(&cfg, &cwd, &out)?;
            println!(
                "wrote {} ({} nodes, {} edges)",
                out.display(),
                built.problem.num_nodes(),
                built.problem.graph().edges().len()
            );
            Ok(true)
        }
        Cmd::Run { common } => {
            let cfg = common.layered()?.materialize()?;
            let out = experiment::run_experiment(&cfg, &cwd)?;
            let r = &out.report;
            println!(
                "{} run: {} iterations, V {} -> {}",
                cfg.mode.as_str(),
                r.iterations,
                csv_float(r.initial_value),
                csv_float(r.final_value)
            );
            println!(
                "stationarity residual {}, descent violations {}",
                csv_float(r.stationarity),
                r.descent_violations
            );
            if !r.dominance_ok {
                eprintln!(
                    "warning: weights do not dominate the block constants; per-step descent is not guaranteed"
                );
            }
            println!("outputs in {}", cfg.output.dir.display());
            Ok(true)
        }
        Cmd::Compare { common } => {
            // compare always runs async first, so the mode is implied.
            let mut raw = common.layered()?;
            raw.mode.get_or_insert_with(|| "async".into());
            let cfg = raw.materialize()?;
            let report = experiment::compare_modes(&cfg, &cwd)?;
            println!(
                "compared {} iterations: max state deviation {}, max V deviation {}",
                report.iterations,
                csv_float(report.max_state_dev),
                csv_float(report.max_v_dev)
            );
            println!(
                "final V async {} vs replay {}",
                csv_float(report.async_final),
                csv_float(report.replay_final)
            );
            Ok(true)
        }
        Cmd::Audit { dir } => {
            let summary = experiment::audit_dir(&dir)?;
            println!(
                "audited {} iterations: trace {}, cache audits {}, descent violations {}{}",
                summary.iterations,
                if summary.trace_matches { "matches" } else { "MISMATCH" },
                if summary.cache_audits_passed { "passed" } else { "FAILED" },
                summary.descent_violations,
                match summary.replay_deviation {
                    Some(d) => format!(", replay deviation {}", csv_float(d)),
                    None => String::new(),
                }
            );
            if !summary.dominance_ok {
                println!("note: weights do not dominate the block constants; descent violations are not failures");
            }
            Ok(summary.passed())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successful exits; real parse
            // errors are configuration errors under the exit-code contract.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err) as u8)
        }
    }
}
