//! Experiment execution over a materialized config: problem construction,
//! centralized or simulated-asynchronous runs, metrics, file outputs, mode
//! comparison, and post-hoc audits of saved runs.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use pcd_core::{
    block_weight,
    cd::{descent_monitor, run_cd, BlockSchedule, RunTrace, StopRule},
    csv_float, paper_instance_doc, stationarity_residual, trace_equivalence,
    verify_weight_dominance, CommGraph, Error, InstanceDoc, PartitionedProblem, Regularizer,
    Result, SimOptions, Simulator,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{InitKind, Mode, RunConfig, DEFAULT_ITERS_PER_NODE};

pub const TRACE_FILE: &str = "trace.csv";
pub const CONFIG_FILE: &str = "config.toml";
pub const INSTANCE_FILE: &str = "instance.json";
pub const GRAPH_FILE: &str = "graph.txt";
pub const COMPONENTS_FILE: &str = "components.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const EVENTS_FILE: &str = "events.log";
pub const COMPARE_FILE: &str = "compare.csv";

/// Problem plus its serializable source document.
pub struct BuiltProblem {
    pub doc: InstanceDoc,
    pub problem: PartitionedProblem,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Builds the problem from an instance file if configured, otherwise
/// generates the benchmark family instance on a random or file-defined
/// graph. Generated instances carry their seeds in the provenance block.
pub fn build_problem(cfg: &RunConfig, base_dir: &Path) -> Result<BuiltProblem> {
    if let Some(file) = &cfg.instance.file {
        let doc = InstanceDoc::load(&resolve(base_dir, file))?;
        let problem = doc.build()?;
        return Ok(BuiltProblem { doc, problem });
    }
    let (graph, from_file) = if let Some(file) = &cfg.graph.file {
        let text = fs::read_to_string(resolve(base_dir, file))?;
        (CommGraph::from_edge_list(cfg.graph.nodes, &text)?, true)
    } else {
        (
            CommGraph::erdos_renyi_connected(cfg.graph.nodes, cfg.graph.edge_prob, cfg.graph.seed)?,
            false,
        )
    };
    let n = graph.num_nodes();
    let bounds = vec![(cfg.instance.lower, cfg.instance.upper); n];
    let mut doc = paper_instance_doc(&graph, cfg.instance.data_seed, &bounds, cfg.instance.shift)?;
    if let Some(prov) = doc.provenance.as_mut() {
        if !from_file {
            prov.graph_seed = Some(cfg.graph.seed);
            prov.edge_prob = Some(cfg.graph.edge_prob);
        }
    }
    let problem = doc.build()?;
    Ok(BuiltProblem { doc, problem })
}

/// Materializes the configured starting point.
pub fn initial_point(cfg: &RunConfig, problem: &PartitionedProblem) -> Result<DVector<f64>> {
    let dim = problem.layout().total_dim();
    let zeros = DVector::zeros(dim);
    let midpoint = || -> DVector<f64> {
        let mut x = DVector::zeros(dim);
        for i in 0..problem.num_nodes() {
            if let Regularizer::Box { lower, upper } = problem.regularizer(i) {
                let off = problem.layout().offset(i);
                for k in 0..lower.len() {
                    x[off + k] = 0.5 * (lower[k] + upper[k]);
                }
            }
        }
        x
    };
    match cfg.init.kind {
        InitKind::Zeros => Ok(zeros),
        InitKind::Midpoint => Ok(midpoint()),
        InitKind::Auto => {
            if problem.aggregate_value(&zeros)?.is_finite() {
                Ok(zeros)
            } else {
                Ok(midpoint())
            }
        }
        InitKind::Uniform => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.init.seed);
            let mut x = DVector::zeros(dim);
            for i in 0..problem.num_nodes() {
                let off = problem.layout().offset(i);
                match problem.regularizer(i) {
                    Regularizer::Box { lower, upper } => {
                        for k in 0..lower.len() {
                            x[off + k] = rng.gen_range(lower[k]..=upper[k]);
                        }
                    }
                    Regularizer::Zero => {
                        for k in 0..problem.layout().block_dim(i) {
                            x[off + k] = rng.gen_range(-1.0..=1.0);
                        }
                    }
                }
            }
            Ok(x)
        }
    }
}

/// One tracked block's per-iteration coordinate series.
pub struct TrackedComponent {
    pub block: usize,
    pub labels: Vec<String>,
    /// series[c][t] = coordinate c of the block after step t.
    pub series: Vec<Vec<f64>>,
}

pub struct MetricsReport {
    pub mode: Mode,
    pub nodes: usize,
    pub edges: usize,
    pub v_trace: Vec<f64>,
    pub v_gap: Vec<f64>,
    pub t_norm: Vec<f64>,
    pub tracked: Vec<TrackedComponent>,
    pub stationarity: f64,
    pub descent_violations: usize,
    pub dominance_ok: bool,
    pub initial_value: f64,
    pub final_value: f64,
    pub iterations: usize,
    pub message_counts: Option<(u64, u64)>,
    pub final_sim_time: Option<f64>,
}

pub struct RunOutput {
    pub report: MetricsReport,
    pub trace: RunTrace,
    pub problem: PartitionedProblem,
    pub doc: InstanceDoc,
    pub x0: DVector<f64>,
    pub resolved_iters: usize,
    pub event_log: Option<Vec<String>>,
}

/// Builds and runs the configured experiment in memory.
pub fn execute(cfg: &RunConfig, base_dir: &Path) -> Result<RunOutput> {
    let BuiltProblem { doc, problem } = build_problem(cfg, base_dir)?;
    let n = problem.num_nodes();
    for &b in &cfg.output.track_blocks {
        if b >= n {
            return Err(Error::BlockIndex { index: b, count: n });
        }
    }
    let resolved_iters = cfg.stop.max_iters.unwrap_or(DEFAULT_ITERS_PER_NODE * n);
    let stop = StopRule {
        max_iters: resolved_iters,
        step_tol: cfg.stop.step_tol,
    };
    let x0 = initial_point(cfg, &problem)?;

    let (trace, message_counts, event_log) = match cfg.mode {
        Mode::Async => {
            let options = SimOptions {
                timer_seed: cfg.sim.timer_seed,
                timer_rate: cfg.sim.timer_rate,
                stop,
                record_states: true,
                audit_every_awake: cfg.sim.audit_every_awake,
                log_events: cfg.sim.log_events,
            };
            let mut sim = Simulator::new(&problem, &x0, cfg.strategy.clone(), options)?;
            let trace = sim.run()?;
            let counts = sim.message_counts();
            let log = sim.event_log().map(|l| l.to_vec());
            (trace, Some(counts), log)
        }
        Mode::Centralized => {
            let trace = run_cd(
                &problem,
                &x0,
                &BlockSchedule::Random {
                    seed: cfg.schedule_seed,
                    probs: None,
                },
                &cfg.strategy,
                &stop,
                true,
            )?;
            (trace, None, None)
        }
    };

    let report = build_report(cfg, &problem, &trace, message_counts)?;
    Ok(RunOutput {
        report,
        trace,
        problem,
        doc,
        x0,
        resolved_iters,
        event_log,
    })
}

fn build_report(
    cfg: &RunConfig,
    problem: &PartitionedProblem,
    trace: &RunTrace,
    message_counts: Option<(u64, u64)>,
) -> Result<MetricsReport> {
    let n = problem.num_nodes();
    let final_value = trace.final_value();
    let v_trace: Vec<f64> = trace.steps.iter().map(|s| s.value).collect();
    let v_gap: Vec<f64> = v_trace.iter().map(|v| v - final_value).collect();
    let t_norm: Vec<f64> = (0..trace.len()).map(|t| t as f64 / n as f64).collect();

    let states = trace.states.as_ref();
    let mut tracked = Vec::new();
    for &b in &cfg.output.track_blocks {
        let dim = problem.layout().block_dim(b);
        let off = problem.layout().offset(b);
        let labels = if dim == 1 {
            vec![format!("x{b}")]
        } else {
            (0..dim).map(|k| format!("x{b}_{k}")).collect()
        };
        let mut series = vec![Vec::with_capacity(trace.len()); dim];
        if let Some(states) = states {
            for s in states {
                for (k, column) in series.iter_mut().enumerate() {
                    column.push(s[off + k]);
                }
            }
        }
        tracked.push(TrackedComponent {
            block: b,
            labels,
            series,
        });
    }

    let stationarity = stationarity_residual(problem, &trace.final_x, &cfg.strategy)?;
    let descent_violations = descent_monitor(trace, problem).len();
    let mut dominance_ok = true;
    for i in 0..n {
        let w = block_weight(problem, &trace.final_x, i, &cfg.strategy)?;
        if !verify_weight_dominance(&w, problem.block_lipschitz(i)) {
            dominance_ok = false;
        }
    }

    Ok(MetricsReport {
        mode: cfg.mode,
        nodes: n,
        edges: problem.graph().edges().len(),
        v_trace,
        v_gap,
        t_norm,
        tracked,
        stationarity,
        descent_violations,
        dominance_ok,
        initial_value: trace.initial_value,
        final_value,
        iterations: trace.len(),
        message_counts,
        final_sim_time: trace.steps.last().and_then(|s| s.sim_time),
    })
}

fn components_csv(report: &MetricsReport) -> String {
    let mut header = String::from("t,t_norm");
    for tc in &report.tracked {
        for label in &tc.labels {
            header.push(',');
            header.push_str(label);
        }
    }
    let mut out = header;
    out.push('\n');
    for t in 0..report.iterations {
        out.push_str(&format!("{t},{}", csv_float(report.t_norm[t])));
        for tc in &report.tracked {
            for column in &tc.series {
                out.push(',');
                out.push_str(&csv_float(column[t]));
            }
        }
        out.push('\n');
    }
    out
}

fn summary_text(cfg: &RunConfig, report: &MetricsReport) -> String {
    let mut s = String::new();
    let mut line = |text: String| {
        s.push_str(&text);
        s.push('\n');
    };
    line(format!("mode: {}", cfg.mode.as_str()));
    line(format!("nodes: {}", report.nodes));
    line(format!("edges: {}", report.edges));
    match (&cfg.instance.file, &cfg.graph.file) {
        (Some(f), _) => line(format!("instance: loaded from {}", f.display())),
        (None, Some(f)) => {
            line(format!("graph: edge list {}", f.display()));
            line(format!("data_seed: {}", cfg.instance.data_seed));
        }
        (None, None) => {
            line(format!(
                "graph_seed: {} (edge_prob {})",
                cfg.graph.seed, cfg.graph.edge_prob
            ));
            line(format!("data_seed: {}", cfg.instance.data_seed));
        }
    }
    line(format!("shift: {}", cfg.instance.shift));
    line(format!(
        "bounds: [{}, {}]",
        cfg.instance.lower, cfg.instance.upper
    ));
    line(format!("weights: {}", cfg.strategy_text));
    line(format!(
        "init: {} (seed {})",
        cfg.init.kind.as_str(),
        cfg.init.seed
    ));
    line(format!("iterations: {}", report.iterations));
    match cfg.stop.step_tol {
        Some(tol) => line(format!("step_tol: {tol}")),
        None => line("step_tol: none".into()),
    }
    match cfg.mode {
        Mode::Async => {
            line(format!("timer_seed: {}", cfg.sim.timer_seed));
            line(format!("timer_rate: {}", cfg.sim.timer_rate));
        }
        Mode::Centralized => line(format!("schedule_seed: {}", cfg.schedule_seed)),
    }
    line(format!("initial_V: {}", csv_float(report.initial_value)));
    line(format!("final_V: {}", csv_float(report.final_value)));
    line(format!(
        "stationarity_residual: {}",
        csv_float(report.stationarity)
    ));
    line(format!("descent_violations: {}", report.descent_violations));
    line(format!(
        "weight_dominance: {}",
        if report.dominance_ok {
            "satisfied (per-step descent bound applies)"
        } else {
            "not satisfied (descent bound not guaranteed)"
        }
    ));
    if let Some((b, g)) = report.message_counts {
        line(format!("messages: {b} state broadcasts, {g} gradient forwards"));
    }
    if let Some(t) = report.final_sim_time {
        line(format!("final_sim_time: {}", csv_float(t)));
    }
    for tc in &report.tracked {
        let finals: Vec<String> = tc
            .series
            .iter()
            .map(|c| c.last().map(|v| csv_float(*v)).unwrap_or_default())
            .collect();
        line(format!("tracked block {}: final [{}]", tc.block, finals.join(", ")));
    }
    line(
        "note: V_gap measures V(t) minus V at the final iterate, the computable stand-in \
         for the limit value"
            .into(),
    );
    s
}

/// Runs the experiment and writes every output file into the configured
/// directory. File contents are deterministic functions of the config.
pub fn run_experiment(cfg: &RunConfig, base_dir: &Path) -> Result<RunOutput> {
    let out = execute(cfg, base_dir)?;
    let dir = resolve(base_dir, &cfg.output.dir);
    fs::create_dir_all(&dir)?;
    fs::write(
        dir.join(CONFIG_FILE),
        cfg.echo(out.resolved_iters).to_toml_string(),
    )?;
    fs::write(dir.join(GRAPH_FILE), out.problem.graph().to_edge_list())?;
    out.doc.save(&dir.join(INSTANCE_FILE))?;
    fs::write(dir.join(TRACE_FILE), out.trace.to_csv_string())?;
    fs::write(dir.join(COMPONENTS_FILE), components_csv(&out.report))?;
    fs::write(dir.join(SUMMARY_FILE), summary_text(cfg, &out.report))?;
    if let Some(log) = &out.event_log {
        let mut text = log.join("\n");
        text.push('\n');
        fs::write(dir.join(EVENTS_FILE), text)?;
    }
    Ok(out)
}

pub struct CompareReport {
    pub iterations: usize,
    pub max_state_dev: f64,
    pub max_v_dev: f64,
    pub async_final: f64,
    pub replay_final: f64,
}

/// Runs the asynchronous simulation, replays its awake sequence through the
/// centralized loop, and reports per-iteration deviations. Writes
/// `compare.csv` into the output directory.
pub fn compare_modes(cfg: &RunConfig, base_dir: &Path) -> Result<CompareReport> {
    let mut async_cfg = cfg.clone();
    async_cfg.mode = Mode::Async;
    let out = execute(&async_cfg, base_dir)?;
    let replay = run_cd(
        &out.problem,
        &out.x0,
        &BlockSchedule::Replay(out.trace.blocks()),
        &cfg.strategy,
        &StopRule::max_iters(out.trace.len()),
        true,
    )?;
    let sim_states = out.trace.states.as_ref().expect("async run records states");
    let replay_states = replay.states.as_ref().expect("replay records states");

    let mut rows = String::from("t,state_dev,v_dev\n");
    let mut max_state_dev = 0.0f64;
    let mut max_v_dev = 0.0f64;
    for t in 0..out.trace.len() {
        let diff = &sim_states[t] - &replay_states[t];
        let state_dev = if diff.len() > 0 { diff.amax() } else { 0.0 };
        let v_dev = (out.trace.steps[t].value - replay.steps[t].value).abs();
        max_state_dev = max_state_dev.max(state_dev);
        max_v_dev = max_v_dev.max(v_dev);
        rows.push_str(&format!(
            "{t},{},{}\n",
            csv_float(state_dev),
            csv_float(v_dev)
        ));
    }
    let dir = resolve(base_dir, &cfg.output.dir);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join(COMPARE_FILE), rows)?;
    Ok(CompareReport {
        iterations: out.trace.len(),
        max_state_dev,
        max_v_dev,
        async_final: out.trace.final_value(),
        replay_final: replay.final_value(),
    })
}

/// Generates the configured instance and writes it to `out_path`.
pub fn generate_instance(cfg: &RunConfig, base_dir: &Path, out_path: &Path) -> Result<BuiltProblem> {
    let built = build_problem(cfg, base_dir)?;
    let path = resolve(base_dir, out_path);
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    built.doc.save(&path)?;
    Ok(built)
}

pub struct AuditSummary {
    pub iterations: usize,
    pub trace_matches: bool,
    pub cache_audits_passed: bool,
    pub replay_deviation: Option<f64>,
    pub descent_violations: usize,
    pub dominance_ok: bool,
}

impl AuditSummary {
    pub fn passed(&self) -> bool {
        self.trace_matches
            && self.cache_audits_passed
            && self.replay_deviation.map_or(true, |d| d == 0.0)
            && (!self.dominance_ok || self.descent_violations == 0)
    }
}

/// Re-executes a saved run from its echoed config and instance file, with
/// per-awake cache audits forced on, and checks that the regenerated trace
/// matches the saved bytes, that the async run replays exactly through the
/// centralized loop, and that no descent violation occurred under
/// dominating weights.
pub fn audit_dir(dir: &Path) -> Result<AuditSummary> {
    let raw = crate::config::RawConfig::load(&dir.join(CONFIG_FILE))?;
    let mut cfg = raw.materialize()?;
    // The saved instance is authoritative; generation parameters in the echo
    // are informational.
    cfg.instance.file = Some(PathBuf::from(INSTANCE_FILE));
    cfg.sim.audit_every_awake = true;
    cfg.sim.log_events = false;

    let saved_trace = fs::read_to_string(dir.join(TRACE_FILE))?;
    let out = execute(&cfg, dir)?;
    let trace_matches = out.trace.to_csv_string() == saved_trace;

    let replay_deviation = match cfg.mode {
        Mode::Async => Some(trace_equivalence(
            &out.problem,
            &out.x0,
            &out.trace,
            &cfg.strategy,
        )?),
        Mode::Centralized => None,
    };

    Ok(AuditSummary {
        iterations: out.trace.len(),
        trace_matches,
        cache_audits_passed: true,
        replay_deviation,
        descent_violations: out.report.descent_violations,
        dominance_ok: out.report.dominance_ok,
    })
}
