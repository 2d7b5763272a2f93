//! Layered run configuration: defaults, optional preset, optional TOML file,
//! command-line overrides, in that order. Everything is optional except the
//! execution mode; materialization pins every default so the echoed config
//! written next to the outputs reproduces the run exactly.

use std::path::PathBuf;
use std::str::FromStr;

use pcd_core::{Error, Result, WeightStrategy};
use serde::{Deserialize, Serialize};

pub const DEFAULT_NODES: usize = 50;
pub const DEFAULT_EDGE_PROB: f64 = 0.2;
pub const DEFAULT_GRAPH_SEED: u64 = 1;
pub const DEFAULT_DATA_SEED: u64 = 1;
pub const DEFAULT_SHIFT: f64 = 2.0;
pub const DEFAULT_LOWER: f64 = -30.0;
pub const DEFAULT_UPPER: f64 = 20.0;
pub const DEFAULT_TIMER_SEED: u64 = 1;
pub const DEFAULT_TIMER_RATE: f64 = 1.0;
pub const DEFAULT_SCHEDULE_SEED: u64 = 1;
/// Default iteration budget is this many awakes (or centralized steps) per
/// node; it resolves to `1000 * N` once the graph size is known.
pub const DEFAULT_ITERS_PER_NODE: usize = 1000;
pub const DEFAULT_OUT_DIR: &str = "out";

/// Benchmark preset: 50 nodes, edge probability 0.2, boxes [-30, 20],
/// indefiniteness shift 2, scaled-identity weights with alpha = 0.01,
/// asynchronous mode, two tracked components.
pub fn paper_preset() -> RawConfig {
    RawConfig {
        mode: Some("async".into()),
        graph: Some(RawGraph {
            nodes: Some(50),
            edge_prob: Some(0.2),
            seed: Some(8),
            file: None,
        }),
        instance: Some(RawInstance {
            data_seed: Some(1),
            shift: Some(2.0),
            lower: Some(-30.0),
            upper: Some(20.0),
            file: None,
        }),
        weights: Some(RawWeights {
            strategy: Some("scaled_identity:alpha=0.01".into()),
        }),
        init: Some(RawInit {
            kind: Some("zeros".into()),
            seed: Some(0),
        }),
        stop: Some(RawStop {
            max_iters: Some(50_000),
            step_tol: None,
        }),
        sim: Some(RawSim {
            timer_seed: Some(1),
            timer_rate: Some(1.0),
            audit_every_awake: Some(false),
            log_events: Some(false),
        }),
        schedule: Some(RawSchedule { seed: Some(1) }),
        output: Some(RawOutput {
            dir: None,
            track_blocks: Some(vec![14, 48]),
        }),
    }
}

pub fn preset_by_name(name: &str) -> Result<RawConfig> {
    match name {
        "paper" => Ok(paper_preset()),
        other => Err(Error::InvalidParameter(format!(
            "unknown preset '{other}' (available: paper)"
        ))),
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub graph: Option<RawGraph>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instance: Option<RawInstance>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<RawWeights>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init: Option<RawInit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop: Option<RawStop>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sim: Option<RawSim>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schedule: Option<RawSchedule>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<RawOutput>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGraph {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edge_prob: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Edge-list file (one `i j` pair per line); overrides random generation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawInstance {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shift: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    /// Saved instance file; overrides generation and the graph section.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawWeights {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strategy: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawInit {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawStop {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step_tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSim {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timer_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timer_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub audit_every_awake: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_events: Option<bool>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSchedule {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOutput {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub track_blocks: Option<Vec<usize>>,
}

macro_rules! overlay {
    ($dst:expr, $src:expr, $($field:ident),+) => {
        $(if $src.$field.is_some() { $dst.$field = $src.$field.clone(); })+
    };
}

impl RawConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidParameter(format!("config: {e}")))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Overlays `other` on top of `self`, field by field; set fields win.
    pub fn merge(&mut self, other: &RawConfig) {
        overlay!(self, other, mode);
        merge_section(&mut self.graph, &other.graph, |d, s| {
            overlay!(d, s, nodes, edge_prob, seed, file);
        });
        merge_section(&mut self.instance, &other.instance, |d, s| {
            overlay!(d, s, data_seed, shift, lower, upper, file);
        });
        merge_section(&mut self.weights, &other.weights, |d, s| {
            overlay!(d, s, strategy);
        });
        merge_section(&mut self.init, &other.init, |d, s| {
            overlay!(d, s, kind, seed);
        });
        merge_section(&mut self.stop, &other.stop, |d, s| {
            overlay!(d, s, max_iters, step_tol);
        });
        merge_section(&mut self.sim, &other.sim, |d, s| {
            overlay!(d, s, timer_seed, timer_rate, audit_every_awake, log_events);
        });
        merge_section(&mut self.schedule, &other.schedule, |d, s| {
            overlay!(d, s, seed);
        });
        merge_section(&mut self.output, &other.output, |d, s| {
            overlay!(d, s, dir, track_blocks);
        });
    }

    /// Validates and pins every field.
    pub fn materialize(&self) -> Result<RunConfig> {
        let mode = match self.mode.as_deref() {
            Some("centralized") => Mode::Centralized,
            Some("async") => Mode::Async,
            Some(other) => {
                return Err(Error::InvalidParameter(format!(
                    "mode must be 'centralized' or 'async', got '{other}'"
                )))
            }
            None => {
                return Err(Error::InvalidParameter(
                    "mode is required (set it in the config file, a preset, or --mode)".into(),
                ))
            }
        };
        let graph = self.graph.clone().unwrap_or_default();
        let instance = self.instance.clone().unwrap_or_default();
        let lower = instance.lower.unwrap_or(DEFAULT_LOWER);
        let upper = instance.upper.unwrap_or(DEFAULT_UPPER);
        if !(lower < upper) {
            return Err(Error::InvalidParameter(format!(
                "bounds must satisfy lower < upper, got [{lower}, {upper}]"
            )));
        }
        let strategy_text = self
            .weights
            .as_ref()
            .and_then(|w| w.strategy.clone())
            .unwrap_or_else(|| "lipschitz".into());
        let strategy = WeightStrategy::from_str(&strategy_text)?;
        let init = self.init.clone().unwrap_or_default();
        let init_kind = match init.kind.as_deref().unwrap_or("auto") {
            "auto" => InitKind::Auto,
            "zeros" => InitKind::Zeros,
            "midpoint" => InitKind::Midpoint,
            "uniform" => InitKind::Uniform,
            other => {
                return Err(Error::InvalidParameter(format!(
                    "init kind must be auto|zeros|midpoint|uniform, got '{other}'"
                )))
            }
        };
        let stop = self.stop.clone().unwrap_or_default();
        if let Some(tol) = stop.step_tol {
            if !(tol > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "step tolerance must be positive, got {tol}"
                )));
            }
        }
        let sim = self.sim.clone().unwrap_or_default();
        let output = self.output.clone().unwrap_or_default();
        Ok(RunConfig {
            mode,
            graph: GraphSpec {
                nodes: graph.nodes.unwrap_or(DEFAULT_NODES),
                edge_prob: graph.edge_prob.unwrap_or(DEFAULT_EDGE_PROB),
                seed: graph.seed.unwrap_or(DEFAULT_GRAPH_SEED),
                file: graph.file,
            },
            instance: InstanceSpec {
                data_seed: instance.data_seed.unwrap_or(DEFAULT_DATA_SEED),
                shift: instance.shift.unwrap_or(DEFAULT_SHIFT),
                lower,
                upper,
                file: instance.file,
            },
            strategy,
            strategy_text,
            init: InitSpec {
                kind: init_kind,
                seed: init.seed.unwrap_or(0),
            },
            stop: StopSpec {
                max_iters: stop.max_iters,
                step_tol: stop.step_tol,
            },
            sim: SimSpec {
                timer_seed: sim.timer_seed.unwrap_or(DEFAULT_TIMER_SEED),
                timer_rate: sim.timer_rate.unwrap_or(DEFAULT_TIMER_RATE),
                audit_every_awake: sim.audit_every_awake.unwrap_or(false),
                log_events: sim.log_events.unwrap_or(false),
            },
            schedule_seed: self
                .schedule
                .as_ref()
                .and_then(|s| s.seed)
                .unwrap_or(DEFAULT_SCHEDULE_SEED),
            output: OutputSpec {
                dir: output.dir.unwrap_or_else(|| DEFAULT_OUT_DIR.into()),
                track_blocks: output.track_blocks.unwrap_or_default(),
            },
        })
    }
}

fn merge_section<T: Clone>(dst: &mut Option<T>, src: &Option<T>, combine: impl Fn(&mut T, &T)) {
    if let Some(s) = src {
        match dst {
            Some(d) => combine(d, s),
            None => *dst = Some(s.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Centralized,
    Async,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Centralized => "centralized",
            Mode::Async => "async",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    /// Zeros when feasible for every box, otherwise box midpoints.
    Auto,
    Zeros,
    Midpoint,
    Uniform,
}

impl InitKind {
    pub fn as_str(self) -> &'static str {
        match self {
            InitKind::Auto => "auto",
            InitKind::Zeros => "zeros",
            InitKind::Midpoint => "midpoint",
            InitKind::Uniform => "uniform",
        }
    }
}

#[derive(Debug, Clone)]
pub struct GraphSpec {
    pub nodes: usize,
    pub edge_prob: f64,
    pub seed: u64,
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct InstanceSpec {
    pub data_seed: u64,
    pub shift: f64,
    pub lower: f64,
    pub upper: f64,
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct InitSpec {
    pub kind: InitKind,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct StopSpec {
    /// `None` resolves to `DEFAULT_ITERS_PER_NODE * N` at run time.
    pub max_iters: Option<usize>,
    pub step_tol: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SimSpec {
    pub timer_seed: u64,
    pub timer_rate: f64,
    pub audit_every_awake: bool,
    pub log_events: bool,
}

#[derive(Debug, Clone)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub track_blocks: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: Mode,
    pub graph: GraphSpec,
    pub instance: InstanceSpec,
    pub strategy: WeightStrategy,
    pub strategy_text: String,
    pub init: InitSpec,
    pub stop: StopSpec,
    pub sim: SimSpec,
    pub schedule_seed: u64,
    pub output: OutputSpec,
}

impl RunConfig {
    /// Fully pinned config echo; reloading it reproduces this run.
    /// `resolved_iters` is the concrete budget after graph sizing.
    pub fn echo(&self, resolved_iters: usize) -> RawConfig {
        RawConfig {
            mode: Some(self.mode.as_str().into()),
            graph: Some(RawGraph {
                nodes: Some(self.graph.nodes),
                edge_prob: Some(self.graph.edge_prob),
                seed: Some(self.graph.seed),
                file: self.graph.file.clone(),
            }),
            instance: Some(RawInstance {
                data_seed: Some(self.instance.data_seed),
                shift: Some(self.instance.shift),
                lower: Some(self.instance.lower),
                upper: Some(self.instance.upper),
                file: self.instance.file.clone(),
            }),
            weights: Some(RawWeights {
                strategy: Some(self.strategy_text.clone()),
            }),
            init: Some(RawInit {
                kind: Some(self.init.kind.as_str().into()),
                seed: Some(self.init.seed),
            }),
            stop: Some(RawStop {
                max_iters: Some(resolved_iters),
                step_tol: self.stop.step_tol,
            }),
            sim: Some(RawSim {
                timer_seed: Some(self.sim.timer_seed),
                timer_rate: Some(self.sim.timer_rate),
                audit_every_awake: Some(self.sim.audit_every_awake),
                log_events: Some(self.sim.log_events),
            }),
            schedule: Some(RawSchedule {
                seed: Some(self.schedule_seed),
            }),
            output: Some(RawOutput {
                dir: Some(self.output.dir.clone()),
                track_blocks: Some(self.output.track_blocks.clone()),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_materialize_once_mode_is_set() {
        let mut raw = RawConfig::default();
        raw.mode = Some("async".into());
        let cfg = raw.materialize().unwrap();
        assert_eq!(cfg.graph.nodes, DEFAULT_NODES);
        assert_eq!(cfg.graph.edge_prob, DEFAULT_EDGE_PROB);
        assert_eq!(cfg.instance.lower, DEFAULT_LOWER);
        assert_eq!(cfg.instance.upper, DEFAULT_UPPER);
        assert_eq!(cfg.strategy_text, "lipschitz");
        assert!(cfg.stop.max_iters.is_none());
        assert_eq!(cfg.sim.timer_rate, DEFAULT_TIMER_RATE);
    }

    #[test]
    fn missing_mode_is_a_config_error() {
        assert!(RawConfig::default().materialize().is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RawConfig::from_toml_str("mode = \"async\"\nbogus = 1\n").is_err());
        assert!(RawConfig::from_toml_str("[graph]\nnodez = 5\n").is_err());
    }

    #[test]
    fn overlay_order_is_preset_then_file_then_flags() {
        let mut layered = RawConfig::default();
        layered.merge(&paper_preset());
        let file = RawConfig::from_toml_str("[stop]\nmax_iters = 7\n").unwrap();
        layered.merge(&file);
        let flags = RawConfig {
            sim: Some(RawSim {
                timer_seed: Some(99),
                ..Default::default()
            }),
            ..Default::default()
        };
        layered.merge(&flags);
        let cfg = layered.materialize().unwrap();
        assert_eq!(cfg.stop.max_iters, Some(7), "file overrides preset");
        assert_eq!(cfg.sim.timer_seed, 99, "flags override everything");
        assert_eq!(cfg.graph.nodes, 50, "preset survives where not overridden");
        assert_eq!(cfg.output.track_blocks, vec![14, 48]);
    }

    #[test]
    fn echo_round_trips_through_toml() {
        let mut raw = RawConfig::default();
        raw.merge(&paper_preset());
        let cfg = raw.materialize().unwrap();
        let echo = cfg.echo(50_000);
        let text = echo.to_toml_string();
        let back = RawConfig::from_toml_str(&text).unwrap().materialize().unwrap();
        assert_eq!(back.graph.nodes, cfg.graph.nodes);
        assert_eq!(back.graph.seed, cfg.graph.seed);
        assert_eq!(back.instance.data_seed, cfg.instance.data_seed);
        assert_eq!(back.strategy_text, cfg.strategy_text);
        assert_eq!(back.stop.max_iters, Some(50_000));
        assert_eq!(back.output.track_blocks, cfg.output.track_blocks);
    }

    #[test]
    fn invalid_bounds_and_strategy_are_rejected() {
        let raw =
            RawConfig::from_toml_str("mode = \"async\"\n[instance]\nlower = 5.0\nupper = 5.0\n")
                .unwrap();
        assert!(raw.materialize().is_err());
        let raw =
            RawConfig::from_toml_str("mode = \"async\"\n[weights]\nstrategy = \"sorcery\"\n")
                .unwrap();
        assert!(raw.materialize().is_err());
    }
}
