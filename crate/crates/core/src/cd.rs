//! Centralized randomized block-coordinate descent and run traces.
//!
//! Each iteration draws one block (or takes the next replayed one), solves
//! its local model, assigns the prox target to the block, and records the
//! step. The recorded objective values let [`descent_monitor`] check the
//! per-step decrease bound `V(x+) <= V(x) - (L_i / 2) |d_i|^2` a posteriori;
//! violations are expected only when the weight strategy undershoots the
//! block Lipschitz constants.

use nalgebra::DVector;
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{block_weight, prox_in_metric, WeightStrategy};
use crate::problem::PartitionedProblem;

/// Absolute slack allowed when checking the per-step decrease bound.
pub const DESCENT_SLACK: f64 = 1e-9;

/// Block selection for the centralized loop.
#[derive(Debug, Clone)]
pub enum BlockSchedule {
    /// Independent draws with fixed probabilities (uniform when `probs` is
    /// `None`), reproducible from the seed.
    Random {
        seed: u64,
        probs: Option<Vec<f64>>,
    },
    /// Fixed sequence, e.g. the awake order of a simulated run.
    Replay(Vec<usize>),
}

impl BlockSchedule {
    pub fn uniform(seed: u64) -> Self {
        Self::Random { seed, probs: None }
    }

    pub fn validate(&self, num_blocks: usize) -> Result<()> {
        match self {
            Self::Random { probs: None, .. } => Ok(()),
            Self::Random {
                probs: Some(p), ..
            } => {
                if p.len() != num_blocks {
                    return Err(Error::DimensionMismatch {
                        expected: num_blocks,
                        got: p.len(),
                    });
                }
                if p.iter().any(|&w| !(w > 0.0)) {
                    return Err(Error::InvalidParameter(
                        "selection probabilities must be positive".into(),
                    ));
                }
                let sum: f64 = p.iter().sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidParameter(format!(
                        "selection probabilities must sum to 1, got {sum}"
                    )));
                }
                Ok(())
            }
            Self::Replay(blocks) => {
                if let Some(&bad) = blocks.iter().find(|&&b| b >= num_blocks) {
                    return Err(Error::BlockIndex {
                        index: bad,
                        count: num_blocks,
                    });
                }
                Ok(())
            }
        }
    }

    fn sampler(&self, num_blocks: usize) -> Result<ScheduleSampler<'_>> {
        self.validate(num_blocks)?;
        Ok(match self {
            Self::Random { seed, probs: None } => ScheduleSampler::Uniform {
                rng: ChaCha8Rng::seed_from_u64(*seed),
                n: num_blocks,
            },
            Self::Random {
                seed,
                probs: Some(p),
            } => ScheduleSampler::Weighted {
                rng: ChaCha8Rng::seed_from_u64(*seed),
                dist: WeightedIndex::new(p.iter().copied())
                    .map_err(|e| Error::InvalidParameter(e.to_string()))?,
            },
            Self::Replay(blocks) => ScheduleSampler::Replay { blocks, next: 0 },
        })
    }
}

enum ScheduleSampler<'a> {
    Uniform { rng: ChaCha8Rng, n: usize },
    Weighted { rng: ChaCha8Rng, dist: WeightedIndex<f64> },
    Replay { blocks: &'a [usize], next: usize },
}

impl ScheduleSampler<'_> {
    fn next_block(&mut self) -> Option<usize> {
        match self {
            Self::Uniform { rng, n } => Some(rng.gen_range(0..*n)),
            Self::Weighted { rng, dist } => Some(dist.sample(rng)),
            Self::Replay { blocks, next } => {
                let b = blocks.get(*next).copied();
                *next += 1;
                b
            }
        }
    }
}

/// Termination rule shared by the centralized loop and the simulator.
///
/// A run stops at `max_iters` updates, or earlier when every step norm in a
/// window of `N` consecutive updates falls below `step_tol`.
#[derive(Debug, Clone)]
pub struct StopRule {
    pub max_iters: usize,
    pub step_tol: Option<f64>,
}

impl StopRule {
    pub fn max_iters(max_iters: usize) -> Self {
        Self {
            max_iters,
            step_tol: None,
        }
    }
}

/// Tracks the largest step norm over the last `window` updates.
pub(crate) struct StepWindow {
    window: usize,
    norms: Vec<f64>,
    count: usize,
}

impl StepWindow {
    pub(crate) fn new(window: usize) -> Self {
        Self {
            window,
            norms: vec![0.0; window.max(1)],
            count: 0,
        }
    }

    /// Returns true once a full window of norms sits strictly below `tol`.
    pub(crate) fn push_and_check(&mut self, norm: f64, tol: Option<f64>) -> bool {
        self.norms[self.count % self.window.max(1)] = norm;
        self.count += 1;
        match tol {
            Some(t) if self.count >= self.window => {
                self.norms.iter().all(|&n| n < t)
            }
            _ => false,
        }
    }
}

/// One recorded update.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub block: usize,
    pub step_norm: f64,
    /// Objective value after the update.
    pub value: f64,
    /// Wall-clock of the awake event in simulated runs, `None` centrally.
    pub sim_time: Option<f64>,
}

/// Record of a full run: initial value, one row per update, the final point,
/// and optionally every post-update iterate for replay comparisons.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub initial_value: f64,
    pub steps: Vec<StepRecord>,
    pub final_x: DVector<f64>,
    pub states: Option<Vec<DVector<f64>>>,
}

impl RunTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Block sequence of the run, usable as a replay schedule.
    pub fn blocks(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.block).collect()
    }

    pub fn final_value(&self) -> f64 {
        self.steps.last().map_or(self.initial_value, |s| s.value)
    }

    /// `V(x(t)) - V(x_final)` per recorded step.
    pub fn value_gaps(&self) -> Vec<f64> {
        let v_final = self.final_value();
        self.steps.iter().map(|s| s.value - v_final).collect()
    }

    /// CSV with header `t,block,step_norm,V,V_gap,sim_time`; floats carry 17
    /// significant digits so parsing them back is exact. `t` counts updates
    /// from 0 and `sim_time` stays empty for centralized runs.
    pub fn to_csv_string(&self) -> String {
        let v_final = self.final_value();
        let mut out = String::from("t,block,step_norm,V,V_gap,sim_time\n");
        for (t, s) in self.steps.iter().enumerate() {
            let sim_time = s.sim_time.map_or(String::new(), csv_float);
            out.push_str(&format!(
                "{t},{},{},{},{},{sim_time}\n",
                s.block,
                csv_float(s.step_norm),
                csv_float(s.value),
                csv_float(s.value - v_final),
            ));
        }
        out
    }
}

/// Decimal text with 17 significant digits, enough to round-trip any f64.
pub fn csv_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// One block update at `x`: solves the local model of block `i`, assigns the
/// prox target, and reports the step together with the new objective value.
pub fn cd_step(
    problem: &PartitionedProblem,
    x: &DVector<f64>,
    i: usize,
    strategy: &WeightStrategy,
) -> Result<(DVector<f64>, StepRecord)> {
    let grad = problem.partial_grad_f(x, i)?;
    let q = block_weight(problem, x, i, strategy)?;
    let xi = problem.layout().extract_block(x, i)?;
    let v = &xi - q.solve(&grad)?;
    let target = prox_in_metric(&q, problem.regularizer(i), &v)?;
    let d = &target - &xi;
    let mut x_next = x.clone();
    problem.layout().set_block(&mut x_next, i, &target)?;
    let value = problem.aggregate_value(&x_next)?;
    let record = StepRecord {
        block: i,
        step_norm: d.norm(),
        value,
        sim_time: None,
    };
    Ok((x_next, record))
}

/// Runs the centralized loop from `x0` until the stop rule fires.
///
/// The starting point must have a finite objective. Every update is traced;
/// `record_states` additionally stores each post-update iterate.
pub fn run_cd(
    problem: &PartitionedProblem,
    x0: &DVector<f64>,
    schedule: &BlockSchedule,
    strategy: &WeightStrategy,
    stop: &StopRule,
    record_states: bool,
) -> Result<RunTrace> {
    let initial_value = problem.aggregate_value(x0)?;
    if !initial_value.is_finite() {
        return Err(Error::InfeasibleStart);
    }
    let mut sampler = schedule.sampler(problem.num_nodes())?;
    let mut window = StepWindow::new(problem.num_nodes());
    let mut x = x0.clone();
    let mut steps = Vec::new();
    let mut states = record_states.then(Vec::new);

    for t in 0..stop.max_iters {
        let Some(i) = sampler.next_block() else {
            break; // replay exhausted
        };
        let (x_next, record) = cd_step(problem, &x, i, strategy)?;
        if !record.value.is_finite() {
            return Err(Error::NonFiniteValue { iteration: t });
        }
        x = x_next;
        if let Some(states) = states.as_mut() {
            states.push(x.clone());
        }
        let converged = window.push_and_check(record.step_norm, stop.step_tol);
        steps.push(record);
        if converged {
            break;
        }
    }
    Ok(RunTrace {
        initial_value,
        steps,
        final_x: x,
        states,
    })
}

/// A step that failed the decrease bound by more than [`DESCENT_SLACK`].
#[derive(Debug, Clone, PartialEq)]
pub struct DescentViolation {
    pub t: usize,
    pub block: usize,
    /// Objective value observed after the step.
    pub observed: f64,
    /// Largest value the bound permits, before slack.
    pub bound: f64,
}

/// Replays the recorded values of a trace against the per-step bound
/// `V(x(t+1)) <= V(x(t)) - (L_i / 2) |d_i|^2`.
pub fn descent_monitor(trace: &RunTrace, problem: &PartitionedProblem) -> Vec<DescentViolation> {
    let mut violations = Vec::new();
    let mut prev = trace.initial_value;
    for (t, s) in trace.steps.iter().enumerate() {
        let bound = prev - 0.5 * problem.block_lipschitz(s.block) * s.step_norm * s.step_norm;
        if s.value > bound + DESCENT_SLACK {
            violations.push(DescentViolation {
                t,
                block: s.block,
                observed: s.value,
                bound,
            });
        }
        prev = s.value;
    }
    violations
}
