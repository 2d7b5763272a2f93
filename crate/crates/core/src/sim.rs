//! Event-driven simulator of the asynchronous gossip execution.
//!
//! Every node owns its block, a cache of neighbor states, and a cache of the
//! partial gradients its neighbors' terms take with respect to its own
//! block. Nodes sleep on independent exponential timers with a common rate.
//! Because the minimum of independent exponential clocks is uniform over the
//! nodes and memoryless, the induced awake sequence matches the centralized
//! uniform sampler, and the common rate only scales simulated time.
//!
//! Awake protocol for node `i`:
//! 1. minimize the local model built from the cached gradient sum,
//! 2. assign the prox target to the owned block,
//! 3. broadcast the new block together with the refreshed partial gradient
//!    `grad_j f_i` to every `j` in the closed neighborhood,
//! 4. draw a fresh timer deadline.
//!
//! Idle protocol: a state broadcast from `j` overwrites the cached `x_j` and
//! gradient slot, then the receiver recomputes the partial gradients of its
//! own term at the new neighborhood point and fans them out as
//! gradient-only messages. A gradient-only message just overwrites one cache
//! slot. Messages are delivered in FIFO order with zero simulated delay and
//! always before any later timer fire, so a full cascade settles between
//! consecutive awakes; the consistency audit checks cache agreement
//! bit-for-bit at exactly those quiescent points.
//!
//! Determinism: timers draw from per-node RNG streams derived from one
//! master seed, events are totally ordered by (time, kind, sequence number),
//! and all floating-point reductions run in fixed neighbor order. Two runs
//! with the same seeds produce bit-identical traces, and replaying the awake
//! sequence through the centralized loop reproduces the iterates exactly,
//! which [`trace_equivalence`] measures.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cd::{run_cd, BlockSchedule, RunTrace, StepRecord, StepWindow, StopRule};
use crate::error::{Error, Result};
use crate::model::{block_weight, prox_in_metric, WeightStrategy};
use crate::problem::PartitionedProblem;

/// Simulation parameters. `stop.max_iters` counts awake events.
#[derive(Debug, Clone)]
pub struct SimOptions {
    pub timer_seed: u64,
    /// Common exponential timer rate. Scales simulated time only; the block
    /// selection law stays uniform.
    pub timer_rate: f64,
    pub stop: StopRule,
    /// Store every post-awake iterate (needed for replay comparisons).
    pub record_states: bool,
    /// Run a full consistency audit at the quiescent point before every
    /// awake and abort on the first failure.
    pub audit_every_awake: bool,
    /// Keep a one-line log per processed event.
    pub log_events: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            timer_seed: 0,
            timer_rate: 1.0,
            stop: StopRule::max_iters(1000),
            record_states: false,
            audit_every_awake: false,
            log_events: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MessagePayload {
    /// Updated block of the sender plus the sender-term gradient with
    /// respect to the receiver's block at the sender's new local view.
    StateBroadcast {
        state: DVector<f64>,
        partial_grad: DVector<f64>,
    },
    /// Refreshed `grad_receiver f_sender` after the sender absorbed a state
    /// broadcast.
    GradientOnly { partial_grad: DVector<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub sender: usize,
    pub receiver: usize,
    pub payload: MessagePayload,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    Deliver(Message),
    TimerFire(usize),
}

impl EventKind {
    /// Deliveries outrank timer fires at equal times, so message cascades
    /// always finish before the next awake even on exact time collisions.
    fn rank(&self) -> u8 {
        match self {
            EventKind::Deliver(_) => 0,
            EventKind::TimerFire(_) => 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimEvent {
    pub time: f64,
    pub seq: u64,
    pub kind: EventKind,
}

impl PartialEq for SimEvent {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for SimEvent {}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SimEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then_with(|| self.kind.rank().cmp(&other.kind.rank()))
            .then_with(|| self.seq.cmp(&other.seq))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AuditFailure {
    /// Node `holder` caches a value of block `owner` that differs from the
    /// owner's actual block.
    StateMismatch { holder: usize, owner: usize },
    /// Node `node` caches a gradient of term `term` that differs from the
    /// recomputed ground truth.
    GradientMismatch { node: usize, term: usize },
}

impl fmt::Display for AuditFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::StateMismatch { holder, owner } => {
                write!(f, "node {holder} holds a stale copy of block {owner}")
            }
            Self::GradientMismatch { node, term } => {
                write!(f, "node {node} holds a stale gradient of term {term}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub failures: Vec<AuditFailure>,
}

impl AuditReport {
    pub fn is_pass(&self) -> bool {
        self.failures.is_empty()
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_pass() {
            write!(f, "all caches consistent")
        } else {
            for (k, fail) in self.failures.iter().enumerate() {
                if k > 0 {
                    writeln!(f)?;
                }
                write!(f, "{fail}")?;
            }
            Ok(())
        }
    }
}

struct NodeRuntime {
    /// Owned block estimate.
    x: DVector<f64>,
    /// Cached neighbor blocks, slot order = sorted closed neighborhood.
    neighbor_states: Vec<DVector<f64>>,
    /// Slot `k` holds `grad_i f_{j_k}` for the k-th neighbor `j_k`.
    grad_cache: Vec<DVector<f64>>,
    rng: ChaCha8Rng,
    next_deadline: f64,
}

pub struct Simulator<'a> {
    problem: &'a PartitionedProblem,
    strategy: WeightStrategy,
    options: SimOptions,
    nodes: Vec<NodeRuntime>,
    /// Stacked copy of all owned blocks, kept in lockstep for bookkeeping.
    global_x: DVector<f64>,
    queue: BinaryHeap<std::cmp::Reverse<SimEvent>>,
    seq: u64,
    now: f64,
    awakes: usize,
    initial_value: f64,
    steps: Vec<StepRecord>,
    states: Option<Vec<DVector<f64>>>,
    broadcasts_sent: u64,
    gradients_sent: u64,
    event_log: Option<Vec<String>>,
}

impl<'a> Simulator<'a> {
    pub fn new(
        problem: &'a PartitionedProblem,
        x0: &DVector<f64>,
        strategy: WeightStrategy,
        options: SimOptions,
    ) -> Result<Self> {
        if !(options.timer_rate > 0.0 && options.timer_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "timer rate must be positive and finite, got {}",
                options.timer_rate
            )));
        }
        let initial_value = problem.aggregate_value(x0)?;
        if !initial_value.is_finite() {
            return Err(Error::InfeasibleStart);
        }
        let layout = problem.layout();
        let graph = problem.graph();

        // Warm-up: every cache starts consistent with the shared x0, as if a
        // synchronous broadcast round had run before time zero.
        let mut nodes = Vec::with_capacity(problem.num_nodes());
        for i in 0..problem.num_nodes() {
            let nbrs = graph.neighbors(i);
            let neighbor_states = nbrs
                .iter()
                .map(|&j| layout.extract_block(x0, j))
                .collect::<Result<Vec<_>>>()?;
            let grad_cache = nbrs
                .iter()
                .map(|&j| problem.partial_gradient_of_term(x0, j, i))
                .collect();
            let mut rng = ChaCha8Rng::seed_from_u64(options.timer_seed);
            rng.set_stream(i as u64);
            nodes.push(NodeRuntime {
                x: layout.extract_block(x0, i)?,
                neighbor_states,
                grad_cache,
                rng,
                next_deadline: 0.0,
            });
        }

        let record_states = options.record_states;
        let log_events = options.log_events;
        let mut sim = Self {
            problem,
            strategy,
            options,
            nodes,
            global_x: x0.clone(),
            queue: BinaryHeap::new(),
            seq: 0,
            now: 0.0,
            awakes: 0,
            initial_value,
            steps: Vec::new(),
            states: record_states.then(Vec::new),
            broadcasts_sent: 0,
            gradients_sent: 0,
            event_log: log_events.then(Vec::new),
        };
        for i in 0..sim.nodes.len() {
            sim.schedule_next_fire(i);
        }
        Ok(sim)
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn awake_count(&self) -> usize {
        self.awakes
    }

    /// (state broadcasts, gradient-only messages) enqueued so far.
    pub fn message_counts(&self) -> (u64, u64) {
        (self.broadcasts_sent, self.gradients_sent)
    }

    pub fn event_log(&self) -> Option<&[String]> {
        self.event_log.as_deref()
    }

    fn push_event(&mut self, time: f64, kind: EventKind) {
        let ev = SimEvent {
            time,
            seq: self.seq,
            kind,
        };
        self.seq += 1;
        self.queue.push(std::cmp::Reverse(ev));
    }

    /// Draws the next exponential deadline of `node` from its own stream and
    /// enqueues the fire. Deadlines of one node strictly increase.
    fn schedule_next_fire(&mut self, node: usize) {
        let rate = self.options.timer_rate;
        let rng = &mut self.nodes[node].rng;
        let gap = loop {
            let u: f64 = rng.gen();
            let dt = -(1.0 - u).ln() / rate;
            if dt > 0.0 {
                break dt;
            }
        };
        let deadline = self.now + gap;
        debug_assert!(deadline > self.now);
        self.nodes[node].next_deadline = deadline;
        self.push_event(deadline, EventKind::TimerFire(node));
    }

    /// Stacked cached neighborhood view of `node`, ascending block order.
    fn local_view(&self, node: usize) -> DVector<f64> {
        let nbrs = self.problem.graph().neighbors(node);
        let dim: usize = nbrs
            .iter()
            .map(|&j| self.problem.layout().block_dim(j))
            .sum();
        let mut out = DVector::zeros(dim);
        let mut pos = 0usize;
        for (slot, &j) in nbrs.iter().enumerate() {
            let d = self.problem.layout().block_dim(j);
            out.rows_mut(pos, d)
                .copy_from(&self.nodes[node].neighbor_states[slot]);
            let _ = j;
            pos += d;
        }
        out
    }

    /// Handles one timer fire of node `i`: local model step on cached
    /// gradients, block update, broadcast fan-out, timer reset.
    pub fn awake_step(&mut self, i: usize) -> Result<StepRecord> {
        if i >= self.nodes.len() {
            return Err(Error::BlockIndex {
                index: i,
                count: self.nodes.len(),
            });
        }
        let problem = self.problem;
        let nbrs = problem.graph().neighbors(i);

        // Model gradient from the cache, in the same neighbor order the
        // centralized loop uses, so the sums agree bit for bit.
        let mut grad = DVector::zeros(problem.layout().block_dim(i));
        for slot in 0..nbrs.len() {
            grad += &self.nodes[i].grad_cache[slot];
        }
        let q = block_weight(problem, &self.global_x, i, &self.strategy)?;
        let xi = &self.nodes[i].x;
        let v = xi - q.solve(&grad)?;
        let target = prox_in_metric(&q, problem.regularizer(i), &v)?;
        let d = &target - xi;

        self.nodes[i].x = target.clone();
        problem.layout().set_block(&mut self.global_x, i, &target)?;
        let self_slot = problem
            .graph()
            .neighbor_slot(i, i)
            .expect("closed neighborhoods contain the node itself");
        self.nodes[i].neighbor_states[self_slot] = target.clone();

        // Broadcast the new block to the whole closed neighborhood (the
        // self-directed copy keeps the fan-out uniform), pairing each copy
        // with the refreshed gradient of this node's own term with respect
        // to the receiver's block.
        let view = self.local_view(i);
        let nbrs_owned: Vec<usize> = nbrs.to_vec();
        for &j in &nbrs_owned {
            let partial_grad = problem.term(i).partial_gradient(&view, j);
            self.push_event(
                self.now,
                EventKind::Deliver(Message {
                    sender: i,
                    receiver: j,
                    payload: MessagePayload::StateBroadcast {
                        state: target.clone(),
                        partial_grad,
                    },
                }),
            );
            self.broadcasts_sent += 1;
        }

        self.schedule_next_fire(i);

        let value = problem.aggregate_value(&self.global_x)?;
        if !value.is_finite() {
            return Err(Error::NonFiniteValue {
                iteration: self.awakes,
            });
        }
        let record = StepRecord {
            block: i,
            step_norm: d.norm(),
            value,
            sim_time: Some(self.now),
        };
        self.steps.push(record.clone());
        if let Some(states) = self.states.as_mut() {
            states.push(self.global_x.clone());
        }
        Ok(record)
    }

    /// Processes one received message at an idle node.
    pub fn idle_handle(&mut self, msg: Message) -> Result<()> {
        let n = self.nodes.len();
        if msg.receiver >= n || msg.sender >= n {
            return Err(Error::ProtocolViolation(format!(
                "message endpoints ({}, {}) out of range",
                msg.sender, msg.receiver
            )));
        }
        let Some(slot) = self.problem.graph().neighbor_slot(msg.receiver, msg.sender) else {
            return Err(Error::ProtocolViolation(format!(
                "node {} received a message from non-neighbor {}",
                msg.receiver, msg.sender
            )));
        };
        match msg.payload {
            MessagePayload::GradientOnly { partial_grad } => {
                self.nodes[msg.receiver].grad_cache[slot] = partial_grad;
            }
            MessagePayload::StateBroadcast {
                state,
                partial_grad,
            } => {
                let r = msg.receiver;
                self.nodes[r].neighbor_states[slot] = state;
                self.nodes[r].grad_cache[slot] = partial_grad;
                // A neighbor moved, so this node's own term gradients are
                // stale everywhere: recompute at the updated view and fan
                // them out to the whole closed neighborhood.
                let view = self.local_view(r);
                let problem = self.problem;
                let receivers: Vec<usize> = problem.graph().neighbors(r).to_vec();
                for &k in &receivers {
                    let refreshed = problem.term(r).partial_gradient(&view, k);
                    self.push_event(
                        self.now,
                        EventKind::Deliver(Message {
                            sender: r,
                            receiver: k,
                            payload: MessagePayload::GradientOnly {
                                partial_grad: refreshed,
                            },
                        }),
                    );
                    self.gradients_sent += 1;
                }
            }
        }
        Ok(())
    }

    /// Delivers every pending message without letting any timer fire,
    /// reaching the next quiescent point.
    pub fn drain_deliveries(&mut self) -> Result<()> {
        while let Some(std::cmp::Reverse(top)) = self.queue.peek() {
            if !matches!(top.kind, EventKind::Deliver(_)) {
                break;
            }
            let std::cmp::Reverse(ev) = self.queue.pop().expect("peeked");
            self.now = ev.time;
            self.log_event(&ev);
            match ev.kind {
                EventKind::Deliver(msg) => self.idle_handle(msg)?,
                EventKind::TimerFire(_) => unreachable!(),
            }
        }
        Ok(())
    }

    /// One manual awake of node `i` followed by its full message cascade.
    /// Bypasses the timers; intended for protocol-level tests and tools.
    pub fn awake_now(&mut self, i: usize) -> Result<StepRecord> {
        let record = self.awake_step(i)?;
        self.awakes += 1;
        self.drain_deliveries()?;
        Ok(record)
    }

    /// Bitwise cache agreement check. Sound only at quiescence (no pending
    /// deliveries): every cached neighbor block must equal the owner's block
    /// and every cached gradient must equal its recomputation from the
    /// global state.
    pub fn consistency_audit(&self) -> AuditReport {
        let mut failures = Vec::new();
        for i in 0..self.nodes.len() {
            for (slot, &j) in self.problem.graph().neighbors(i).iter().enumerate() {
                if !bits_equal(&self.nodes[i].neighbor_states[slot], &self.nodes[j].x) {
                    failures.push(AuditFailure::StateMismatch {
                        holder: i,
                        owner: j,
                    });
                }
                let truth = self.problem.partial_gradient_of_term(&self.global_x, j, i);
                if !bits_equal(&self.nodes[i].grad_cache[slot], &truth) {
                    failures.push(AuditFailure::GradientMismatch { node: i, term: j });
                }
            }
        }
        AuditReport { failures }
    }

    fn check_audit(&self) -> Result<()> {
        let report = self.consistency_audit();
        if report.is_pass() {
            Ok(())
        } else {
            Err(Error::AuditFailed(report))
        }
    }

    fn log_event(&mut self, ev: &SimEvent) {
        if let Some(log) = self.event_log.as_mut() {
            let line = match &ev.kind {
                EventKind::TimerFire(i) => format!("time={:.9} fire node={i}", ev.time),
                EventKind::Deliver(m) => {
                    let (kind, norm) = match &m.payload {
                        MessagePayload::StateBroadcast { state, .. } => ("state", state.norm()),
                        MessagePayload::GradientOnly { partial_grad } => {
                            ("grad", partial_grad.norm())
                        }
                    };
                    format!(
                        "time={:.9} deliver kind={kind} from={} to={} norm={:.6e}",
                        ev.time, m.sender, m.receiver, norm
                    )
                }
            };
            log.push(line);
        }
    }

    /// Runs until the stop rule fires, then settles the last cascade and
    /// audits. Returns the recorded trace.
    pub fn run(&mut self) -> Result<RunTrace> {
        if self.options.audit_every_awake {
            self.check_audit()?;
        }
        let stop = self.options.stop.clone();
        let mut window = StepWindow::new(self.problem.num_nodes());
        let mut converged = false;
        while self.awakes < stop.max_iters && !converged {
            let Some(std::cmp::Reverse(ev)) = self.queue.pop() else {
                break;
            };
            debug_assert!(ev.time >= self.now, "event times are nondecreasing");
            self.now = ev.time;
            self.log_event(&ev);
            match ev.kind {
                EventKind::Deliver(msg) => self.idle_handle(msg)?,
                EventKind::TimerFire(i) => {
                    // The queue holds no deliveries here: cascades sort
                    // before any later fire, so this is a quiescent point.
                    if self.options.audit_every_awake {
                        self.check_audit()?;
                    }
                    let record = self.awake_step(i)?;
                    self.awakes += 1;
                    converged = window.push_and_check(record.step_norm, stop.step_tol);
                }
            }
        }
        self.drain_deliveries()?;
        self.check_audit()?;
        Ok(RunTrace {
            initial_value: self.initial_value,
            steps: self.steps.clone(),
            final_x: self.global_x.clone(),
            states: self.states.clone(),
        })
    }
}

fn bits_equal(a: &DVector<f64>, b: &DVector<f64>) -> bool {
    a.len() == b.len() && a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Builds a simulator and runs it to completion.
pub fn run_simulation(
    problem: &PartitionedProblem,
    x0: &DVector<f64>,
    strategy: &WeightStrategy,
    options: &SimOptions,
) -> Result<RunTrace> {
    Simulator::new(problem, x0, strategy.clone(), options.clone())?.run()
}

/// Replays the awake sequence of a simulated trace through the centralized
/// loop and returns the largest per-iteration state deviation in the max
/// norm. The trace must carry recorded states. Identical local models make
/// this exactly zero; an inner prox solve bounds it by twice its tolerance.
pub fn trace_equivalence(
    problem: &PartitionedProblem,
    x0: &DVector<f64>,
    trace: &RunTrace,
    strategy: &WeightStrategy,
) -> Result<f64> {
    let sim_states = trace.states.as_ref().ok_or_else(|| {
        Error::ReplayMismatch("trace carries no recorded states".into())
    })?;
    if sim_states.len() != trace.steps.len() {
        return Err(Error::ReplayMismatch(format!(
            "{} recorded states for {} steps",
            sim_states.len(),
            trace.steps.len()
        )));
    }
    let replay = run_cd(
        problem,
        x0,
        &BlockSchedule::Replay(trace.blocks()),
        strategy,
        &StopRule::max_iters(trace.steps.len()),
        true,
    )?;
    let cd_states = replay.states.as_ref().expect("states were requested");
    if cd_states.len() != sim_states.len() {
        return Err(Error::ReplayMismatch(format!(
            "replay produced {} steps for {} simulated",
            cd_states.len(),
            sim_states.len()
        )));
    }
    let mut worst = 0.0f64;
    for (a, b) in sim_states.iter().zip(cd_states.iter()) {
        let diff = a - b;
        if diff.len() > 0 {
            worst = worst.max(diff.amax());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cd::cd_step;
    use crate::graph::CommGraph;
    use crate::problem::generate_paper_instance;

    fn qp_box_problem(n: usize, p: f64, gseed: u64, dseed: u64) -> PartitionedProblem {
        let graph = CommGraph::erdos_renyi_connected(n, p, gseed).unwrap();
        generate_paper_instance(&graph, dseed, &vec![(-30.0, 20.0); n], 2.0).unwrap()
    }

    fn zeros(n: usize) -> DVector<f64> {
        DVector::zeros(n)
    }

    #[test]
    fn warm_up_caches_pass_audit() {
        let p = qp_box_problem(8, 0.5, 1, 2);
        let sim = Simulator::new(&p, &zeros(8), WeightStrategy::LipschitzIdentity, SimOptions::default())
            .unwrap();
        assert!(sim.consistency_audit().is_pass());
    }

    #[test]
    fn single_awake_matches_centralized_step() {
        let p = qp_box_problem(6, 0.5, 3, 4);
        let x0 = zeros(6);
        let mut sim =
            Simulator::new(&p, &x0, WeightStrategy::LipschitzIdentity, SimOptions::default()).unwrap();
        let rec = sim.awake_now(2).unwrap();
        let (x1, cd_rec) = cd_step(&p, &x0, 2, &WeightStrategy::LipschitzIdentity).unwrap();
        assert!(bits_equal(&sim.global_x, &x1));
        assert_eq!(rec.step_norm.to_bits(), cd_rec.step_norm.to_bits());
        assert_eq!(rec.value.to_bits(), cd_rec.value.to_bits());
        assert!(sim.consistency_audit().is_pass());
    }

    #[test]
    fn cascade_message_counts_match_neighborhood_sizes() {
        // Path 0 - 1 - 2: awaking node 1 broadcasts to {0, 1, 2} and each
        // receiver fans gradients back out over its own closed neighborhood.
        let graph = CommGraph::path(3).unwrap();
        let p = generate_paper_instance(&graph, 7, &vec![(-30.0, 20.0); 3], 2.0).unwrap();
        let mut sim =
            Simulator::new(&p, &zeros(3), WeightStrategy::LipschitzIdentity, SimOptions::default())
                .unwrap();
        sim.awake_now(1).unwrap();
        let (broadcasts, gradients) = sim.message_counts();
        assert_eq!(broadcasts, 3, "one broadcast per closed neighbor");
        assert_eq!(gradients, 2 + 3 + 2, "sum of receiver neighborhood sizes");
    }

    #[test]
    fn awakes_of_distant_nodes_commute() {
        // Path 0 - 1 - 2 - 3: the closed neighborhoods of nodes 0 and 3 are
        // disjoint, so no term couples them and their awakes read disjoint
        // caches; the final state is order-independent. (Distance-2 nodes do
        // interfere through the shared middle term, as the centralized
        // method demands.)
        let graph = CommGraph::path(4).unwrap();
        let p = generate_paper_instance(&graph, 9, &vec![(-30.0, 20.0); 4], 2.0).unwrap();
        let x0 = zeros(4);

        let mut ab =
            Simulator::new(&p, &x0, WeightStrategy::LipschitzIdentity, SimOptions::default()).unwrap();
        ab.awake_now(0).unwrap();
        ab.awake_now(3).unwrap();

        let mut ba =
            Simulator::new(&p, &x0, WeightStrategy::LipschitzIdentity, SimOptions::default()).unwrap();
        ba.awake_now(3).unwrap();
        ba.awake_now(0).unwrap();

        assert!(bits_equal(&ab.global_x, &ba.global_x));
        assert!(ab.consistency_audit().is_pass());
        assert!(ba.consistency_audit().is_pass());
    }

    #[test]
    fn corrupted_gradient_cache_is_caught_with_identity() {
        let p = qp_box_problem(6, 0.5, 5, 6);
        let mut sim =
            Simulator::new(&p, &zeros(6), WeightStrategy::LipschitzIdentity, SimOptions::default())
                .unwrap();
        sim.awake_now(0).unwrap();
        assert!(sim.consistency_audit().is_pass());
        let slot = 1.min(sim.nodes[3].grad_cache.len() - 1);
        sim.nodes[3].grad_cache[slot][0] += 1e-9;
        let report = sim.consistency_audit();
        assert_eq!(report.failures.len(), 1);
        let expected_term = p.graph().neighbors(3)[slot];
        assert_eq!(
            report.failures[0],
            AuditFailure::GradientMismatch { node: 3, term: expected_term }
        );
    }

    #[test]
    fn corrupted_state_cache_is_caught_with_identity() {
        let p = qp_box_problem(6, 0.5, 5, 6);
        let mut sim =
            Simulator::new(&p, &zeros(6), WeightStrategy::LipschitzIdentity, SimOptions::default())
                .unwrap();
        sim.awake_now(4).unwrap();
        let slot = 0;
        let owner = p.graph().neighbors(2)[slot];
        sim.nodes[2].neighbor_states[slot][0] = -0.0; // bitwise change of 0.0
        let report = sim.consistency_audit();
        assert!(report
            .failures
            .contains(&AuditFailure::StateMismatch { holder: 2, owner }));
    }

    #[test]
    fn run_aborts_on_corrupted_cache_when_auditing() {
        let p = qp_box_problem(5, 0.6, 8, 9);
        let mut sim = Simulator::new(
            &p,
            &zeros(5),
            WeightStrategy::LipschitzIdentity,
            SimOptions {
                stop: StopRule::max_iters(10),
                audit_every_awake: true,
                ..SimOptions::default()
            },
        )
        .unwrap();
        sim.nodes[1].grad_cache[0][0] += 0.5;
        match sim.run() {
            Err(Error::AuditFailed(report)) => assert!(!report.is_pass()),
            other => panic!("expected audit failure, got {other:?}"),
        }
    }

    #[test]
    fn non_neighbor_message_rejected() {
        let graph = CommGraph::path(3).unwrap();
        let p = generate_paper_instance(&graph, 7, &vec![(-30.0, 20.0); 3], 2.0).unwrap();
        let mut sim =
            Simulator::new(&p, &zeros(3), WeightStrategy::LipschitzIdentity, SimOptions::default())
                .unwrap();
        let err = sim.idle_handle(Message {
            sender: 0,
            receiver: 2,
            payload: MessagePayload::GradientOnly {
                partial_grad: DVector::zeros(1),
            },
        });
        assert!(matches!(err, Err(Error::ProtocolViolation(_))));
    }

    #[test]
    fn identical_seeds_give_bit_identical_traces() {
        let p = qp_box_problem(10, 0.4, 11, 12);
        let opts = SimOptions {
            timer_seed: 77,
            stop: StopRule::max_iters(200),
            record_states: true,
            ..SimOptions::default()
        };
        let a = run_simulation(&p, &zeros(10), &WeightStrategy::LipschitzIdentity, &opts).unwrap();
        let b = run_simulation(&p, &zeros(10), &WeightStrategy::LipschitzIdentity, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_csv_string(), b.to_csv_string());
    }

    #[test]
    fn event_times_nondecreasing_and_per_node_strictly_increasing() {
        let p = qp_box_problem(6, 0.5, 13, 14);
        let opts = SimOptions {
            timer_seed: 3,
            stop: StopRule::max_iters(300),
            ..SimOptions::default()
        };
        let trace = run_simulation(&p, &zeros(6), &WeightStrategy::LipschitzIdentity, &opts).unwrap();
        let mut last = 0.0f64;
        let mut per_node: Vec<f64> = vec![-1.0; 6];
        for s in &trace.steps {
            let t = s.sim_time.unwrap();
            assert!(t >= last);
            assert!(t > per_node[s.block], "fires of one node strictly increase");
            per_node[s.block] = t;
            last = t;
        }
    }

    #[test]
    fn simulated_run_is_replay_equivalent() {
        let p = qp_box_problem(8, 0.4, 15, 16);
        let opts = SimOptions {
            timer_seed: 5,
            stop: StopRule::max_iters(150),
            record_states: true,
            ..SimOptions::default()
        };
        let trace = run_simulation(&p, &zeros(8), &WeightStrategy::LipschitzIdentity, &opts).unwrap();
        let dev = trace_equivalence(&p, &zeros(8), &trace, &WeightStrategy::LipschitzIdentity).unwrap();
        assert_eq!(dev, 0.0, "closed-form local models replay exactly");
    }

    #[test]
    fn equivalence_requires_recorded_states() {
        let p = qp_box_problem(5, 0.6, 17, 18);
        let opts = SimOptions {
            stop: StopRule::max_iters(20),
            record_states: false,
            ..SimOptions::default()
        };
        let trace = run_simulation(&p, &zeros(5), &WeightStrategy::LipschitzIdentity, &opts).unwrap();
        assert!(matches!(
            trace_equivalence(&p, &zeros(5), &trace, &WeightStrategy::LipschitzIdentity),
            Err(Error::ReplayMismatch(_))
        ));
    }

    #[test]
    fn zero_iteration_run_yields_empty_trace() {
        let p = qp_box_problem(5, 0.6, 19, 20);
        let opts = SimOptions {
            stop: StopRule::max_iters(0),
            record_states: true,
            ..SimOptions::default()
        };
        let trace = run_simulation(&p, &zeros(5), &WeightStrategy::LipschitzIdentity, &opts).unwrap();
        assert!(trace.is_empty());
        assert_eq!(trace.final_x, zeros(5));
        let dev = trace_equivalence(&p, &zeros(5), &trace, &WeightStrategy::LipschitzIdentity).unwrap();
        assert_eq!(dev, 0.0);
    }

    #[test]
    fn infeasible_start_rejected() {
        let p = qp_box_problem(5, 0.6, 21, 22);
        let x0 = DVector::from_element(5, 25.0); // above every upper bound
        assert!(matches!(
            Simulator::new(&p, &x0, WeightStrategy::LipschitzIdentity, SimOptions::default()),
            Err(Error::InfeasibleStart)
        ));
    }

    #[test]
    fn invalid_timer_rate_rejected() {
        let p = qp_box_problem(5, 0.6, 23, 24);
        let opts = SimOptions {
            timer_rate: 0.0,
            ..SimOptions::default()
        };
        assert!(Simulator::new(&p, &zeros(5), WeightStrategy::LipschitzIdentity, opts).is_err());
    }

    #[test]
    fn timer_rate_scales_time_not_selection() {
        let p = qp_box_problem(6, 0.5, 25, 26);
        let base = SimOptions {
            timer_seed: 9,
            stop: StopRule::max_iters(400),
            ..SimOptions::default()
        };
        let slow = run_simulation(&p, &zeros(6), &WeightStrategy::LipschitzIdentity, &base).unwrap();
        let fast = run_simulation(
            &p,
            &zeros(6),
            &WeightStrategy::LipschitzIdentity,
            &SimOptions {
                timer_rate: 10.0,
                ..base
            },
        )
        .unwrap();
        assert_eq!(slow.blocks(), fast.blocks(), "same awake order");
        for (a, b) in slow.steps.iter().zip(fast.steps.iter()) {
            let ta = a.sim_time.unwrap();
            let tb = b.sim_time.unwrap();
            assert!((ta / 10.0 - tb).abs() <= 1e-12 * ta.abs().max(1.0));
        }
    }

    #[test]
    fn event_log_records_every_event() {
        let graph = CommGraph::path(3).unwrap();
        let p = generate_paper_instance(&graph, 7, &vec![(-30.0, 20.0); 3], 2.0).unwrap();
        let mut sim = Simulator::new(
            &p,
            &zeros(3),
            WeightStrategy::LipschitzIdentity,
            SimOptions {
                stop: StopRule::max_iters(2),
                log_events: true,
                ..SimOptions::default()
            },
        )
        .unwrap();
        sim.run().unwrap();
        let log = sim.event_log().unwrap();
        assert!(log.iter().any(|l| l.contains("fire")));
        assert!(log.iter().any(|l| l.contains("kind=state")));
        assert!(log.iter().any(|l| l.contains("kind=grad")));
    }
}
