//! Follower problem: start times that minimize the makespan under precedence
//! and agent availability.
//!
//! Both schedulers dispatch operations one at a time. A dispatched operation
//! starts at the latest of its predecessors' completions and the availability
//! `R_k` of every allocated agent; afterwards each allocated agent becomes
//! available at the operation's completion. They differ only in how the
//! dispatch order is chosen.

use std::collections::HashMap;
use std::sync::Arc;

use crate::model::{AgentId, OperationId, PrecedenceGraph, Workcell};
use crate::registry::{Named, Registry};

pub const DEFAULT_EXACT_MAX_OPS: usize = 12;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ScheduleError {
    #[error("CYCLE: precedence graph is cyclic")]
    Cycle,
    #[error("TOO_LARGE: {ops} operations exceed the exact solver limit of {max_ops}")]
    TooLarge { ops: usize, max_ops: usize },
    #[error("scheduling input mismatch: {0}")]
    Mismatch(String),
}

/// Inputs of one scheduling instance.
#[derive(Clone, Copy, Debug)]
pub struct Instance<'a> {
    pub precedence: &'a PrecedenceGraph,
    pub allocation: &'a [Vec<AgentId>],
    pub durations: &'a [f64],
    pub agents: usize,
}

impl<'a> Instance<'a> {
    pub fn new(spec: &'a Workcell, allocation: &'a [Vec<AgentId>], durations: &'a [f64]) -> Self {
        Instance {
            precedence: &spec.precedence,
            allocation,
            durations,
            agents: spec.agent_count(),
        }
    }

    pub fn len(&self) -> usize {
        self.durations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.durations.is_empty()
    }

    fn check(&self) -> Result<Vec<usize>, ScheduleError> {
        let t = self.len();
        if self.precedence.len() != t || self.allocation.len() != t {
            return Err(ScheduleError::Mismatch(format!(
                "{} durations, {} precedence rows, {} allocations",
                t,
                self.precedence.len(),
                self.allocation.len()
            )));
        }
        if self.allocation.iter().flatten().any(|a| a.0 >= self.agents) {
            return Err(ScheduleError::Mismatch("allocation names a missing agent".into()));
        }
        self.precedence.topological_order().ok_or(ScheduleError::Cycle)
    }

    /// Longest path from each operation to a sink, inclusive of its own duration.
    pub fn bottom_levels(&self, topo: &[usize]) -> Vec<f64> {
        let mut bl = self.durations.to_vec();
        for &i in topo.iter().rev() {
            let tail = self
                .precedence
                .successors(i)
                .into_iter()
                .map(|j| bl[j])
                .fold(0.0, f64::max);
            bl[i] = self.durations[i] + tail;
        }
        bl
    }
}

/// Start times, completions and the agent-availability trace.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    pub start: Vec<f64>,
    pub completion: Vec<f64>,
    pub makespan: f64,
    /// Successive `R_k` values per agent with the operation that set them.
    pub availability: Vec<Vec<(OperationId, f64)>>,
    /// Dispatch order.
    pub order: Vec<usize>,
}

impl Schedule {
    /// Builds a schedule from explicit start times; dispatch order is by start.
    pub fn from_starts(
        start: Vec<f64>,
        durations: Vec<f64>,
        allocation: &[Vec<AgentId>],
        agents: usize,
    ) -> Self {
        let mut order: Vec<usize> = (0..start.len()).collect();
        order.sort_by(|&a, &b| start[a].total_cmp(&start[b]).then(a.cmp(&b)));
        let completion: Vec<f64> = start.iter().zip(&durations).map(|(s, d)| s + d).collect();
        let mut availability = vec![Vec::new(); agents];
        for &i in &order {
            for a in &allocation[i] {
                availability[a.0].push((OperationId(i), completion[i]));
            }
        }
        Schedule {
            makespan: completion.iter().copied().fold(0.0, f64::max),
            start,
            completion,
            availability,
            order,
        }
    }

    /// Checks non-negativity, precedence, and that no agent runs two
    /// operations in overlapping open intervals.
    pub fn verify(&self, inst: &Instance<'_>) -> Result<(), String> {
        let t = inst.len();
        for i in 0..t {
            if self.start[i] < 0.0 {
                return Err(format!("o{} starts before 0", i + 1));
            }
            if self.completion[i] != self.start[i] + inst.durations[i] {
                return Err(format!("o{} completion is not start + duration", i + 1));
            }
        }
        for (i, j) in inst.precedence.edges() {
            if self.start[j] < self.completion[i] {
                return Err(format!("o{} starts before o{} completes", j + 1, i + 1));
            }
        }
        for k in 0..inst.agents {
            let mut spans: Vec<(f64, f64)> = (0..t)
                .filter(|&i| inst.allocation[i].contains(&AgentId(k)))
                .map(|i| (self.start[i], self.completion[i]))
                .collect();
            spans.sort_by(|a, b| a.0.total_cmp(&b.0));
            for w in spans.windows(2) {
                if w[1].0 < w[0].1 {
                    return Err(format!("a{} runs two operations at once", k + 1));
                }
            }
        }
        let ms = self.completion.iter().copied().fold(0.0, f64::max);
        if ms != self.makespan {
            return Err("makespan is not the latest completion".into());
        }
        Ok(())
    }
}

/// Incremental dispatch state shared by both schedulers.
#[derive(Clone)]
struct Dispatcher<'a> {
    inst: Instance<'a>,
    preds: Vec<Vec<usize>>,
    start: Vec<f64>,
    completion: Vec<f64>,
    scheduled: Vec<bool>,
    ready_count: Vec<usize>,
    availability: Vec<f64>,
    trace: Vec<Vec<(OperationId, f64)>>,
    order: Vec<usize>,
    makespan: f64,
}

impl<'a> Dispatcher<'a> {
    fn new(inst: Instance<'a>) -> Self {
        let t = inst.len();
        let preds: Vec<Vec<usize>> = (0..t).map(|j| inst.precedence.predecessors(j)).collect();
        Dispatcher {
            ready_count: preds.iter().map(Vec::len).collect(),
            preds,
            inst,
            start: vec![0.0; t],
            completion: vec![0.0; t],
            scheduled: vec![false; t],
            availability: vec![0.0; inst.agents],
            trace: vec![Vec::new(); inst.agents],
            order: Vec::with_capacity(t),
            makespan: 0.0,
        }
    }

    fn ready(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.inst.len()).filter(|&j| !self.scheduled[j] && self.ready_count[j] == 0)
    }

    fn earliest_start(&self, j: usize) -> f64 {
        let pred = self.preds[j]
            .iter()
            .map(|&i| self.completion[i])
            .fold(0.0, f64::max);
        self.inst.allocation[j]
            .iter()
            .map(|a| self.availability[a.0])
            .fold(pred, f64::max)
    }

    fn dispatch(&mut self, j: usize) {
        let s = self.earliest_start(j);
        let c = s + self.inst.durations[j];
        self.start[j] = s;
        self.completion[j] = c;
        self.scheduled[j] = true;
        for a in self.inst.allocation[j].iter() {
            self.availability[a.0] = c;
            self.trace[a.0].push((OperationId(j), c));
        }
        for k in self.inst.precedence.successors(j) {
            self.ready_count[k] -= 1;
        }
        self.order.push(j);
        self.makespan = self.makespan.max(c);
    }

    fn finish(self) -> Schedule {
        Schedule {
            start: self.start,
            completion: self.completion,
            makespan: self.makespan,
            availability: self.trace,
            order: self.order,
        }
    }
}

/// A follower solver selectable by name.
pub trait Scheduler: Named + Send + Sync {
    fn schedule(&self, inst: &Instance<'_>) -> Result<Schedule, ScheduleError>;
}

/// Greedy list scheduling by longest remaining critical path; ties go to
/// the lower operation index.
#[derive(Clone, Copy, Debug, Default)]
pub struct ListScheduler;

impl Named for ListScheduler {
    fn name(&self) -> &'static str {
        "list"
    }
}

impl Scheduler for ListScheduler {
    fn schedule(&self, inst: &Instance<'_>) -> Result<Schedule, ScheduleError> {
        let topo = inst.check()?;
        let bl = inst.bottom_levels(&topo);
        let mut d = Dispatcher::new(*inst);
        for _ in 0..inst.len() {
            let j = d
                .ready()
                .max_by(|&a, &b| bl[a].total_cmp(&bl[b]).then(b.cmp(&a)))
                .expect("acyclic graph always has a ready operation");
            d.dispatch(j);
        }
        Ok(d.finish())
    }
}

/// Depth-first branch-and-bound over dispatch orders.
#[derive(Clone, Copy, Debug)]
pub struct ExactScheduler {
    pub max_ops: usize,
}

impl Default for ExactScheduler {
    fn default() -> Self {
        ExactScheduler {
            max_ops: DEFAULT_EXACT_MAX_OPS,
        }
    }
}

impl Named for ExactScheduler {
    fn name(&self) -> &'static str {
        "exact"
    }
}

struct Search<'a> {
    bl: Vec<f64>,
    best: Schedule,
    seen: HashMap<Vec<u64>, f64>,
    inst: Instance<'a>,
}

impl Search<'_> {
    fn lower_bound(&self, d: &Dispatcher<'_>) -> f64 {
        let mut lb = d.makespan;
        let mut load = d.availability.clone();
        for j in (0..d.inst.len()).filter(|&j| !d.scheduled[j]) {
            let est = d.preds[j]
                .iter()
                .filter(|&&i| d.scheduled[i])
                .map(|&i| d.completion[i])
                .chain(d.inst.allocation[j].iter().map(|a| d.availability[a.0]))
                .fold(0.0, f64::max);
            lb = lb.max(est + self.bl[j]);
            for a in &d.inst.allocation[j] {
                load[a.0] += d.inst.durations[j];
            }
        }
        load.into_iter().fold(lb, f64::max)
    }

    /// State key: scheduled set, agent availability, and completions that
    /// still constrain unscheduled successors.
    fn key(&self, d: &Dispatcher<'_>) -> Vec<u64> {
        let t = d.inst.len();
        let mask = d
            .scheduled
            .iter()
            .enumerate()
            .fold(0u64, |m, (i, &s)| m | (u64::from(s) << i));
        let mut key = vec![mask];
        key.extend(d.availability.iter().map(|r| r.to_bits()));
        for i in 0..t {
            if d.scheduled[i]
                && self
                    .inst
                    .precedence
                    .successors(i)
                    .iter()
                    .any(|&j| !d.scheduled[j])
            {
                key.push(d.completion[i].to_bits());
            }
        }
        key
    }

    fn explore(&mut self, d: Dispatcher<'_>) {
        if d.order.len() == d.inst.len() {
            if d.makespan < self.best.makespan {
                self.best = d.finish();
            }
            return;
        }
        if self.lower_bound(&d) >= self.best.makespan {
            return;
        }
        let key = self.key(&d);
        match self.seen.get(&key) {
            Some(&m) if m <= d.makespan => return,
            _ => {
                self.seen.insert(key, d.makespan);
            }
        }
        let mut ready: Vec<usize> = d.ready().collect();
        ready.sort_by(|&a, &b| self.bl[b].total_cmp(&self.bl[a]).then(a.cmp(&b)));
        for j in ready {
            let mut next = d.clone();
            next.dispatch(j);
            self.explore(next);
        }
    }
}

impl Scheduler for ExactScheduler {
    fn schedule(&self, inst: &Instance<'_>) -> Result<Schedule, ScheduleError> {
        if inst.len() > self.max_ops || inst.len() > 64 {
            return Err(ScheduleError::TooLarge {
                ops: inst.len(),
                max_ops: self.max_ops.min(64),
            });
        }
        let topo = inst.check()?;
        let incumbent = ListScheduler.schedule(inst)?;
        let mut search = Search {
            bl: inst.bottom_levels(&topo),
            best: incumbent,
            seen: HashMap::new(),
            inst: *inst,
        };
        search.explore(Dispatcher::new(*inst));
        Ok(search.best)
    }
}

pub fn schedule_list(spec: &Workcell, allocation: &[Vec<AgentId>], durations: &[f64]) -> Result<Schedule, ScheduleError> {
    ListScheduler.schedule(&Instance::new(spec, allocation, durations))
}

pub fn schedule_exact(
    spec: &Workcell,
    allocation: &[Vec<AgentId>],
    durations: &[f64],
    max_ops: usize,
) -> Result<Schedule, ScheduleError> {
    ExactScheduler { max_ops }.schedule(&Instance::new(spec, allocation, durations))
}

/// Registry holding the built-in `list` and `exact` schedulers.
pub fn builtin_schedulers(exact_max_ops: usize) -> Registry<dyn Scheduler> {
    let mut reg: Registry<dyn Scheduler> = Registry::empty();
    reg.register(Arc::new(ListScheduler));
    reg.register(Arc::new(ExactScheduler {
        max_ops: exact_max_ops,
    }));
    reg
}

#[derive(Clone, Debug, PartialEq)]
pub struct GanttBar {
    pub op: OperationId,
    pub start: f64,
    pub end: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GanttRow {
    pub agent: AgentId,
    pub agent_name: String,
    pub bars: Vec<GanttBar>,
}

/// Per-agent timeline; collaborative operations appear on every allocated
/// agent's row.
#[derive(Clone, Debug, PartialEq)]
pub struct GanttTable {
    pub rows: Vec<GanttRow>,
    pub makespan: f64,
}

pub fn gantt(schedule: &Schedule, allocation: &[Vec<AgentId>], spec: &Workcell) -> GanttTable {
    let rows = spec
        .agents
        .iter()
        .enumerate()
        .map(|(k, agent)| {
            let mut bars: Vec<GanttBar> = allocation
                .iter()
                .enumerate()
                .filter(|(_, eta)| eta.contains(&AgentId(k)))
                .map(|(i, _)| GanttBar {
                    op: OperationId(i),
                    start: schedule.start[i],
                    end: schedule.completion[i],
                })
                .collect();
            bars.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.op.cmp(&b.op)));
            GanttRow {
                agent: AgentId(k),
                agent_name: agent.name.clone(),
                bars,
            }
        })
        .collect();
    GanttTable {
        rows,
        makespan: schedule.makespan,
    }
}
