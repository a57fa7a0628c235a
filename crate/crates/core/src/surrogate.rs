//! Deterministic static planner.
//!
//! Maps a work-cell and a chromosome to per-operation cycle times and motion
//! traces. Each agent starts every operation at its home point and walks the
//! task's primitive sequence: travel primitives (MoveTo, Overfly, Get, Put)
//! cost their base time plus distance over speed and move the working point
//! linearly over the whole step; the others cost their base time in place.
//! Robot joint states come from a planar two-link arm, elbow-up branch.

use crate::geometry::Vec2;
use crate::model::{
    Agent, AgentId, AgentKind, Chromosome, OperationId, OperationKind, Primitive, Step, Workcell,
};
use crate::scheduler::Schedule;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SurrogateError {
    #[error("UNREACHABLE: {op} waypoint {at:?} is outside the reach of {agent}")]
    Unreachable {
        op: OperationId,
        agent: AgentId,
        at: [f64; 2],
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrimitiveStep {
    pub kind: Primitive,
    pub from: Vec2,
    pub to: Vec2,
    /// Start time relative to the operation start, seconds.
    pub start: f64,
    pub duration: f64,
    pub actor: AgentId,
}

impl PrimitiveStep {
    pub fn end(&self) -> f64 {
        self.start + self.duration
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceSample {
    /// Seconds since the operation start.
    pub time: f64,
    pub position: Vec2,
    /// `(q1, q2)` for robots.
    pub joints: Option<(f64, f64)>,
}

/// Activity of one agent inside an operation.
#[derive(Clone, Debug, PartialEq)]
pub struct Lane {
    pub actor: AgentId,
    pub kind: AgentKind,
    pub start: f64,
    pub end: f64,
    pub steps: Vec<PrimitiveStep>,
    pub samples: Vec<TraceSample>,
}

impl Lane {
    /// Working point at an operation-local time, clamped to the lane span.
    pub fn position_at(&self, t: f64) -> Vec2 {
        let Some(first) = self.steps.first() else {
            return Vec2::default();
        };
        if t <= first.start {
            return first.from;
        }
        for s in &self.steps {
            if t <= s.end() {
                if s.duration <= 0.0 {
                    return s.to;
                }
                return s.from.lerp(s.to, (t - s.start) / s.duration);
            }
        }
        self.steps.last().map_or(first.from, |s| s.to)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MotionTrace {
    pub op: OperationId,
    pub lanes: Vec<Lane>,
}

impl MotionTrace {
    pub fn steps(&self) -> impl Iterator<Item = &PrimitiveStep> {
        self.lanes.iter().flat_map(|l| l.steps.iter())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Plan {
    /// Cycle time of every operation, seconds.
    pub cycle_times: Vec<f64>,
    pub traces: Vec<MotionTrace>,
}

/// Joint angles of a planar 2-link arm reaching `target` (meters, relative
/// to the base). Elbow-up: `q2 <= 0`. Out-of-reach targets are clamped.
pub fn planar_ik(target: Vec2, l1: f64, l2: f64) -> (f64, f64) {
    let r2 = target.dot(target);
    let c = ((r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)).clamp(-1.0, 1.0);
    let q2 = -c.acos();
    let q1 = target.y.atan2(target.x) - (l2 * q2.sin()).atan2(l1 + l2 * q2.cos());
    (q1, q2)
}

/// `det J = l1 * l2 * sin(q2)` of the planar arm.
pub fn jacobian_det(q2: f64, l1: f64, l2: f64) -> f64 {
    l1 * l2 * q2.sin()
}

fn reachable(agent: &Agent, p: Vec2) -> bool {
    match agent.link_lengths {
        Some([l1, l2]) => {
            let r = p.distance(agent.base);
            let tol = 1e-9 * (l1 + l2);
            r >= (l1 - l2).abs() - tol && r <= l1 + l2 + tol
        }
        None => true,
    }
}

fn build_lane(
    spec: &Workcell,
    x: &Chromosome,
    op: OperationId,
    actor: AgentId,
    steps: &[Step],
    start: f64,
) -> Result<Lane, SurrogateError> {
    let agent = spec.agent(actor);
    let mpu = spec.meters_per_unit();
    let unreachable = |p: Vec2| SurrogateError::Unreachable {
        op,
        agent: actor,
        at: [p.x, p.y],
    };
    if agent.kind == AgentKind::Robot && !reachable(agent, agent.home) {
        return Err(unreachable(agent.home));
    }
    let mut pos = agent.home;
    let mut t = start;
    let mut out = Vec::with_capacity(steps.len());
    for step in steps {
        let to = step
            .target
            .filter(|_| step.primitive.is_travel())
            .map_or(pos, |r| spec.resource_position(&x.layout, r));
        if agent.kind == AgentKind::Robot && !reachable(agent, to) {
            return Err(unreachable(to));
        }
        let base = agent.primitive_times.get(&step.primitive).copied().unwrap_or(0.0);
        let travel = if step.primitive.is_travel() {
            pos.distance(to) * mpu / agent.speed
        } else {
            0.0
        };
        let duration = base + travel;
        out.push(PrimitiveStep {
            kind: step.primitive,
            from: pos,
            to,
            start: t,
            duration,
            actor,
        });
        t += duration;
        pos = to;
    }
    let mut lane = Lane {
        actor,
        kind: agent.kind,
        start,
        end: t,
        steps: out,
        samples: Vec::new(),
    };
    lane.samples = sample_lane(&lane, agent, spec.simulation.dt, mpu);
    Ok(lane)
}

fn sample_lane(lane: &Lane, agent: &Agent, dt: f64, mpu: f64) -> Vec<TraceSample> {
    let span = lane.end - lane.start;
    let n = (span / dt).floor() as usize;
    let mut times: Vec<f64> = (0..=n).map(|k| lane.start + k as f64 * dt).collect();
    if times.last().is_some_and(|&last| lane.end - last > 1e-12) {
        times.push(lane.end);
    }
    times
        .into_iter()
        .map(|time| {
            let position = lane.position_at(time);
            let joints = agent
                .link_lengths
                .map(|[l1, l2]| planar_ik((position - agent.base) * mpu, l1 * mpu, l2 * mpu));
            TraceSample {
                time,
                position,
                joints,
            }
        })
        .collect()
}

/// Plans one operation under the chromosome's layout and allocation,
/// returning its cycle time and trace.
pub fn plan_operation(
    spec: &Workcell,
    op: OperationId,
    x: &Chromosome,
) -> Result<(f64, MotionTrace), SurrogateError> {
    let operation = spec.operation(op);
    let eta = &x.allocation[op.0];
    let mut lanes = Vec::new();
    match operation.kind {
        OperationKind::Individual => {
            let actor = eta[0];
            let task = &spec.tasks[operation.task.0];
            lanes.push(build_lane(
                spec,
                x,
                op,
                actor,
                task.steps_for(spec.agent(actor).kind),
                0.0,
            )?);
        }
        OperationKind::Collaborative => {
            let mut prev_end = 0.0;
            for sub in &operation.collab_sequence {
                let actor = eta[sub.slot];
                let task = &spec.tasks[sub.task.0];
                let start = sub.offset.unwrap_or(prev_end);
                let lane = build_lane(
                    spec,
                    x,
                    op,
                    actor,
                    task.steps_for(spec.agent(actor).kind),
                    start,
                )?;
                prev_end = lane.end;
                lanes.push(lane);
            }
        }
    }
    let tau = lanes.iter().map(|l| l.end).fold(0.0, f64::max);
    Ok((tau, MotionTrace { op, lanes }))
}

/// Plans every operation.
pub fn plan_all(spec: &Workcell, x: &Chromosome) -> Result<Plan, SurrogateError> {
    let mut cycle_times = Vec::with_capacity(spec.op_count());
    let mut traces = Vec::with_capacity(spec.op_count());
    for i in 0..spec.op_count() {
        let (tau, trace) = plan_operation(spec, OperationId(i), x)?;
        cycle_times.push(tau);
        traces.push(trace);
    }
    Ok(Plan {
        cycle_times,
        traces,
    })
}

/// True when, while a human and a robot work on different concurrently
/// scheduled operations, the robot working point comes closer than the
/// keep-out radius to the human's working point. Checked every `dt`.
pub fn collision_flag(spec: &Workcell, schedule: &Schedule, traces: &[MotionTrace]) -> bool {
    let dt = spec.simulation.dt;
    let d_safe = spec.simulation.d_safe;
    let mpu = spec.meters_per_unit();
    let lanes: Vec<(usize, f64, &Lane)> = traces
        .iter()
        .enumerate()
        .flat_map(|(i, tr)| tr.lanes.iter().map(move |l| (i, schedule.start[i], l)))
        .collect();
    for &(i, si, human) in lanes.iter().filter(|(_, _, l)| l.kind == AgentKind::Human) {
        for &(j, sj, robot) in lanes.iter().filter(|(_, _, l)| l.kind == AgentKind::Robot) {
            if i == j {
                continue;
            }
            let lo = (si + human.start).max(sj + robot.start);
            let hi = (si + human.end).min(sj + robot.end);
            if hi <= lo {
                continue;
            }
            let n = ((hi - lo) / dt).floor() as usize;
            let mut times = (0..=n).map(|k| lo + k as f64 * dt).collect::<Vec<_>>();
            times.push(hi);
            for t in times {
                let ph = human.position_at(t - si);
                let pr = robot.position_at(t - sj);
                if ph.distance(pr) * mpu < d_safe {
                    return true;
                }
            }
        }
    }
    false
}
