//! Work-cell domain entities.
//!
//! Everything here is plain data plus structural validation. Indices are
//! 0-based internally and rendered 1-based (`o1`, `a2`, ...) in reports.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::{self, Vec2};

macro_rules! index_type {
    ($(#[$meta:meta])* $name:ident, $prefix:literal) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub usize);

        impl $name {
            pub fn index(self) -> usize {
                self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0 + 1)
            }
        }
    };
}

index_type!(OperationId, "o");
index_type!(AgentId, "a");
index_type!(ResourceId, "r");
index_type!(TaskId, "t");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Primitive {
    MoveTo,
    Overfly,
    Screwing,
    Open,
    Close,
    Get,
    Put,
    Pose,
    Wait,
}

impl Primitive {
    pub const ROBOT: [Primitive; 5] = [
        Primitive::MoveTo,
        Primitive::Overfly,
        Primitive::Screwing,
        Primitive::Open,
        Primitive::Close,
    ];
    pub const HUMAN: [Primitive; 4] = [
        Primitive::Get,
        Primitive::Put,
        Primitive::Pose,
        Primitive::Wait,
    ];

    pub fn is_robot(self) -> bool {
        Self::ROBOT.contains(&self)
    }

    /// Travel primitives move the working point to a target resource.
    pub fn is_travel(self) -> bool {
        matches!(
            self,
            Primitive::MoveTo | Primitive::Overfly | Primitive::Get | Primitive::Put
        )
    }
}

impl fmt::Display for Primitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Human,
    Robot,
}

impl AgentKind {
    pub fn allows(self, p: Primitive) -> bool {
        match self {
            AgentKind::Human => !p.is_robot(),
            AgentKind::Robot => p.is_robot(),
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgentKind::Human => "human",
            AgentKind::Robot => "robot",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub min: f64,
    pub max: f64,
}

impl Interval {
    pub const fn new(min: f64, max: f64) -> Self {
        Interval { min, max }
    }
}

/// Working area of an agent around its base, in layout units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Annulus {
    pub d_min: f64,
    pub d_max: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Agent {
    pub name: String,
    pub kind: AgentKind,
    pub base: Vec2,
    /// Working point at the start of every operation.
    pub home: Vec2,
    pub workspace: Annulus,
    /// Linear speed of the working point in m/s.
    pub speed: f64,
    /// Planar 2-link arm, layout units. Robots only.
    pub link_lengths: Option<[f64; 2]>,
    pub primitive_times: BTreeMap<Primitive, f64>,
    /// Cap on individual operations allocated to this agent; `None` means no cap.
    pub allocation_cap: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Resource {
    pub name: String,
    pub movable: bool,
    /// Coordinates; the first two are the centroid. For movable resources
    /// these are the nominal values only, the chromosome carries the layout.
    pub coords: Vec<f64>,
    /// Convex counter-clockwise footprint in the local frame.
    pub footprint: Vec<Vec2>,
    /// Per-DoF search range; empty for fixed resources.
    pub bounds: Vec<Interval>,
}

impl Resource {
    pub fn dofs(&self) -> usize {
        self.coords.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Step {
    pub primitive: Primitive,
    pub target: Option<ResourceId>,
}

/// Primitive sequences for one task, per agent kind.
#[derive(Clone, Debug, PartialEq)]
pub struct Task {
    pub name: String,
    pub human: Vec<Step>,
    pub robot: Vec<Step>,
}

impl Task {
    pub fn steps_for(&self, kind: AgentKind) -> &[Step] {
        match kind {
            AgentKind::Human => &self.human,
            AgentKind::Robot => &self.robot,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperationKind {
    Individual,
    Collaborative,
}

/// One entry of a collaborative operation's internal sequence. `slot`
/// indexes the operation's allocation vector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubTask {
    pub slot: usize,
    pub task: TaskId,
    /// Start offset from the operation start; `None` chains after the
    /// previous sub-task.
    pub offset: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Operation {
    pub name: String,
    pub kind: OperationKind,
    pub required_agents: usize,
    pub task: TaskId,
    pub collab_sequence: Vec<SubTask>,
}

/// `n x t` matrix with 0 = capable, 1 = not capable.
#[derive(Clone, Debug, PartialEq)]
pub struct CapabilityMatrix {
    rows: Vec<Vec<u8>>,
}

impl CapabilityMatrix {
    pub fn new(rows: Vec<Vec<u8>>) -> Self {
        CapabilityMatrix { rows }
    }

    pub fn rows(&self) -> &[Vec<u8>] {
        &self.rows
    }

    pub fn agent_count(&self) -> usize {
        self.rows.len()
    }

    pub fn capable(&self, agent: AgentId, op: OperationId) -> bool {
        self.rows
            .get(agent.0)
            .and_then(|r| r.get(op.0))
            .is_some_and(|&b| b == 0)
    }
}

/// `t x t` precedence matrix; `P[i][j] = 1` when `o_i` precedes `o_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct PrecedenceGraph {
    matrix: Vec<Vec<u8>>,
}

impl PrecedenceGraph {
    pub fn new(matrix: Vec<Vec<u8>>) -> Self {
        PrecedenceGraph { matrix }
    }

    pub fn from_edges(t: usize, edges: &[(usize, usize)]) -> Self {
        let mut matrix = vec![vec![0u8; t]; t];
        for &(i, j) in edges {
            matrix[i][j] = 1;
        }
        PrecedenceGraph { matrix }
    }

    pub fn matrix(&self) -> &[Vec<u8>] {
        &self.matrix
    }

    pub fn len(&self) -> usize {
        self.matrix.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.is_empty()
    }

    pub fn precedes(&self, i: usize, j: usize) -> bool {
        self.matrix[i][j] == 1
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let t = self.len();
        (0..t)
            .flat_map(|i| (0..t).map(move |j| (i, j)))
            .filter(|&(i, j)| self.matrix[i][j] == 1)
            .collect()
    }

    pub fn predecessors(&self, j: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.matrix[i][j] == 1).collect()
    }

    pub fn successors(&self, i: usize) -> Vec<usize> {
        (0..self.len()).filter(|&j| self.matrix[i][j] == 1).collect()
    }

    /// Kahn's algorithm, smallest index first; `None` when cyclic.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let t = self.len();
        let mut indeg: Vec<usize> = (0..t).map(|j| self.predecessors(j).len()).collect();
        let mut ready: std::collections::BTreeSet<usize> =
            (0..t).filter(|&j| indeg[j] == 0).collect();
        let mut order = Vec::with_capacity(t);
        while let Some(i) = ready.pop_first() {
            order.push(i);
            for j in self.successors(i) {
                indeg[j] -= 1;
                if indeg[j] == 0 {
                    ready.insert(j);
                }
            }
        }
        (order.len() == t).then_some(order)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LengthUnit {
    M,
    Mm,
}

impl LengthUnit {
    pub fn meters_per_unit(self) -> f64 {
        match self {
            LengthUnit::M => 1.0,
            LengthUnit::Mm => 1e-3,
        }
    }
}

/// Parameters of the surrogate simulator and safety check.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulationParams {
    /// Trace sampling step, seconds.
    pub dt: f64,
    /// Human/robot keep-out radius, meters.
    pub d_safe: f64,
    /// Lower clamp on mean |det J|, m^2.
    pub manipulability_floor: f64,
    /// Reach-distance class limits, meters, ascending.
    pub reach_thresholds: [f64; 3],
}

impl Default for SimulationParams {
    fn default() -> Self {
        SimulationParams {
            dt: 0.01,
            d_safe: 0.2,
            manipulability_floor: 1e-6,
            reach_thresholds: [0.4, 0.6, 0.8],
        }
    }
}

/// Optional optimizer settings stored with the work-cell.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaSection {
    pub parents: Option<usize>,
    pub children: Option<usize>,
    pub iterations: Option<usize>,
    pub mutation_rate: Option<f64>,
    /// Layout units.
    pub mutation_step: Option<f64>,
    pub beta: Option<f64>,
    pub stagnation_limit: Option<usize>,
    pub weights: Option<[f64; 4]>,
    pub seed: Option<u64>,
    pub selection: Option<String>,
    pub scheduler: Option<String>,
    pub max_tries: Option<usize>,
    pub child_attempts: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Workcell {
    pub name: String,
    pub length_unit: LengthUnit,
    pub operations: Vec<Operation>,
    pub tasks: Vec<Task>,
    pub precedence: PrecedenceGraph,
    pub agents: Vec<Agent>,
    pub resources: Vec<Resource>,
    pub capability: CapabilityMatrix,
    pub simulation: SimulationParams,
    pub ga: GaSection,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dimensions {
    /// Layout genes.
    pub layout: usize,
    /// Allocation genes.
    pub allocation: usize,
    pub total: usize,
}

impl Workcell {
    pub fn op_count(&self) -> usize {
        self.operations.len()
    }

    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    pub fn meters_per_unit(&self) -> f64 {
        self.length_unit.meters_per_unit()
    }

    pub fn operation(&self, id: OperationId) -> &Operation {
        &self.operations[id.0]
    }

    pub fn agent(&self, id: AgentId) -> &Agent {
        &self.agents[id.0]
    }

    /// Agents capable of an operation, ascending.
    pub fn eligible_agents(&self, op: OperationId) -> Vec<AgentId> {
        (0..self.agents.len())
            .map(AgentId)
            .filter(|&a| self.capability.capable(a, op))
            .collect()
    }

    /// The forced allocation of a collaborative operation: the first `m_i`
    /// capable agents, bound to sub-task slots in order.
    pub fn forced_allocation(&self, op: OperationId) -> Vec<AgentId> {
        let mut agents = self.eligible_agents(op);
        agents.truncate(self.operation(op).required_agents);
        agents
    }

    pub fn individual_op_count(&self) -> usize {
        self.operations
            .iter()
            .filter(|o| o.kind == OperationKind::Individual)
            .count()
    }

    /// Effective `k_j`: the agent's cap or the number of individual operations.
    pub fn allocation_cap(&self, agent: AgentId) -> usize {
        let v = self.individual_op_count();
        self.agents[agent.0].allocation_cap.map_or(v, |k| k.min(v))
    }

    pub fn movable_resources(&self) -> impl Iterator<Item = (ResourceId, &Resource)> {
        self.resources
            .iter()
            .enumerate()
            .filter(|(_, r)| r.movable)
            .map(|(i, r)| (ResourceId(i), r))
    }

    /// Start index of each resource's coordinates in the layout vector.
    pub fn layout_offsets(&self) -> Vec<Option<usize>> {
        let mut at = 0;
        self.resources
            .iter()
            .map(|r| {
                r.movable.then(|| {
                    let start = at;
                    at += r.dofs();
                    start
                })
            })
            .collect()
    }

    pub fn layout_bounds(&self) -> Vec<Interval> {
        self.movable_resources()
            .flat_map(|(_, r)| r.bounds.iter().copied())
            .collect()
    }

    pub fn chromosome_dimensions(&self) -> Dimensions {
        let layout = self.movable_resources().map(|(_, r)| r.dofs()).sum();
        let allocation = self.operations.iter().map(|o| o.required_agents).sum();
        Dimensions {
            layout,
            allocation,
            total: layout + allocation,
        }
    }

    /// Coordinates of a resource under a given layout vector.
    pub fn resource_coords<'a>(&'a self, layout: &'a [f64], id: ResourceId) -> &'a [f64] {
        let r = &self.resources[id.0];
        match self.layout_offsets()[id.0] {
            Some(start) => &layout[start..start + r.dofs()],
            None => &r.coords,
        }
    }

    pub fn resource_position(&self, layout: &[f64], id: ResourceId) -> Vec2 {
        let c = self.resource_coords(layout, id);
        Vec2::new(c[0], c[1])
    }

    /// Nominal layout vector assembled from stored resource coordinates.
    pub fn nominal_layout(&self) -> Vec<f64> {
        self.movable_resources()
            .flat_map(|(_, r)| r.coords.iter().copied())
            .collect()
    }

    /// Resources an operation touches, in step order (task plus sub-tasks).
    pub fn resources_used(&self, op: OperationId) -> Vec<ResourceId> {
        let o = self.operation(op);
        let mut tasks = vec![o.task];
        tasks.extend(o.collab_sequence.iter().map(|s| s.task));
        let mut used = Vec::new();
        for t in tasks {
            let task = &self.tasks[t.0];
            for step in task.human.iter().chain(&task.robot) {
                if let Some(r) = step.target {
                    if !used.contains(&r) {
                        used.push(r);
                    }
                }
            }
        }
        used
    }
}

/// Leader design point: layout genes followed by allocation genes.
#[derive(Clone, Debug, PartialEq)]
pub struct Chromosome {
    pub layout: Vec<f64>,
    /// `allocation[i]` holds the `m_i` agents of operation `i`.
    pub allocation: Vec<Vec<AgentId>>,
}

impl Chromosome {
    pub fn allocation_len(&self) -> usize {
        self.allocation.iter().map(Vec::len).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DiagnosticCode {
    CyclicPrecedence,
    SelfPrecedence,
    NoCapableAgent,
    DimensionMismatch,
    KindMismatch,
    MissingCollabSequence,
    BadCollabSlot,
    NonConvexFootprint,
    BadWorkspace,
    BadSpeed,
    BadLinkLengths,
    AgentOrder,
    UnknownReference,
    PrimitiveNotInCatalog,
    MissingPrimitiveTime,
    BadBounds,
    BadBinaryEntry,
    FixedOutsideWorkspace,
    FixedOverlap,
    BadSimulation,
}

impl DiagnosticCode {
    pub fn as_str(self) -> &'static str {
        use DiagnosticCode::*;
        match self {
            CyclicPrecedence => "CYCLIC_PRECEDENCE",
            SelfPrecedence => "SELF_PRECEDENCE",
            NoCapableAgent => "NO_CAPABLE_AGENT",
            DimensionMismatch => "DIMENSION_MISMATCH",
            KindMismatch => "KIND_MISMATCH",
            MissingCollabSequence => "MISSING_COLLAB_SEQUENCE",
            BadCollabSlot => "BAD_COLLAB_SLOT",
            NonConvexFootprint => "NON_CONVEX_FOOTPRINT",
            BadWorkspace => "BAD_WORKSPACE",
            BadSpeed => "BAD_SPEED",
            BadLinkLengths => "BAD_LINK_LENGTHS",
            AgentOrder => "AGENT_ORDER",
            UnknownReference => "UNKNOWN_REFERENCE",
            PrimitiveNotInCatalog => "PRIMITIVE_NOT_IN_CATALOG",
            MissingPrimitiveTime => "MISSING_PRIMITIVE_TIME",
            BadBounds => "BAD_BOUNDS",
            BadBinaryEntry => "BAD_BINARY_ENTRY",
            FixedOutsideWorkspace => "FIXED_OUTSIDE_WORKSPACE",
            FixedOverlap => "FIXED_OVERLAP",
            BadSimulation => "BAD_SIMULATION",
        }
    }
}

impl fmt::Display for DiagnosticCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpecDiagnostic {
    pub code: DiagnosticCode,
    pub message: String,
}

impl SpecDiagnostic {
    fn new(code: DiagnosticCode, message: impl Into<String>) -> Self {
        SpecDiagnostic {
            code,
            message: message.into(),
        }
    }
}

impl fmt::Display for SpecDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

/// Checks every structural invariant of a work-cell. An empty result means
/// the work-cell is valid.
pub fn validate_spec(spec: &Workcell) -> Vec<SpecDiagnostic> {
    use DiagnosticCode::*;
    let mut out = Vec::new();
    let t = spec.op_count();
    let n = spec.agent_count();
    let mut push = |code, msg: String| out.push(SpecDiagnostic::new(code, msg));

    // Dimensions.
    if spec.precedence.len() != t || spec.precedence.matrix().iter().any(|r| r.len() != t) {
        push(
            DimensionMismatch,
            format!("precedence matrix must be {t}x{t}"),
        );
    }
    if spec.capability.agent_count() != n || spec.capability.rows().iter().any(|r| r.len() != t) {
        push(
            DimensionMismatch,
            format!("capability matrix must be {n}x{t}"),
        );
    }
    let dims_ok = out.is_empty();
    let mut push = |code, msg: String| out.push(SpecDiagnostic::new(code, msg));

    if dims_ok {
        for (i, row) in spec.precedence.matrix().iter().enumerate() {
            for (j, &p) in row.iter().enumerate() {
                if p > 1 {
                    push(BadBinaryEntry, format!("P[{i}][{j}] = {p} is not binary"));
                }
            }
            if row[i] != 0 {
                push(SelfPrecedence, format!("o{} precedes itself", i + 1));
            }
        }
        for (a, row) in spec.capability.rows().iter().enumerate() {
            for (j, &b) in row.iter().enumerate() {
                if b > 1 {
                    push(BadBinaryEntry, format!("B[{a}][{j}] = {b} is not binary"));
                }
            }
        }
        if spec.precedence.topological_order().is_none() {
            push(
                CyclicPrecedence,
                "precedence graph contains a cycle".to_string(),
            );
        }
    }

    // Agents: humans first, then robots.
    let mut seen_robot = false;
    for (j, agent) in spec.agents.iter().enumerate() {
        let label = format!("agent `{}` (a{})", agent.name, j + 1);
        match agent.kind {
            AgentKind::Robot => seen_robot = true,
            AgentKind::Human if seen_robot => push(
                AgentOrder,
                format!("{label} is human but follows a robot"),
            ),
            AgentKind::Human => {}
        }
        let w = agent.workspace;
        if !(w.d_min >= 0.0 && w.d_min < w.d_max && w.d_max.is_finite()) {
            push(
                BadWorkspace,
                format!("{label} needs 0 <= d_min < d_max, got ({}, {})", w.d_min, w.d_max),
            );
        }
        if !(agent.speed > 0.0 && agent.speed.is_finite()) {
            push(BadSpeed, format!("{label} speed must be positive"));
        }
        match (agent.kind, agent.link_lengths) {
            (AgentKind::Robot, Some([l1, l2])) if l1 > 0.0 && l2 > 0.0 => {}
            (AgentKind::Robot, _) => push(
                BadLinkLengths,
                format!("{label} needs two positive link lengths"),
            ),
            (AgentKind::Human, Some(_)) => push(
                BadLinkLengths,
                format!("{label} is human and cannot carry link lengths"),
            ),
            (AgentKind::Human, None) => {}
        }
        for (&p, &secs) in &agent.primitive_times {
            if !agent.kind.allows(p) {
                push(
                    PrimitiveNotInCatalog,
                    format!("{label} has a time for {p}, outside its catalog"),
                );
            }
            if !(secs >= 0.0 && secs.is_finite()) {
                push(
                    MissingPrimitiveTime,
                    format!("{label} time for {p} must be non-negative"),
                );
            }
        }
    }

    // Resources.
    for (i, r) in spec.resources.iter().enumerate() {
        let label = format!("resource `{}` (r{})", r.name, i + 1);
        if r.dofs() < 2 {
            push(
                DimensionMismatch,
                format!("{label} needs at least 2 coordinates"),
            );
        }
        if !geometry::is_convex_ccw(&r.footprint) {
            push(
                NonConvexFootprint,
                format!("{label} footprint must be convex, counter-clockwise, >= 3 vertices"),
            );
        }
        if r.movable {
            if r.bounds.len() != r.dofs() {
                push(
                    DimensionMismatch,
                    format!("{label} has {} bounds for {} coordinates", r.bounds.len(), r.dofs()),
                );
            }
            if r.bounds.iter().any(|b| !(b.min <= b.max) || !b.min.is_finite() || !b.max.is_finite()) {
                push(BadBounds, format!("{label} has an empty or unbounded interval"));
            }
        }
    }

    // Tasks.
    for (k, task) in spec.tasks.iter().enumerate() {
        for (kind, steps) in [(AgentKind::Human, &task.human), (AgentKind::Robot, &task.robot)] {
            for step in steps {
                if !kind.allows(step.primitive) {
                    push(
                        PrimitiveNotInCatalog,
                        format!(
                            "task `{}` (t{}) lists {} among its {kind} steps",
                            task.name,
                            k + 1,
                            step.primitive
                        ),
                    );
                }
                match step.target {
                    Some(r) if r.0 >= spec.resources.len() => push(
                        UnknownReference,
                        format!("task `{}` targets missing resource {r}", task.name),
                    ),
                    None if step.primitive.is_travel() => push(
                        UnknownReference,
                        format!("task `{}`: {} needs a target resource", task.name, step.primitive),
                    ),
                    _ => {}
                }
            }
        }
    }

    // Operations.
    let missing_time = |agent: &Agent, task: &Task| {
        task.steps_for(agent.kind)
            .iter()
            .find(|s| !agent.primitive_times.contains_key(&s.primitive))
            .map(|s| s.primitive)
    };
    for (i, op) in spec.operations.iter().enumerate() {
        let id = OperationId(i);
        let label = format!("operation `{}` ({id})", op.name);
        if op.task.0 >= spec.tasks.len() {
            push(UnknownReference, format!("{label} references a missing task"));
            continue;
        }
        match op.kind {
            OperationKind::Individual if op.required_agents != 1 => push(
                KindMismatch,
                format!("{label} is individual but requires {} agents", op.required_agents),
            ),
            OperationKind::Collaborative if op.required_agents < 2 => push(
                KindMismatch,
                format!("{label} is collaborative but requires {} agent(s)", op.required_agents),
            ),
            _ => {}
        }
        if !dims_ok {
            continue;
        }
        let eligible = spec.eligible_agents(id);
        if eligible.is_empty() {
            push(NoCapableAgent, format!("{label} has no capable agent"));
            continue;
        }
        match op.kind {
            OperationKind::Individual => {
                let task = &spec.tasks[op.task.0];
                for a in &eligible {
                    let agent = spec.agent(*a);
                    if task.steps_for(agent.kind).is_empty() {
                        push(
                            PrimitiveNotInCatalog,
                            format!("{label}: task `{}` has no {} steps for capable agent {a}", task.name, agent.kind),
                        );
                    } else if let Some(p) = missing_time(agent, task) {
                        push(
                            MissingPrimitiveTime,
                            format!("{label}: agent {a} has no base time for {p}"),
                        );
                    }
                }
            }
            OperationKind::Collaborative => {
                if eligible.len() < op.required_agents {
                    push(
                        NoCapableAgent,
                        format!(
                            "{label} requires {} agents but only {} are capable",
                            op.required_agents,
                            eligible.len()
                        ),
                    );
                    continue;
                }
                if op.collab_sequence.is_empty() {
                    push(
                        MissingCollabSequence,
                        format!("{label} is collaborative without a sub-task sequence"),
                    );
                }
                let forced = spec.forced_allocation(id);
                for sub in &op.collab_sequence {
                    if sub.slot >= op.required_agents {
                        push(
                            BadCollabSlot,
                            format!("{label}: slot {} out of range", sub.slot + 1),
                        );
                        continue;
                    }
                    if sub.task.0 >= spec.tasks.len() {
                        push(UnknownReference, format!("{label}: sub-task references a missing task"));
                        continue;
                    }
                    if sub.offset.is_some_and(|o| !(o >= 0.0 && o.is_finite())) {
                        push(BadCollabSlot, format!("{label}: negative sub-task offset"));
                    }
                    let agent = spec.agent(forced[sub.slot]);
                    let task = &spec.tasks[sub.task.0];
                    if task.steps_for(agent.kind).is_empty() {
                        push(
                            PrimitiveNotInCatalog,
                            format!("{label}: sub-task `{}` has no {} steps", task.name, agent.kind),
                        );
                    } else if let Some(p) = missing_time(agent, task) {
                        push(
                            MissingPrimitiveTime,
                            format!("{label}: agent {} has no base time for {p}", forced[sub.slot]),
                        );
                    }
                }
            }
        }
    }

    for (a, agent) in spec.agents.iter().enumerate() {
        if let Some(k) = agent.allocation_cap {
            let v = spec.individual_op_count();
            if k > v {
                push(
                    DimensionMismatch,
                    format!("agent `{}` (a{}) cap {k} exceeds v = {v}", agent.name, a + 1),
                );
            }
        }
    }

    let sim = &spec.simulation;
    let th = sim.reach_thresholds;
    if !(sim.dt > 0.0 && sim.d_safe >= 0.0 && sim.manipulability_floor > 0.0)
        || !(th[0] < th[1] && th[1] < th[2])
    {
        push(BadSimulation, "simulation parameters out of range".to_string());
    }
    out
}

/// Non-fatal findings on fixed resources: centroids outside an agent's
/// working area and overlapping fixed footprints.
pub fn fixed_resource_report(spec: &Workcell) -> Vec<SpecDiagnostic> {
    let mut out = Vec::new();
    let fixed: Vec<(usize, &Resource)> = spec
        .resources
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.movable && r.dofs() >= 2 && geometry::is_convex_ccw(&r.footprint))
        .collect();
    for &(i, r) in &fixed {
        let p = Vec2::new(r.coords[0], r.coords[1]);
        for (j, agent) in spec.agents.iter().enumerate() {
            let w = agent.workspace;
            if !geometry::in_annulus(p, agent.base, w.d_min, w.d_max) {
                out.push(SpecDiagnostic::new(
                    DiagnosticCode::FixedOutsideWorkspace,
                    format!("fixed resource `{}` (r{}) lies outside the working area of a{}", r.name, i + 1, j + 1),
                ));
            }
        }
    }
    for (k, &(i, a)) in fixed.iter().enumerate() {
        for &(j, b) in &fixed[k + 1..] {
            let pa = geometry::place(a, &[]).expect("fixed placement");
            let pb = geometry::place(b, &[]).expect("fixed placement");
            if !geometry::separated(&pa, &pb).separated {
                out.push(SpecDiagnostic::new(
                    DiagnosticCode::FixedOverlap,
                    format!("fixed resources r{} and r{} overlap", i + 1, j + 1),
                ));
            }
        }
    }
    out
}
