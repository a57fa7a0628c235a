//! On-disk formats for work-cells and chromosomes (TOML).
//!
//! References between entities are by name in the file and by index in
//! memory. Collaborative sub-task slots are 1-based in the file.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;
use crate::model::{
    Agent, AgentId, AgentKind, Annulus, CapabilityMatrix, Chromosome, GaSection, Interval,
    LengthUnit, Operation, OperationKind, PrecedenceGraph, Primitive, Resource, ResourceId,
    SimulationParams, Step, SubTask, Task, TaskId, Workcell,
};

pub const WORKCELL_SCHEMA_VERSION: u32 = 1;
pub const CHROMOSOME_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("NOT_FOUND: {0}")]
    NotFound(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("PARSE_ERROR: {0}")]
    Parse(String),
    #[error("UNSUPPORTED_SCHEMA: schema_version {found} (supported: {supported})")]
    UnsupportedSchema { found: u32, supported: u32 },
    #[error("UNKNOWN_REFERENCE: {0}")]
    UnknownReference(String),
    #[error("serialization failed: {0}")]
    Serialize(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkcellFile {
    pub schema_version: u32,
    pub name: String,
    pub length_unit: LengthUnit,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationFile>,
    #[serde(default)]
    pub ga: GaSection,
    pub agents: Vec<AgentFile>,
    pub resources: Vec<ResourceFile>,
    pub tasks: Vec<TaskFile>,
    pub operations: Vec<OperationFile>,
    /// One row per agent, one column per operation; 0 = capable.
    pub capability: Vec<Vec<u8>>,
    /// Edges `[before, after]` by operation name.
    #[serde(default)]
    pub precedence: Vec<[String; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationFile {
    pub dt: f64,
    pub d_safe: f64,
    pub manipulability_floor: f64,
    pub reach_thresholds: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentFile {
    pub name: String,
    pub kind: AgentKind,
    pub base: Vec2,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub home: Option<Vec2>,
    /// `[d_min, d_max]`
    pub workspace: [f64; 2],
    pub speed: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link_lengths: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allocation_cap: Option<usize>,
    pub primitive_times: BTreeMap<Primitive, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceFile {
    pub name: String,
    pub movable: bool,
    pub coords: Vec<f64>,
    pub footprint: Vec<Vec2>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bounds: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepFile {
    pub primitive: Primitive,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskFile {
    pub name: String,
    #[serde(default)]
    pub human: Vec<StepFile>,
    #[serde(default)]
    pub robot: Vec<StepFile>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubTaskFile {
    pub slot: usize,
    pub task: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperationFile {
    pub name: String,
    pub kind: OperationKind,
    pub task: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub required_agents: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub collab_sequence: Vec<SubTaskFile>,
}

fn index_by_name<'a, I>(names: I) -> HashMap<&'a str, usize>
where
    I: IntoIterator<Item = &'a str>,
{
    names.into_iter().enumerate().map(|(i, n)| (n, i)).collect()
}

fn lookup(map: &HashMap<&str, usize>, what: &str, name: &str) -> Result<usize, FormatError> {
    map.get(name)
        .copied()
        .ok_or_else(|| FormatError::UnknownReference(format!("{what} `{name}`")))
}

impl WorkcellFile {
    pub fn into_model(self) -> Result<Workcell, FormatError> {
        if self.schema_version != WORKCELL_SCHEMA_VERSION {
            return Err(FormatError::UnsupportedSchema {
                found: self.schema_version,
                supported: WORKCELL_SCHEMA_VERSION,
            });
        }
        let resource_ix = index_by_name(self.resources.iter().map(|r| r.name.as_str()));
        let task_ix = index_by_name(self.tasks.iter().map(|t| t.name.as_str()));
        let op_ix = index_by_name(self.operations.iter().map(|o| o.name.as_str()));

        let steps = |list: &[StepFile]| -> Result<Vec<Step>, FormatError> {
            list.iter()
                .map(|s| {
                    Ok(Step {
                        primitive: s.primitive,
                        target: s
                            .target
                            .as_deref()
                            .map(|n| lookup(&resource_ix, "resource", n).map(ResourceId))
                            .transpose()?,
                    })
                })
                .collect()
        };
        let tasks = self
            .tasks
            .iter()
            .map(|t| {
                Ok(Task {
                    name: t.name.clone(),
                    human: steps(&t.human)?,
                    robot: steps(&t.robot)?,
                })
            })
            .collect::<Result<Vec<_>, FormatError>>()?;

        let operations = self
            .operations
            .iter()
            .map(|o| {
                let collab_sequence = o
                    .collab_sequence
                    .iter()
                    .map(|s| {
                        Ok(SubTask {
                            slot: s.slot.checked_sub(1).ok_or_else(|| {
                                FormatError::UnknownReference(format!(
                                    "slot 0 in `{}` (slots are 1-based)",
                                    o.name
                                ))
                            })?,
                            task: TaskId(lookup(&task_ix, "task", &s.task)?),
                            offset: s.offset,
                        })
                    })
                    .collect::<Result<Vec<_>, FormatError>>()?;
                let required_agents = o.required_agents.unwrap_or(match o.kind {
                    OperationKind::Individual => 1,
                    OperationKind::Collaborative => collab_sequence
                        .iter()
                        .map(|s: &SubTask| s.slot + 1)
                        .max()
                        .unwrap_or(0),
                });
                Ok(Operation {
                    name: o.name.clone(),
                    kind: o.kind,
                    required_agents,
                    task: TaskId(lookup(&task_ix, "task", &o.task)?),
                    collab_sequence,
                })
            })
            .collect::<Result<Vec<_>, FormatError>>()?;

        let edges = self
            .precedence
            .iter()
            .map(|[a, b]| {
                Ok((
                    lookup(&op_ix, "operation", a)?,
                    lookup(&op_ix, "operation", b)?,
                ))
            })
            .collect::<Result<Vec<_>, FormatError>>()?;

        let agents = self
            .agents
            .into_iter()
            .map(|a| Agent {
                name: a.name,
                kind: a.kind,
                base: a.base,
                home: a.home.unwrap_or(a.base),
                workspace: Annulus {
                    d_min: a.workspace[0],
                    d_max: a.workspace[1],
                },
                speed: a.speed,
                link_lengths: a.link_lengths,
                primitive_times: a.primitive_times,
                allocation_cap: a.allocation_cap,
            })
            .collect();
        let resources = self
            .resources
            .into_iter()
            .map(|r| Resource {
                name: r.name,
                movable: r.movable,
                coords: r.coords,
                footprint: r.footprint,
                bounds: r.bounds.iter().map(|b| Interval::new(b[0], b[1])).collect(),
            })
            .collect();
        let simulation = self
            .simulation
            .map(|s| SimulationParams {
                dt: s.dt,
                d_safe: s.d_safe,
                manipulability_floor: s.manipulability_floor,
                reach_thresholds: s.reach_thresholds,
            })
            .unwrap_or_default();

        Ok(Workcell {
            name: self.name,
            length_unit: self.length_unit,
            precedence: PrecedenceGraph::from_edges(operations.len(), &edges),
            operations,
            tasks,
            agents,
            resources,
            capability: CapabilityMatrix::new(self.capability),
            simulation,
            ga: self.ga,
        })
    }

    pub fn from_model(spec: &Workcell) -> Self {
        let rname = |r: ResourceId| spec.resources[r.0].name.clone();
        let steps = |list: &[Step]| {
            list.iter()
                .map(|s| StepFile {
                    primitive: s.primitive,
                    target: s.target.map(rname),
                })
                .collect()
        };
        WorkcellFile {
            schema_version: WORKCELL_SCHEMA_VERSION,
            name: spec.name.clone(),
            length_unit: spec.length_unit,
            simulation: Some(SimulationFile {
                dt: spec.simulation.dt,
                d_safe: spec.simulation.d_safe,
                manipulability_floor: spec.simulation.manipulability_floor,
                reach_thresholds: spec.simulation.reach_thresholds,
            }),
            ga: spec.ga.clone(),
            agents: spec
                .agents
                .iter()
                .map(|a| AgentFile {
                    name: a.name.clone(),
                    kind: a.kind,
                    base: a.base,
                    home: Some(a.home),
                    workspace: [a.workspace.d_min, a.workspace.d_max],
                    speed: a.speed,
                    link_lengths: a.link_lengths,
                    allocation_cap: a.allocation_cap,
                    primitive_times: a.primitive_times.clone(),
                })
                .collect(),
            resources: spec
                .resources
                .iter()
                .map(|r| ResourceFile {
                    name: r.name.clone(),
                    movable: r.movable,
                    coords: r.coords.clone(),
                    footprint: r.footprint.clone(),
                    bounds: r.bounds.iter().map(|b| [b.min, b.max]).collect(),
                })
                .collect(),
            tasks: spec
                .tasks
                .iter()
                .map(|t| TaskFile {
                    name: t.name.clone(),
                    human: steps(&t.human),
                    robot: steps(&t.robot),
                })
                .collect(),
            operations: spec
                .operations
                .iter()
                .map(|o| OperationFile {
                    name: o.name.clone(),
                    kind: o.kind,
                    task: spec.tasks[o.task.0].name.clone(),
                    required_agents: Some(o.required_agents),
                    collab_sequence: o
                        .collab_sequence
                        .iter()
                        .map(|s| SubTaskFile {
                            slot: s.slot + 1,
                            task: spec.tasks[s.task.0].name.clone(),
                            offset: s.offset,
                        })
                        .collect(),
                })
                .collect(),
            capability: spec.capability.rows().to_vec(),
            precedence: spec
                .precedence
                .edges()
                .into_iter()
                .map(|(i, j)| [spec.operations[i].name.clone(), spec.operations[j].name.clone()])
                .collect(),
        }
    }
}

/// Peeks `schema_version` before full deserialization so unsupported files
/// report the version rather than a field error.
fn check_schema(text: &str, supported: u32) -> Result<(), FormatError> {
    #[derive(Deserialize)]
    struct Probe {
        schema_version: Option<i64>,
    }
    #[derive(Deserialize)]
    struct Loose {
        #[serde(flatten)]
        probe: Probe,
        #[serde(flatten)]
        _rest: toml::Table,
    }
    let loose: Loose = toml::from_str(text).map_err(|e| FormatError::Parse(e.to_string()))?;
    match loose.probe.schema_version {
        Some(v) if v == supported as i64 => Ok(()),
        Some(v) => Err(FormatError::UnsupportedSchema {
            found: u32::try_from(v).unwrap_or(u32::MAX),
            supported,
        }),
        None => Err(FormatError::Parse("missing `schema_version`".into())),
    }
}

pub fn parse_workcell(text: &str) -> Result<Workcell, FormatError> {
    check_schema(text, WORKCELL_SCHEMA_VERSION)?;
    let file: WorkcellFile = toml::from_str(text).map_err(|e| FormatError::Parse(e.to_string()))?;
    file.into_model()
}

pub fn workcell_to_string(spec: &Workcell) -> Result<String, FormatError> {
    toml::to_string(&WorkcellFile::from_model(spec)).map_err(|e| FormatError::Serialize(e.to_string()))
}

pub fn read_text(path: &Path) -> Result<String, FormatError> {
    std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => FormatError::NotFound(path.display().to_string()),
        _ => FormatError::Io {
            path: path.display().to_string(),
            source: e,
        },
    })
}

pub fn load_workcell(path: &Path) -> Result<Workcell, FormatError> {
    parse_workcell(&read_text(path)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChromosomeFile {
    pub schema_version: u32,
    pub workcell: String,
    pub layout: Vec<f64>,
    /// Agent names per operation, in operation order.
    pub allocation: Vec<Vec<String>>,
}

pub fn chromosome_to_string(spec: &Workcell, x: &Chromosome) -> Result<String, FormatError> {
    let file = ChromosomeFile {
        schema_version: CHROMOSOME_SCHEMA_VERSION,
        workcell: spec.name.clone(),
        layout: x.layout.clone(),
        allocation: x
            .allocation
            .iter()
            .map(|eta| eta.iter().map(|a| spec.agents[a.0].name.clone()).collect())
            .collect(),
    };
    toml::to_string(&file).map_err(|e| FormatError::Serialize(e.to_string()))
}

pub fn parse_chromosome(spec: &Workcell, text: &str) -> Result<Chromosome, FormatError> {
    check_schema(text, CHROMOSOME_SCHEMA_VERSION)?;
    let file: ChromosomeFile =
        toml::from_str(text).map_err(|e| FormatError::Parse(e.to_string()))?;
    let agent_ix = index_by_name(spec.agents.iter().map(|a| a.name.as_str()));
    let allocation = file
        .allocation
        .iter()
        .map(|eta| {
            eta.iter()
                .map(|n| lookup(&agent_ix, "agent", n).map(AgentId))
                .collect()
        })
        .collect::<Result<Vec<_>, FormatError>>()?;
    Ok(Chromosome {
        layout: file.layout,
        allocation,
    })
}

pub fn load_chromosome(spec: &Workcell, path: &Path) -> Result<Chromosome, FormatError> {
    parse_chromosome(spec, &read_text(path)?)
}
