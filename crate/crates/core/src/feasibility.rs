//! Leader constraints and a rejection sampler for feasible chromosomes.

use std::fmt;

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::geometry::{self, WorldPolygon};
use crate::model::{AgentId, Chromosome, OperationId, OperationKind, ResourceId, Workcell};

pub const DEFAULT_MAX_TRIES: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConstraintFamily {
    /// Individual allocations must be capable agents.
    Elig,
    /// Collaborative allocations are forced to the required agent set.
    Collab,
    /// Per-agent cap on individual operations.
    Cap,
    /// Layout search range.
    Bounds,
    /// Movable centroids inside every agent's working area.
    Annulus,
    /// Pairwise non-overlap of footprints.
    Overlap,
}

impl fmt::Display for ConstraintFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConstraintFamily::Elig => "ELIG",
            ConstraintFamily::Collab => "COLLAB",
            ConstraintFamily::Cap => "CAP",
            ConstraintFamily::Bounds => "BOUNDS",
            ConstraintFamily::Annulus => "ANNULUS",
            ConstraintFamily::Overlap => "OVERLAP",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub constraint: ConstraintFamily,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.constraint, self.detail)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConstraintReport {
    pub violations: Vec<Violation>,
}

impl ConstraintReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, family: ConstraintFamily) -> bool {
        self.violations.iter().any(|v| v.constraint == family)
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum FeasibilityError {
    #[error("chromosome dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("INFEASIBLE_AFTER_MAX_TRIES: {family} could not be satisfied for {what} in {tries} tries")]
    InfeasibleAfterMaxTries {
        family: ConstraintFamily,
        what: String,
        tries: usize,
    },
}

fn check_dimensions(spec: &Workcell, x: &Chromosome) -> Result<(), FeasibilityError> {
    let dims = spec.chromosome_dimensions();
    if x.layout.len() != dims.layout {
        return Err(FeasibilityError::DimensionMismatch(format!(
            "layout has {} genes, expected {}",
            x.layout.len(),
            dims.layout
        )));
    }
    if x.allocation.len() != spec.op_count() {
        return Err(FeasibilityError::DimensionMismatch(format!(
            "allocation covers {} operations, expected {}",
            x.allocation.len(),
            spec.op_count()
        )));
    }
    for (i, (eta, op)) in x.allocation.iter().zip(&spec.operations).enumerate() {
        if eta.len() != op.required_agents {
            return Err(FeasibilityError::DimensionMismatch(format!(
                "o{} has {} allocated agents, expected {}",
                i + 1,
                eta.len(),
                op.required_agents
            )));
        }
    }
    Ok(())
}

/// World footprints of every resource under the chromosome's layout.
pub fn world_footprints(spec: &Workcell, layout: &[f64]) -> Vec<WorldPolygon> {
    (0..spec.resources.len())
        .map(|i| {
            let coords = spec.resource_coords(layout, ResourceId(i));
            geometry::place(&spec.resources[i], coords).expect("coords sized from the resource")
        })
        .collect()
}

/// Evaluates all six constraint families.
pub fn check(spec: &Workcell, x: &Chromosome) -> Result<ConstraintReport, FeasibilityError> {
    check_dimensions(spec, x)?;
    let mut report = ConstraintReport::default();
    let mut violate = |constraint, detail: String| {
        report.violations.push(Violation { constraint, detail })
    };

    let mut counts = vec![0usize; spec.agent_count()];
    for (i, (eta, op)) in x.allocation.iter().zip(&spec.operations).enumerate() {
        let id = OperationId(i);
        match op.kind {
            OperationKind::Individual => {
                let a = eta[0];
                if a.0 >= spec.agent_count() || !spec.capability.capable(a, id) {
                    violate(
                        ConstraintFamily::Elig,
                        format!("{id} allocated to {a}, which is not capable"),
                    );
                } else {
                    counts[a.0] += 1;
                }
            }
            OperationKind::Collaborative => {
                let forced = spec.forced_allocation(id);
                if *eta != forced {
                    violate(
                        ConstraintFamily::Collab,
                        format!("{id} must be allocated to {}", join(&forced)),
                    );
                }
            }
        }
    }
    for (j, &count) in counts.iter().enumerate() {
        let cap = spec.allocation_cap(AgentId(j));
        if count > cap {
            violate(
                ConstraintFamily::Cap,
                format!("a{} has {count} individual operations, cap is {cap}", j + 1),
            );
        }
    }

    let bounds = spec.layout_bounds();
    for (k, (&v, b)) in x.layout.iter().zip(&bounds).enumerate() {
        if !(b.min <= v && v <= b.max) {
            violate(
                ConstraintFamily::Bounds,
                format!("layout gene {} = {v} outside [{}, {}]", k + 1, b.min, b.max),
            );
        }
    }

    for (rid, r) in spec.movable_resources() {
        let p = spec.resource_position(&x.layout, rid);
        for (j, agent) in spec.agents.iter().enumerate() {
            let w = agent.workspace;
            if !geometry::in_annulus(p, agent.base, w.d_min, w.d_max) {
                violate(
                    ConstraintFamily::Annulus,
                    format!("`{}` ({rid}) outside the working area of a{}", r.name, j + 1),
                );
            }
        }
    }

    let polys = world_footprints(spec, &x.layout);
    for s in 0..polys.len() {
        for q in s + 1..polys.len() {
            if !spec.resources[s].movable && !spec.resources[q].movable {
                continue;
            }
            if !geometry::separated(&polys[s], &polys[q]).separated {
                violate(
                    ConstraintFamily::Overlap,
                    format!("r{} overlaps r{}", s + 1, q + 1),
                );
            }
        }
    }
    Ok(report)
}

fn join(agents: &[AgentId]) -> String {
    agents
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

/// Draws an allocation gene for one operation: uniform over capable agents
/// for individual operations, the forced set for collaborative ones.
pub fn draw_allocation_gene<R: Rng + ?Sized>(
    spec: &Workcell,
    op: OperationId,
    rng: &mut R,
) -> Vec<AgentId> {
    match spec.operation(op).kind {
        OperationKind::Individual => {
            let eligible = spec.eligible_agents(op);
            vec![*eligible.choose(rng).expect("validated: S_i non-empty")]
        }
        OperationKind::Collaborative => spec.forced_allocation(op),
    }
}

fn caps_hold(spec: &Workcell, allocation: &[Vec<AgentId>]) -> bool {
    let mut counts = vec![0usize; spec.agent_count()];
    for (eta, op) in allocation.iter().zip(&spec.operations) {
        if op.kind == OperationKind::Individual {
            counts[eta[0].0] += 1;
        }
    }
    counts
        .iter()
        .enumerate()
        .all(|(j, &c)| c <= spec.allocation_cap(AgentId(j)))
}

/// Draws a uniformly random feasible chromosome by rejection.
///
/// Allocation genes are redrawn as a whole until the caps hold. Movable
/// resources are placed one at a time in resource order, each resampled
/// until it lies in every working area and clear of everything already
/// placed (fixed resources included).
pub fn sample<R: Rng + ?Sized>(
    spec: &Workcell,
    rng: &mut R,
    max_tries: usize,
) -> Result<Chromosome, FeasibilityError> {
    let t = spec.op_count();
    let mut allocation = None;
    for _ in 0..max_tries.max(1) {
        let candidate: Vec<Vec<AgentId>> = (0..t)
            .map(|i| draw_allocation_gene(spec, OperationId(i), rng))
            .collect();
        if caps_hold(spec, &candidate) {
            allocation = Some(candidate);
            break;
        }
    }
    let allocation = allocation.ok_or(FeasibilityError::InfeasibleAfterMaxTries {
        family: ConstraintFamily::Cap,
        what: "the allocation".into(),
        tries: max_tries,
    })?;

    let mut placed: Vec<WorldPolygon> = spec
        .resources
        .iter()
        .filter(|r| !r.movable)
        .map(|r| geometry::place(r, &[]).expect("fixed placement"))
        .collect();
    let mut layout = Vec::with_capacity(spec.chromosome_dimensions().layout);
    for (rid, r) in spec.movable_resources() {
        let mut last_failure = ConstraintFamily::Annulus;
        let mut accepted = None;
        for _ in 0..max_tries.max(1) {
            let coords: Vec<f64> = r
                .bounds
                .iter()
                .map(|b| {
                    if b.min < b.max {
                        rng.random_range(b.min..=b.max)
                    } else {
                        b.min
                    }
                })
                .collect();
            let centroid = geometry::Vec2::new(coords[0], coords[1]);
            let in_areas = spec.agents.iter().all(|a| {
                geometry::in_annulus(centroid, a.base, a.workspace.d_min, a.workspace.d_max)
            });
            if !in_areas {
                last_failure = ConstraintFamily::Annulus;
                continue;
            }
            let poly = geometry::place(r, &coords).expect("coords sized from bounds");
            if placed.iter().any(|p| !geometry::separated(p, &poly).separated) {
                last_failure = ConstraintFamily::Overlap;
                continue;
            }
            accepted = Some((coords, poly));
            break;
        }
        let (coords, poly) = accepted.ok_or_else(|| FeasibilityError::InfeasibleAfterMaxTries {
            family: last_failure,
            what: format!("`{}` ({rid})", r.name),
            tries: max_tries,
        })?;
        layout.extend(coords);
        placed.push(poly);
    }
    Ok(Chromosome { layout, allocation })
}
