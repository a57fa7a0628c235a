//! Key performance indicators and the scalar fitness.
//!
//! Four raw components, ordered (cycle time, ergonomics, inverse
//! manipulability, surface), are z-normalized against a baseline and
//! combined as `wᵀF`. A collision sets the fitness to `+∞`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;
use crate::model::{AgentKind, Chromosome, Workcell};
use crate::scheduler::{Instance, Schedule, ScheduleError, Scheduler};
use crate::surrogate::{self, jacobian_det, planar_ik, MotionTrace, Plan, SurrogateError};

pub const KPI_COUNT: usize = 4;
pub const KPI_NAMES: [&str; KPI_COUNT] = ["cycle_time", "ergonomics", "inverse_manipulability", "surface"];
pub const STATS_SCHEMA_VERSION: u32 = 1;
pub const NORMALIZATION: &str = "z-score";

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum KpiError {
    #[error("DEGENERATE_KPI: {component} has zero or undefined spread over {samples} samples")]
    Degenerate { component: &'static str, samples: usize },
    #[error("invalid weights `{0}`: expected four comma-separated finite numbers")]
    Weights(String),
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KpiVector {
    /// Cycle time (s), ergonomics class, inverse manipulability (1/m²), surface (m²).
    pub raw: [f64; KPI_COUNT],
    pub normalized: Option<[f64; KPI_COUNT]>,
    pub safety: bool,
}

impl KpiVector {
    pub fn cycle_time(&self) -> f64 {
        self.raw[0]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct Weights(pub [f64; KPI_COUNT]);

impl Default for Weights {
    fn default() -> Self {
        Weights([0.5, 0.3, 0.1, 0.1])
    }
}

impl TryFrom<[f64; 4]> for Weights {
    type Error = KpiError;

    fn try_from(w: [f64; 4]) -> Result<Self, KpiError> {
        if w.iter().all(|v| v.is_finite()) {
            Ok(Weights(w))
        } else {
            Err(KpiError::Weights(format!("{w:?}")))
        }
    }
}

impl From<Weights> for [f64; 4] {
    fn from(w: Weights) -> Self {
        w.0
    }
}

impl FromStr for Weights {
    type Err = KpiError;

    fn from_str(s: &str) -> Result<Self, KpiError> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| KpiError::Weights(s.into()))?;
        let arr: [f64; 4] = parts.try_into().map_err(|_| KpiError::Weights(s.into()))?;
        Weights::try_from(arr).map_err(|_| KpiError::Weights(s.into()))
    }
}

impl fmt::Display for Weights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c, d] = self.0;
        write!(f, "{a},{b},{c},{d}")
    }
}

/// Component means and sample standard deviations of a baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineStats {
    pub schema_version: u32,
    pub normalization: String,
    pub seed: u64,
    pub sample_count: usize,
    pub mean: [f64; KPI_COUNT],
    pub std: [f64; KPI_COUNT],
}

impl BaselineStats {
    pub fn from_samples(samples: &[KpiVector], seed: u64) -> Result<Self, KpiError> {
        let n = samples.len();
        let mut mean = [0.0; KPI_COUNT];
        let mut std = [0.0; KPI_COUNT];
        for c in 0..KPI_COUNT {
            if n < 2 {
                return Err(KpiError::Degenerate {
                    component: KPI_NAMES[c],
                    samples: n,
                });
            }
            let m = samples.iter().map(|k| k.raw[c]).sum::<f64>() / n as f64;
            let var = samples.iter().map(|k| (k.raw[c] - m).powi(2)).sum::<f64>() / (n - 1) as f64;
            let s = var.sqrt();
            if !(s > 0.0 && s.is_finite()) {
                return Err(KpiError::Degenerate {
                    component: KPI_NAMES[c],
                    samples: n,
                });
            }
            mean[c] = m;
            std[c] = s;
        }
        Ok(BaselineStats {
            schema_version: STATS_SCHEMA_VERSION,
            normalization: NORMALIZATION.into(),
            seed,
            sample_count: n,
            mean,
            std,
        })
    }

    /// Same means, every spread multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        for s in &mut out.std {
            *s *= c;
        }
        out
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("stats serialize")
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        let stats: BaselineStats = toml::from_str(text).map_err(|e| e.to_string())?;
        if stats.schema_version != STATS_SCHEMA_VERSION {
            return Err(format!(
                "UNSUPPORTED_SCHEMA: baseline schema_version {} (supported: {STATS_SCHEMA_VERSION})",
                stats.schema_version
            ));
        }
        if stats.sample_count < 2 || stats.std.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err("DEGENERATE_KPI: baseline file has a zero spread".into());
        }
        Ok(stats)
    }
}

/// Reach-distance posture class of every human sample, averaged and rounded
/// half-up.
pub fn ergonomics(spec: &Workcell, traces: &[MotionTrace]) -> f64 {
    let mpu = spec.meters_per_unit();
    let th = spec.simulation.reach_thresholds;
    let mut sum = 0.0;
    let mut count = 0usize;
    for lane in traces.iter().flat_map(|t| &t.lanes).filter(|l| l.kind == AgentKind::Human) {
        let base = spec.agent(lane.actor).base;
        for s in &lane.samples {
            let d = (s.position - base).norm() * mpu;
            sum += reach_class(d, th);
            count += 1;
        }
    }
    if count == 0 {
        return 1.0;
    }
    (sum / count as f64 + 0.5).floor()
}

pub fn reach_class(distance_m: f64, thresholds: [f64; 3]) -> f64 {
    1.0 + thresholds.iter().filter(|&&t| distance_m >= t).count() as f64
}

/// `1 / mean |det J|` over all robot samples, floored at the configured
/// epsilon. A robot without samples contributes its home pose.
pub fn inverse_manipulability(spec: &Workcell, traces: &[MotionTrace]) -> f64 {
    let mpu = spec.meters_per_unit();
    let mut sum = 0.0;
    let mut count = 0usize;
    for lane in traces.iter().flat_map(|t| &t.lanes).filter(|l| l.kind == AgentKind::Robot) {
        let Some([l1, l2]) = spec.agent(lane.actor).link_lengths else {
            continue;
        };
        for s in &lane.samples {
            if let Some((_, q2)) = s.joints {
                sum += jacobian_det(q2, l1 * mpu, l2 * mpu).abs();
                count += 1;
            }
        }
    }
    if count == 0 {
        for agent in spec.agents.iter().filter(|a| a.kind == AgentKind::Robot) {
            if let Some([l1, l2]) = agent.link_lengths {
                let (_, q2) = planar_ik((agent.home - agent.base) * mpu, l1 * mpu, l2 * mpu);
                sum += jacobian_det(q2, l1 * mpu, l2 * mpu).abs();
                count += 1;
            }
        }
    }
    let eps = spec.simulation.manipulability_floor;
    let mean = if count == 0 { 0.0 } else { sum / count as f64 };
    1.0 / mean.max(eps)
}

/// Area of the axis-aligned rectangle enclosing every movable footprint, m².
pub fn surface(spec: &Workcell, layout: &[f64]) -> f64 {
    let mpu = spec.meters_per_unit();
    let polys = crate::feasibility::world_footprints(spec, layout);
    let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut any = false;
    for (poly, r) in polys.iter().zip(&spec.resources) {
        if !r.movable {
            continue;
        }
        let (a, b) = poly.bounding_box();
        lo = Vec2::new(lo.x.min(a.x), lo.y.min(a.y));
        hi = Vec2::new(hi.x.max(b.x), hi.y.max(b.y));
        any = true;
    }
    if !any {
        return 0.0;
    }
    (hi.x - lo.x) * (hi.y - lo.y) * mpu * mpu
}

pub fn compute_raw(spec: &Workcell, x: &Chromosome, schedule: &Schedule, traces: &[MotionTrace]) -> KpiVector {
    KpiVector {
        raw: [
            schedule.makespan,
            ergonomics(spec, traces),
            inverse_manipulability(spec, traces),
            surface(spec, &x.layout),
        ],
        normalized: None,
        safety: surrogate::collision_flag(spec, schedule, traces),
    }
}

pub fn normalize(kpi: &KpiVector, stats: &BaselineStats) -> KpiVector {
    let mut z = [0.0; KPI_COUNT];
    for c in 0..KPI_COUNT {
        z[c] = (kpi.raw[c] - stats.mean[c]) / stats.std[c];
    }
    KpiVector {
        normalized: Some(z),
        ..*kpi
    }
}

/// `wᵀF` over the normalized components, or `+∞` on collision.
pub fn fitness(kpi: &KpiVector, w: &Weights) -> f64 {
    if kpi.safety {
        return f64::INFINITY;
    }
    let z = kpi.normalized.expect("fitness needs normalized KPIs");
    z.iter().zip(&w.0).map(|(f, w)| f * w).sum()
}

/// Everything the pipeline derives from one chromosome.
#[derive(Clone, Debug)]
pub struct Assessment {
    pub kpi: KpiVector,
    pub schedule: Schedule,
    pub plan: Plan,
}

/// Plan, schedule, and score one chromosome.
pub fn assess(spec: &Workcell, x: &Chromosome, scheduler: &dyn Scheduler) -> Result<Assessment, PipelineError> {
    let plan = surrogate::plan_all(spec, x)?;
    let schedule = scheduler.schedule(&Instance::new(spec, &x.allocation, &plan.cycle_times))?;
    let kpi = compute_raw(spec, x, &schedule, &plan.traces);
    Ok(Assessment { kpi, schedule, plan })
}
