//! CSV and SVG artifacts.
//!
//! Every CSV has a header row and a fixed column order; floats use the
//! shortest round-trip decimal form so reruns are byte-identical.

use std::fmt::Write as _;
use std::io;

use serde::{Deserialize, Serialize};

use crate::evolve::{EvaluationRecord, HistoryRow};
use crate::feasibility::world_footprints;
use crate::geometry::Vec2;
use crate::kpi::{KpiVector, KPI_COUNT};
use crate::model::{AgentKind, Chromosome, Workcell};
use crate::scheduler::{GanttTable, Schedule};
use crate::surrogate::Plan;

pub const CSV_SCHEMA_VERSION: u32 = 1;

/// One evaluated chromosome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KpiRow {
    pub index: usize,
    pub iteration: usize,
    pub fitness: f64,
    pub cycle_time: f64,
    pub ergonomics: f64,
    pub inverse_manipulability: f64,
    pub surface: f64,
    pub z_cycle_time: Option<f64>,
    pub z_ergonomics: Option<f64>,
    pub z_inverse_manipulability: Option<f64>,
    pub z_surface: Option<f64>,
    pub collision: bool,
    /// Layout genes separated by spaces.
    pub layout: String,
    /// Agent names per operation; operations separated by spaces, agents by `+`.
    pub allocation: String,
}

impl KpiRow {
    pub fn from_record(spec: &Workcell, r: &EvaluationRecord) -> Self {
        let k = r.kpi.unwrap_or(KpiVector {
            raw: [f64::NAN; KPI_COUNT],
            normalized: None,
            safety: false,
        });
        let z = |i: usize| k.normalized.map(|n| n[i]);
        KpiRow {
            index: r.index,
            iteration: r.iteration,
            fitness: r.fitness,
            cycle_time: k.raw[0],
            ergonomics: k.raw[1],
            inverse_manipulability: k.raw[2],
            surface: k.raw[3],
            z_cycle_time: z(0),
            z_ergonomics: z(1),
            z_inverse_manipulability: z(2),
            z_surface: z(3),
            collision: k.safety,
            layout: join(r.chromosome.layout.iter().map(f64::to_string), " "),
            allocation: allocation_string(spec, &r.chromosome),
        }
    }

    pub fn raw_kpi(&self) -> KpiVector {
        KpiVector {
            raw: [self.cycle_time, self.ergonomics, self.inverse_manipulability, self.surface],
            normalized: None,
            safety: self.collision,
        }
    }
}

fn join(items: impl Iterator<Item = String>, sep: &str) -> String {
    items.collect::<Vec<_>>().join(sep)
}

fn allocation_string(spec: &Workcell, x: &Chromosome) -> String {
    join(
        x.allocation
            .iter()
            .map(|eta| join(eta.iter().map(|a| spec.agents[a.0].name.clone()), "+")),
        " ",
    )
}

pub fn write_evaluations<W: io::Write>(w: W, spec: &Workcell, rows: &[EvaluationRecord]) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(KpiRow::from_record(spec, r))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_evaluations<R: io::Read>(r: R) -> Result<Vec<KpiRow>, csv::Error> {
    csv::Reader::from_reader(r).deserialize().collect()
}

#[derive(Serialize)]
struct HistoryCsv {
    iteration: usize,
    best_f: f64,
    mean_f: f64,
    mu: f64,
    sigma: f64,
    stagnation: usize,
    evaluations: usize,
}

pub fn write_history<W: io::Write>(w: W, rows: &[HistoryRow]) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    for h in rows {
        out.serialize(HistoryCsv {
            iteration: h.iteration,
            best_f: h.best_fitness,
            mean_f: h.mean_fitness,
            mu: h.mu,
            sigma: h.sigma,
            stagnation: h.stagnation,
            evaluations: h.evaluations,
        })?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct GanttCsv<'a> {
    agent: &'a str,
    operation: &'a str,
    start_s: f64,
    end_s: f64,
}

pub fn write_gantt<W: io::Write>(w: W, spec: &Workcell, table: &GanttTable) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    for row in &table.rows {
        for b in &row.bars {
            out.serialize(GanttCsv {
                agent: &row.agent_name,
                operation: &spec.operations[b.op.0].name,
                start_s: b.start,
                end_s: b.end,
            })?;
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct TraceCsv<'a> {
    time: f64,
    actor: &'a str,
    operation: &'a str,
    x: f64,
    y: f64,
    q1: Option<f64>,
    q2: Option<f64>,
}

/// Sampled motion of every agent on the schedule's time axis.
pub fn write_traces<W: io::Write>(w: W, spec: &Workcell, plan: &Plan, schedule: &Schedule) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    for trace in &plan.traces {
        let t0 = schedule.start[trace.op.0];
        for lane in &trace.lanes {
            for s in &lane.samples {
                out.serialize(TraceCsv {
                    time: t0 + s.time,
                    actor: &spec.agents[lane.actor.0].name,
                    operation: &spec.operations[trace.op.0].name,
                    x: s.position.x,
                    y: s.position.y,
                    q1: s.joints.map(|q| q.0),
                    q2: s.joints.map(|q| q.1),
                })?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

const PALETTE: [&str; 6] = ["#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#edc948"];

const GANTT_LEFT: f64 = 90.0;
const GANTT_WIDTH: f64 = 800.0;
const GANTT_ROW: f64 = 36.0;
const GANTT_TOP: f64 = 30.0;

fn tick_step(span: f64) -> f64 {
    [1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0]
        .into_iter()
        .find(|s| span / s <= 12.0)
        .unwrap_or(1000.0)
}

/// One row per agent, one bar per operation, time axis in seconds.
pub fn gantt_svg(spec: &Workcell, table: &GanttTable) -> String {
    let span = table.makespan.max(1e-9);
    let scale = GANTT_WIDTH / span;
    let height = GANTT_TOP + GANTT_ROW * table.rows.len() as f64 + 40.0;
    let width = GANTT_LEFT + GANTT_WIDTH + 30.0;
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{GANTT_LEFT}" y="18" font-size="13">{} makespan {:.2} s</text>"#,
        escape(&spec.name),
        table.makespan
    );
    let axis_y = GANTT_TOP + GANTT_ROW * table.rows.len() as f64;
    let step = tick_step(span);
    let mut t = 0.0;
    while t <= span + 1e-9 {
        let x = GANTT_LEFT + t * scale;
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{GANTT_TOP}" x2="{x:.2}" y2="{axis_y:.2}" stroke="#dddddd"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{t}</text>"##,
            axis_y + 14.0
        );
        t += step;
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">time [s]</text>"#,
        GANTT_LEFT + GANTT_WIDTH / 2.0,
        axis_y + 30.0
    );
    for (r, row) in table.rows.iter().enumerate() {
        let y = GANTT_TOP + GANTT_ROW * r as f64;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end" dominant-baseline="middle">{}</text>"#,
            GANTT_LEFT - 8.0,
            y + GANTT_ROW / 2.0,
            escape(&row.agent_name)
        );
        for b in &row.bars {
            let x = GANTT_LEFT + b.start * scale;
            let w = ((b.end - b.start) * scale).max(0.5);
            let op = &spec.operations[b.op.0];
            let _ = writeln!(
                s,
                r##"<rect x="{x:.2}" y="{:.2}" width="{w:.2}" height="{:.2}" fill="{}" stroke="#333333"><title>{} {:.2}-{:.2} s</title></rect>"##,
                y + 4.0,
                GANTT_ROW - 8.0,
                PALETTE[b.op.0 % PALETTE.len()],
                escape(&op.name),
                b.start,
                b.end
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" dominant-baseline="middle" fill="white">{}</text>"#,
                x + w / 2.0,
                y + GANTT_ROW / 2.0,
                escape(&op.name)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

const LAYOUT_PX: f64 = 700.0;
const LAYOUT_MARGIN: f64 = 30.0;

/// Top view of the cell: footprints, movable bounds, agent bases and reach.
pub fn layout_svg(spec: &Workcell, x: &Chromosome) -> String {
    let polys = world_footprints(spec, &x.layout);
    let mut pts: Vec<Vec2> = polys.iter().flat_map(|p| p.vertices().iter().copied()).collect();
    for a in &spec.agents {
        let r = a.workspace.d_max;
        pts.push(a.base + Vec2::new(r, r));
        pts.push(a.base - Vec2::new(r, r));
    }
    for (_, res) in spec.movable_resources() {
        if let [bx, by, ..] = res.bounds.as_slice() {
            pts.push(Vec2::new(bx.min, by.min));
            pts.push(Vec2::new(bx.max, by.max));
        }
    }
    let (lo, hi) = pts.iter().fold(
        (Vec2::new(f64::INFINITY, f64::INFINITY), Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY)),
        |(lo, hi), p| (Vec2::new(lo.x.min(p.x), lo.y.min(p.y)), Vec2::new(hi.x.max(p.x), hi.y.max(p.y))),
    );
    let scale = LAYOUT_PX / (hi.x - lo.x).max(hi.y - lo.y).max(1e-9);
    let width = (hi.x - lo.x) * scale + 2.0 * LAYOUT_MARGIN;
    let height = (hi.y - lo.y) * scale + 2.0 * LAYOUT_MARGIN;
    let px = |p: Vec2| ((p.x - lo.x) * scale + LAYOUT_MARGIN, (hi.y - p.y) * scale + LAYOUT_MARGIN);

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for a in &spec.agents {
        let (cx, cy) = px(a.base);
        let color = match a.kind {
            AgentKind::Human => "#59a14f",
            AgentKind::Robot => "#e15759",
        };
        for r in [a.workspace.d_min, a.workspace.d_max] {
            let _ = writeln!(
                s,
                r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="{:.2}" fill="none" stroke="{color}" stroke-dasharray="4 3"/>"#,
                r * scale
            );
        }
        let _ = writeln!(
            s,
            r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="6" fill="{color}"/><text x="{:.2}" y="{:.2}">{} ({})</text>"#,
            cx + 8.0,
            cy - 8.0,
            escape(&a.name),
            a.kind
        );
    }
    for (_, res) in spec.movable_resources() {
        if let [bx, by, ..] = res.bounds.as_slice() {
            let (x0, y0) = px(Vec2::new(bx.min, by.max));
            let (x1, y1) = px(Vec2::new(bx.max, by.min));
            let _ = writeln!(
                s,
                r##"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#bbbbbb" stroke-dasharray="2 2"/>"##,
                x1 - x0,
                y1 - y0
            );
        }
    }
    for (res, poly) in spec.resources.iter().zip(&polys) {
        let points = join(
            poly.vertices().iter().map(|v| {
                let (a, b) = px(*v);
                format!("{a:.2},{b:.2}")
            }),
            " ",
        );
        let fill = if res.movable { "#4e79a7" } else { "#9c9c9c" };
        let _ = writeln!(
            s,
            r##"<polygon points="{points}" fill="{fill}" fill-opacity="0.6" stroke="#222222"/>"##
        );
        let c = poly.vertices().iter().fold(Vec2::default(), |acc, v| acc + *v)
            * (1.0 / poly.vertices().len().max(1) as f64);
        let (cx, cy) = px(c);
        let _ = writeln!(
            s,
            r#"<text x="{cx:.2}" y="{cy:.2}" text-anchor="middle" dominant-baseline="middle">{}</text>"#,
            escape(&res.name)
        );
    }
    s.push_str("</svg>\n");
    s
}
