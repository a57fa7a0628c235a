//! `cellopt` command line: validate, baseline, optimize, schedule.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::evolve::{self, EvaluationRecord, EvolveError, GaConfig};
use crate::export;
use crate::feasibility::{self, FeasibilityError};
use crate::format::{self, FormatError};
use crate::kpi::{self, BaselineStats, KpiError, PipelineError, Weights};
use crate::model::{self, GaSection, Workcell};
use crate::scheduler::{self, ScheduleError};
use crate::surrogate::SurrogateError;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_OUT_ROOT: &str = "runs";

pub const EXIT_OK: u8 = 0;
pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_INFEASIBLE: u8 = 3;
pub const EXIT_IO: u8 = 4;
pub const EXIT_INTERNAL: u8 = 5;

#[derive(Debug, Parser)]
#[command(name = "cellopt", version, about = "Layout, allocation and scheduling optimizer for human-robot work-cells")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a work-cell file and print its diagnostics.
    Validate {
        spec: PathBuf,
    },
    /// Evaluate random feasible chromosomes and record KPI statistics.
    Baseline {
        spec: PathBuf,
        #[arg(long, default_value_t = 124)]
        samples: usize,
        #[command(flatten)]
        run: RunFlags,
        #[command(flatten)]
        ga: GaFlags,
    },
    /// Run the genetic algorithm against a baseline.
    Optimize {
        spec: PathBuf,
        /// Stats file written by `cellopt baseline`.
        #[arg(long, conflicts_with = "auto_baseline")]
        baseline: Option<PathBuf>,
        /// Build the baseline in-process from this many samples (default 124).
        #[arg(long)]
        auto_baseline: Option<usize>,
        #[command(flatten)]
        run: RunFlags,
        #[command(flatten)]
        ga: GaFlags,
    },
    /// Plan and schedule one chromosome.
    Schedule {
        spec: PathBuf,
        #[arg(long)]
        chromosome: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        exact: bool,
        #[arg(long)]
        max_ops: Option<usize>,
        #[arg(long)]
        traces: bool,
    },
}

#[derive(Debug, Args)]
pub struct RunFlags {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; defaults to a subdirectory of $CELLOPT_OUT.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// KPI weights `w1,w2,w3,w4`.
    #[arg(long = "w")]
    pub weights: Option<Weights>,
    /// Parallel evaluation width; 0 uses every core.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Use the exact scheduler.
    #[arg(long)]
    pub exact: bool,
    #[arg(long)]
    pub max_ops: Option<usize>,
    /// Also write sampled motion traces of the best chromosome.
    #[arg(long)]
    pub traces: bool,
}

#[derive(Debug, Default, Args)]
pub struct GaFlags {
    #[arg(long)]
    pub parents: Option<usize>,
    #[arg(long)]
    pub children: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub mutation_rate: Option<f64>,
    #[arg(long)]
    pub mutation_step: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub stagnation_limit: Option<usize>,
    #[arg(long)]
    pub selection: Option<String>,
    #[arg(long)]
    pub scheduler: Option<String>,
    #[arg(long)]
    pub max_tries: Option<usize>,
    #[arg(long)]
    pub child_attempts: Option<usize>,
}

impl GaFlags {
    fn section(&self, run: &RunFlags) -> GaSection {
        GaSection {
            parents: self.parents,
            children: self.children,
            iterations: self.iterations,
            mutation_rate: self.mutation_rate,
            mutation_step: self.mutation_step,
            beta: self.beta,
            stagnation_limit: self.stagnation_limit,
            weights: run.weights.map(|w| w.0),
            seed: run.seed,
            selection: self.selection.clone(),
            scheduler: if run.exact { Some("exact".into()) } else { self.scheduler.clone() },
            max_tries: self.max_tries,
            child_attempts: self.child_attempts,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("work-cell has {0} diagnostic(s)")]
    Invalid(usize),
    #[error("INFEASIBLE: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Evolve(#[from] EvolveError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Kpi(#[from] KpiError),
    #[error("invalid baseline file {path}: {reason}")]
    Stats { path: String, reason: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV output failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Format(e) => match e {
                FormatError::NotFound(_) | FormatError::Io { .. } => EXIT_IO,
                FormatError::Serialize(_) => EXIT_INTERNAL,
                _ => EXIT_VALIDATION,
            },
            CliError::Invalid(_) | CliError::Kpi(_) | CliError::Stats { .. } => EXIT_VALIDATION,
            CliError::Infeasible(_) => EXIT_INFEASIBLE,
            CliError::Evolve(e) => match e {
                EvolveError::Config(_) | EvolveError::Strategy(_) | EvolveError::Kpi(_) => EXIT_VALIDATION,
                EvolveError::Infeasible(FeasibilityError::DimensionMismatch(_)) => EXIT_VALIDATION,
                EvolveError::Infeasible(_) | EvolveError::Stalled { .. } => EXIT_INFEASIBLE,
                EvolveError::Pipeline(p) => pipeline_code(p),
            },
            CliError::Pipeline(p) => pipeline_code(p),
            CliError::Io { .. } | CliError::Csv(_) => EXIT_IO,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

fn pipeline_code(e: &PipelineError) -> u8 {
    match e {
        PipelineError::Surrogate(SurrogateError::Unreachable { .. }) => EXIT_INFEASIBLE,
        PipelineError::Schedule(ScheduleError::Mismatch(_)) => EXIT_INTERNAL,
        PipelineError::Schedule(_) => EXIT_VALIDATION,
    }
}

/// Record of one command invocation, written last into the output directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub tool_version: String,
    pub spec_path: String,
    pub spec_sha256: String,
    pub seed: Option<u64>,
    pub config: Option<serde_json::Value>,
    pub weights: Option<[f64; 4]>,
    pub scheduler: Option<String>,
    pub started_at: String,
    pub finished_at: String,
    pub evaluations: Option<usize>,
    pub best_fitness: Option<f64>,
    pub makespan: Option<f64>,
    pub outputs: Vec<String>,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

struct Loaded {
    path: PathBuf,
    text: String,
    spec: Workcell,
}

impl Loaded {
    fn open(path: &Path) -> Result<Self, CliError> {
        let text = format::read_text(path)?;
        let spec = format::parse_workcell(&text)?;
        Ok(Loaded {
            path: path.to_path_buf(),
            text,
            spec,
        })
    }

    fn valid(path: &Path) -> Result<Self, CliError> {
        let l = Self::open(path)?;
        let diags = model::validate_spec(&l.spec);
        for d in &diags {
            eprintln!("error: {d}");
        }
        if !diags.is_empty() {
            return Err(CliError::Invalid(diags.len()));
        }
        Ok(l)
    }

    fn manifest(&self, command: &str, started_at: String) -> RunManifest {
        RunManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            spec_path: self.path.display().to_string(),
            spec_sha256: hex::encode(Sha256::digest(self.text.as_bytes())),
            seed: None,
            config: None,
            weights: None,
            scheduler: None,
            started_at,
            finished_at: String::new(),
            evaluations: None,
            best_fitness: None,
            makespan: None,
            outputs: Vec::new(),
        }
    }
}

struct Artifacts {
    dir: PathBuf,
    written: Vec<String>,
}

impl Artifacts {
    fn create(dir: PathBuf) -> Result<Self, CliError> {
        fs::create_dir_all(&dir).map_err(|source| CliError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        Ok(Artifacts { dir, written: Vec::new() })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn io_err(&self, name: &str) -> impl Fn(std::io::Error) -> CliError {
        let path = self.path(name).display().to_string();
        move |source| CliError::Io {
            path: path.clone(),
            source,
        }
    }

    fn text(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        fs::write(self.path(name), body).map_err(self.io_err(name))?;
        self.written.push(name.into());
        Ok(())
    }

    fn csv(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut fs::File) -> Result<(), csv::Error>,
    ) -> Result<(), CliError> {
        let mut file = fs::File::create(self.path(name)).map_err(self.io_err(name))?;
        f(&mut file)?;
        self.written.push(name.into());
        Ok(())
    }

    /// Writes the manifest through a temporary file and a rename.
    fn finish(mut self, mut manifest: RunManifest) -> Result<PathBuf, CliError> {
        manifest.finished_at = now();
        self.written.push("manifest.json".into());
        manifest.outputs = self.written;
        let body = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Internal(e.to_string()))?;
        let tmp = self.dir.join("manifest.json.tmp");
        let path = self.dir.join("manifest.json");
        fs::write(&tmp, body + "\n").map_err(|source| CliError::Io {
            path: tmp.display().to_string(),
            source,
        })?;
        fs::rename(&tmp, &path).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(self.dir)
    }
}

fn out_dir(out: Option<&PathBuf>, spec: &Workcell, command: &str, seed: u64) -> PathBuf {
    out.cloned().unwrap_or_else(|| {
        let root = std::env::var_os("CELLOPT_OUT").unwrap_or_else(|| DEFAULT_OUT_ROOT.into());
        PathBuf::from(root).join(format!("{}-{command}-s{seed}", spec.name))
    })
}

fn config(spec: &Workcell, run: &RunFlags, ga: &GaFlags) -> Result<GaConfig, CliError> {
    let mut cfg = GaConfig::default().layered(&[&spec.ga, &ga.section(run)])?;
    if let Some(j) = run.jobs {
        cfg.jobs = j;
    }
    if let Some(m) = run.max_ops {
        cfg.exact_max_ops = m;
    }
    Ok(cfg)
}

fn config_json(cfg: &GaConfig) -> Result<serde_json::Value, CliError> {
    serde_json::to_value(cfg).map_err(|e| CliError::Internal(e.to_string()))
}

fn cmd_validate(spec: &Path) -> Result<(), CliError> {
    let l = Loaded::open(spec)?;
    let diags = model::validate_spec(&l.spec);
    for d in &diags {
        println!("error: {d}");
    }
    for w in model::fixed_resource_report(&l.spec) {
        println!("warning: {w}");
    }
    if !diags.is_empty() {
        return Err(CliError::Invalid(diags.len()));
    }
    let dims = l.spec.chromosome_dimensions();
    println!(
        "ok: {} ({} operations, {} agents, {} resources, chromosome {}+{})",
        l.spec.name,
        l.spec.op_count(),
        l.spec.agent_count(),
        l.spec.resources.len(),
        dims.layout,
        dims.allocation
    );
    Ok(())
}

fn cmd_baseline(spec: &Path, samples: usize, run: &RunFlags, ga: &GaFlags) -> Result<PathBuf, CliError> {
    let started = now();
    let l = Loaded::valid(spec)?;
    let cfg = config(&l.spec, run, ga)?;
    let base = evolve::build_baseline(&l.spec, &cfg, samples)?;
    let mut art = Artifacts::create(out_dir(run.out.as_ref(), &l.spec, "baseline", cfg.seed))?;
    art.text("baseline.toml", &base.stats.to_toml())?;
    art.csv("baseline_kpis.csv", |w| export::write_evaluations(w, &l.spec, &base.rows))?;
    let mut m = l.manifest("baseline", started);
    m.seed = Some(cfg.seed);
    m.weights = Some(cfg.weights.0);
    m.scheduler = Some(cfg.scheduler.clone());
    m.evaluations = Some(base.rows.len());
    m.best_fitness = Some(base.best_fitness());
    m.config = Some(config_json(&cfg)?);
    println!("baseline: {} samples, mean {:?}, std {:?}", base.stats.sample_count, base.stats.mean, base.stats.std);
    let dir = art.finish(m)?;
    println!("artifacts: {}", dir.display());
    Ok(dir)
}

#[derive(Serialize)]
struct BoxplotRow {
    series: &'static str,
    index: usize,
    cycle_time: f64,
    ergonomics: f64,
    inverse_manipulability: f64,
    surface: f64,
    collision: bool,
}

fn boxplot_rows<'a>(series: &'static str, rows: &'a [EvaluationRecord]) -> impl Iterator<Item = BoxplotRow> + 'a {
    rows.iter().filter_map(move |r| {
        r.kpi.map(|k| BoxplotRow {
            series,
            index: r.index,
            cycle_time: k.raw[0],
            ergonomics: k.raw[1],
            inverse_manipulability: k.raw[2],
            surface: k.raw[3],
            collision: k.safety,
        })
    })
}

fn cmd_optimize(
    spec: &Path,
    baseline: Option<&PathBuf>,
    auto_baseline: Option<usize>,
    run: &RunFlags,
    ga: &GaFlags,
) -> Result<PathBuf, CliError> {
    let started = now();
    let l = Loaded::valid(spec)?;
    let cfg = config(&l.spec, run, ga)?;
    let (stats, base_rows) = match baseline {
        Some(p) => {
            let text = format::read_text(p)?;
            let stats = BaselineStats::from_toml(&text).map_err(|reason| CliError::Stats {
                path: p.display().to_string(),
                reason,
            })?;
            (stats, None)
        }
        None => {
            let b = evolve::build_baseline(&l.spec, &cfg, auto_baseline.unwrap_or(cfg.evaluation_budget()))?;
            (b.stats, Some(b.rows))
        }
    };
    let res = evolve::optimize(&l.spec, &cfg, &stats)?;
    let mut art = Artifacts::create(out_dir(run.out.as_ref(), &l.spec, "optimize", cfg.seed))?;
    let cfg_json = config_json(&cfg)?;
    art.text(
        "config.json",
        &(serde_json::to_string_pretty(&cfg_json).map_err(|e| CliError::Internal(e.to_string()))? + "\n"),
    )?;
    art.text("baseline.toml", &stats.to_toml())?;
    if let Some(rows) = &base_rows {
        art.csv("baseline_kpis.csv", |w| export::write_evaluations(w, &l.spec, rows))?;
    }
    art.csv("evaluations.csv", |w| export::write_evaluations(w, &l.spec, &res.run.log))?;
    art.csv("history.csv", |w| export::write_history(w, &res.run.history))?;
    art.csv("kpi_boxplot.csv", |w| {
        let mut out = csv::Writer::from_writer(w);
        let base = base_rows.as_deref().unwrap_or(&[]);
        for row in boxplot_rows("baseline", base).chain(boxplot_rows("ga", &res.run.log)) {
            out.serialize(row)?;
        }
        out.flush()?;
        Ok(())
    })?;
    art.text("best_chromosome.toml", &format::chromosome_to_string(&l.spec, &res.run.best)?)?;
    art.csv("gantt.csv", |w| export::write_gantt(w, &l.spec, &res.gantt))?;
    art.text("gantt.svg", &export::gantt_svg(&l.spec, &res.gantt))?;
    art.text("layout.svg", &export::layout_svg(&l.spec, &res.run.best))?;
    if run.traces {
        art.csv("traces.csv", |w| export::write_traces(w, &l.spec, &res.best.plan, &res.best.schedule))?;
    }
    let mut m = l.manifest("optimize", started);
    m.seed = Some(cfg.seed);
    m.weights = Some(cfg.weights.0);
    m.scheduler = Some(cfg.scheduler.clone());
    m.evaluations = Some(res.run.log.len());
    m.best_fitness = Some(res.run.best_fitness);
    m.makespan = Some(res.best.schedule.makespan);
    m.config = Some(cfg_json);
    println!(
        "optimize: {} evaluations, best fitness {}, makespan {} s",
        res.run.log.len(),
        res.run.best_fitness,
        res.best.schedule.makespan
    );
    let dir = art.finish(m)?;
    println!("artifacts: {}", dir.display());
    Ok(dir)
}

fn cmd_schedule(
    spec: &Path,
    chromosome: &Path,
    out: Option<&PathBuf>,
    exact: bool,
    max_ops: Option<usize>,
    traces: bool,
) -> Result<PathBuf, CliError> {
    let started = now();
    let l = Loaded::valid(spec)?;
    let run = RunFlags {
        seed: None,
        out: out.cloned(),
        weights: None,
        jobs: None,
        exact,
        max_ops,
        traces,
    };
    let cfg = config(&l.spec, &run, &GaFlags::default())?;
    let x = format::load_chromosome(&l.spec, chromosome)?;
    let report = feasibility::check(&l.spec, &x).map_err(EvolveError::from)?;
    for v in &report.violations {
        eprintln!("violation: {v}");
    }
    if !report.ok() {
        let families: Vec<String> = report.violations.iter().map(|v| v.constraint.to_string()).collect();
        return Err(CliError::Infeasible(families.join(", ")));
    }
    let sched = evolve::resolve_scheduler(&cfg)?;
    let a = kpi::assess(&l.spec, &x, sched.as_ref())?;
    let table = scheduler::gantt(&a.schedule, &x.allocation, &l.spec);
    let mut art = Artifacts::create(out_dir(out, &l.spec, "schedule", 0))?;
    art.csv("gantt.csv", |w| export::write_gantt(w, &l.spec, &table))?;
    art.text("gantt.svg", &export::gantt_svg(&l.spec, &table))?;
    art.text("layout.svg", &export::layout_svg(&l.spec, &x))?;
    if traces {
        art.csv("traces.csv", |w| export::write_traces(w, &l.spec, &a.plan, &a.schedule))?;
    }
    let mut m = l.manifest("schedule", started);
    m.scheduler = Some(cfg.scheduler.clone());
    m.makespan = Some(a.schedule.makespan);
    println!("makespan: {} s ({} scheduler)", a.schedule.makespan, cfg.scheduler);
    let dir = art.finish(m)?;
    println!("artifacts: {}", dir.display());
    Ok(dir)
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Validate { spec } => cmd_validate(&spec),
        Command::Baseline { spec, samples, run, ga } => cmd_baseline(&spec, samples, &run, &ga).map(drop),
        Command::Optimize {
            spec,
            baseline,
            auto_baseline,
            run,
            ga,
        } => cmd_optimize(&spec, baseline.as_ref(), auto_baseline, &run, &ga).map(drop),
        Command::Schedule {
            spec,
            chromosome,
            out,
            exact,
            max_ops,
            traces,
        } => cmd_schedule(&spec, &chromosome, out.as_ref(), exact, max_ops, traces).map(drop),
    }
}

/// Parses arguments, runs the command and maps the outcome to an exit code.
pub fn main_with<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
