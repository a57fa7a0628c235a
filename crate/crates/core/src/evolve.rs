//! Leader genetic algorithm.
//!
//! Parents are picked by roulette over Boltzmann weights, layout genes are
//! recombined with a binary mask, allocation genes are redrawn, and mutated
//! children are kept only if they pass every constraint. The best `N_p`
//! children replace the parents; an incumbent tracks the best ever seen and
//! drives the adaptive mutation schedule.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::feasibility::{self, FeasibilityError};
use crate::kpi::{self, Assessment, BaselineStats, KpiError, KpiVector, PipelineError, Weights};
use crate::model::{Chromosome, GaSection, OperationId, OperationKind, Workcell};
use crate::registry::{Named, Registry, UnknownStrategy};
use crate::scheduler::{self, GanttTable, Scheduler};

#[derive(Debug, thiserror::Error)]
pub enum EvolveError {
    #[error("invalid optimizer configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Strategy(#[from] UnknownStrategy),
    #[error("CHILD_GENERATION_STALLED: {found} of {wanted} valid children after {attempts} attempts")]
    Stalled {
        found: usize,
        wanted: usize,
        attempts: usize,
    },
    #[error(transparent)]
    Infeasible(#[from] FeasibilityError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Kpi(#[from] KpiError),
}

/// Optimizer settings. Defaults are the case-study values.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GaConfig {
    pub parents: usize,
    pub children: usize,
    pub iterations: usize,
    pub mutation_rate: f64,
    /// Layout units.
    pub mutation_step: f64,
    pub beta: f64,
    pub stagnation_limit: usize,
    pub adapt_up: f64,
    pub adapt_down: f64,
    pub seed: u64,
    pub weights: Weights,
    pub selection: String,
    pub scheduler: String,
    pub exact_max_ops: usize,
    pub max_tries: usize,
    pub child_attempts: usize,
    /// Parallel evaluation width; 0 lets the thread pool decide.
    pub jobs: usize,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            parents: 4,
            children: 6,
            iterations: 20,
            mutation_rate: 0.25,
            mutation_step: 100.0,
            beta: 1.0,
            stagnation_limit: 2,
            adapt_up: 1.05,
            adapt_down: 0.95,
            seed: 0,
            weights: Weights::default(),
            selection: "boltzmann".into(),
            scheduler: "list".into(),
            exact_max_ops: scheduler::DEFAULT_EXACT_MAX_OPS,
            max_tries: feasibility::DEFAULT_MAX_TRIES,
            child_attempts: 100_000,
            jobs: 1,
        }
    }
}

impl GaConfig {
    /// Applies each layer's set fields over the current values, in order.
    pub fn layered(mut self, layers: &[&GaSection]) -> Result<Self, EvolveError> {
        for l in layers {
            macro_rules! take {
                ($($f:ident),*) => { $( if let Some(v) = l.$f.clone() { self.$f = v; } )* };
            }
            take!(
                parents,
                children,
                iterations,
                mutation_rate,
                mutation_step,
                beta,
                stagnation_limit,
                seed,
                selection,
                scheduler,
                max_tries,
                child_attempts
            );
            if let Some(w) = l.weights {
                self.weights = Weights::try_from(w)?;
            }
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), EvolveError> {
        let bad = |m: &str| Err(EvolveError::Config(m.into()));
        if self.parents == 0 {
            return bad("parents must be at least 1");
        }
        if self.children == 0 || !self.children.is_multiple_of(2) {
            return bad("children must be a positive even number");
        }
        if self.children < self.parents {
            return bad("children must be at least the number of parents");
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return bad("mutation_rate must lie in [0, 1]");
        }
        if !(self.mutation_step >= 0.0 && self.mutation_step.is_finite()) {
            return bad("mutation_step must be finite and non-negative");
        }
        if !self.beta.is_finite() {
            return bad("beta must be finite");
        }
        Ok(())
    }

    /// `N_c · N_it + N_p`.
    pub fn evaluation_budget(&self) -> usize {
        self.children * self.iterations + self.parents
    }
}

/// Independent random streams derived from one seed.
#[derive(Clone, Copy, Debug)]
enum Purpose {
    Sampling = 0,
    Selection = 1,
    Crossover = 2,
    Mutation = 3,
}

struct Streams {
    sampling: ChaCha8Rng,
    selection: ChaCha8Rng,
    crossover: ChaCha8Rng,
    mutation: ChaCha8Rng,
}

impl Streams {
    fn new(seed: u64, family: u64) -> Self {
        let stream = |p: Purpose| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(family * 16 + p as u64);
            rng
        };
        Streams {
            sampling: stream(Purpose::Sampling),
            selection: stream(Purpose::Selection),
            crossover: stream(Purpose::Crossover),
            mutation: stream(Purpose::Mutation),
        }
    }
}

const GA_STREAMS: u64 = 1;
const BASELINE_STREAMS: u64 = 2;

/// Parent-selection probabilities from a fitness vector.
pub trait Selection: Named + Send + Sync {
    fn probabilities(&self, fitness: &[f64], beta: f64) -> Vec<f64>;
}

/// `π_i ∝ exp(−β f_i / mean|f|)`; uniform when every fitness is zero.
#[derive(Clone, Copy, Debug, Default)]
pub struct Boltzmann;

impl Named for Boltzmann {
    fn name(&self) -> &'static str {
        "boltzmann"
    }
}

impl Selection for Boltzmann {
    fn probabilities(&self, fitness: &[f64], beta: f64) -> Vec<f64> {
        let f = finite_fitness(fitness);
        let n = f.len();
        let scale = f.iter().map(|v| v.abs()).sum::<f64>() / n as f64;
        if !(scale > 0.0) || beta == 0.0 {
            return vec![1.0 / n as f64; n];
        }
        let lo = f.iter().copied().fold(f64::INFINITY, f64::min);
        let w: Vec<f64> = f.iter().map(|v| (-beta * (v - lo) / scale).exp()).collect();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|v| v / total).collect()
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct UniformSelection;

impl Named for UniformSelection {
    fn name(&self) -> &'static str {
        "uniform"
    }
}

impl Selection for UniformSelection {
    fn probabilities(&self, fitness: &[f64], _beta: f64) -> Vec<f64> {
        vec![1.0 / fitness.len() as f64; fitness.len()]
    }
}

pub fn builtin_selections() -> Registry<dyn Selection> {
    let mut reg: Registry<dyn Selection> = Registry::empty();
    reg.register(Arc::new(Boltzmann));
    reg.register(Arc::new(UniformSelection));
    reg
}

/// Replaces infinite fitness with the largest finite value plus one
/// population standard deviation of the finite values. All-infinite
/// populations become all zero.
pub fn finite_fitness(fitness: &[f64]) -> Vec<f64> {
    let finite: Vec<f64> = fitness.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return vec![0.0; fitness.len()];
    }
    let n = finite.len() as f64;
    let mean = finite.iter().sum::<f64>() / n;
    let std = (finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let max = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    fitness
        .iter()
        .map(|&v| if v.is_finite() { v } else { max + std })
        .collect()
}

/// Two cumulative-interval roulette draws; the same index may come twice.
pub fn select_parents<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> (usize, usize) {
    let mut spin = || {
        let r: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if r < acc {
                return i;
            }
        }
        probs.len() - 1
    };
    let a = spin();
    let b = spin();
    (a, b)
}

/// Masked layout recombination with a fresh allocation for each child.
pub fn crossover_with_mask<R: Rng + ?Sized>(
    a: &Chromosome,
    b: &Chromosome,
    mask: &[bool],
    spec: &Workcell,
    rng: &mut R,
) -> (Chromosome, Chromosome) {
    let mut la = Vec::with_capacity(mask.len());
    let mut lb = Vec::with_capacity(mask.len());
    for (k, &v) in mask.iter().enumerate() {
        if v {
            la.push(a.layout[k]);
            lb.push(b.layout[k]);
        } else {
            la.push(b.layout[k]);
            lb.push(a.layout[k]);
        }
    }
    let mut alloc = || -> Vec<_> {
        (0..spec.op_count())
            .map(|i| feasibility::draw_allocation_gene(spec, OperationId(i), rng))
            .collect()
    };
    let aa = alloc();
    let ab = alloc();
    (
        Chromosome {
            layout: la,
            allocation: aa,
        },
        Chromosome {
            layout: lb,
            allocation: ab,
        },
    )
}

pub fn crossover<R: Rng + ?Sized>(
    a: &Chromosome,
    b: &Chromosome,
    spec: &Workcell,
    rng: &mut R,
) -> (Chromosome, Chromosome) {
    let mask: Vec<bool> = (0..a.layout.len()).map(|_| rng.random_bool(0.5)).collect();
    crossover_with_mask(a, b, &mask, spec, rng)
}

/// Per-gene mutation: layout genes take a Gaussian step of scale `sigma`,
/// individual allocation genes switch to another capable agent.
pub fn mutate<R: Rng + ?Sized>(x: &mut Chromosome, spec: &Workcell, mu: f64, sigma: f64, rng: &mut R) {
    for g in x.layout.iter_mut() {
        if rng.random::<f64>() < mu {
            let z: f64 = StandardNormal.sample(rng);
            *g += sigma * z;
        }
    }
    for (i, gene) in x.allocation.iter_mut().enumerate() {
        let op = OperationId(i);
        if spec.operation(op).kind == OperationKind::Collaborative {
            continue;
        }
        if rng.random::<f64>() < mu {
            let others: Vec<_> = spec
                .eligible_agents(op)
                .into_iter()
                .filter(|a| *a != gene[0])
                .collect();
            if !others.is_empty() {
                gene[0] = others[rng.random_range(0..others.len())];
            }
        }
    }
}

/// Adaptive mutation parameters driven by incumbent stagnation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaptiveMutation {
    pub mu0: f64,
    pub sigma0: f64,
    pub mu: f64,
    pub sigma: f64,
    pub stagnation: usize,
    pub limit: usize,
    pub up: f64,
    pub down: f64,
}

impl AdaptiveMutation {
    pub fn new(cfg: &GaConfig) -> Self {
        AdaptiveMutation {
            mu0: cfg.mutation_rate,
            sigma0: cfg.mutation_step,
            mu: cfg.mutation_rate,
            sigma: cfg.mutation_step,
            stagnation: 0,
            limit: cfg.stagnation_limit,
            up: cfg.adapt_up,
            down: cfg.adapt_down,
        }
    }

    pub fn observe(&mut self, improved: bool) {
        if improved {
            self.mu = self.mu0;
            self.sigma = self.sigma0;
            self.stagnation = 0;
        } else {
            self.stagnation += 1;
            if self.stagnation > self.limit {
                self.mu = (self.mu * self.up).min(1.0);
                self.sigma *= self.down;
            }
        }
    }
}

/// Fitness of one chromosome, with its KPIs when the evaluator has them.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub fitness: f64,
    pub kpi: Option<KpiVector>,
}

pub trait Evaluator: Sync {
    fn evaluate(&self, x: &Chromosome) -> Result<Evaluation, EvolveError>;
}

/// Full pipeline: plan, schedule, score, normalize, weigh.
pub struct PipelineEvaluator<'a> {
    pub spec: &'a Workcell,
    pub scheduler: Arc<dyn Scheduler>,
    pub stats: Option<BaselineStats>,
    pub weights: Weights,
}

impl Evaluator for PipelineEvaluator<'_> {
    fn evaluate(&self, x: &Chromosome) -> Result<Evaluation, EvolveError> {
        let a = kpi::assess(self.spec, x, self.scheduler.as_ref())?;
        Ok(match &self.stats {
            Some(stats) => {
                let k = kpi::normalize(&a.kpi, stats);
                Evaluation {
                    fitness: kpi::fitness(&k, &self.weights),
                    kpi: Some(k),
                }
            }
            None => Evaluation {
                fitness: 0.0,
                kpi: Some(a.kpi),
            },
        })
    }
}

/// Wraps a function of the evaluation index; evaluations run in submission
/// order when `jobs = 1`.
pub struct FnEvaluator<F> {
    calls: AtomicUsize,
    f: F,
}

impl<F: Fn(usize, &Chromosome) -> f64 + Sync> FnEvaluator<F> {
    pub fn new(f: F) -> Self {
        FnEvaluator {
            calls: AtomicUsize::new(0),
            f,
        }
    }
}

impl<F: Fn(usize, &Chromosome) -> f64 + Sync> Evaluator for FnEvaluator<F> {
    fn evaluate(&self, x: &Chromosome) -> Result<Evaluation, EvolveError> {
        let k = self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(Evaluation {
            fitness: (self.f)(k, x),
            kpi: None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationRecord {
    pub index: usize,
    pub iteration: usize,
    pub chromosome: Chromosome,
    pub fitness: f64,
    pub kpi: Option<KpiVector>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistoryRow {
    pub iteration: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub mu: f64,
    pub sigma: f64,
    pub stagnation: usize,
    pub evaluations: usize,
}

pub struct GaState {
    pub parents: Vec<Chromosome>,
    pub fitness: Vec<f64>,
    pub best: Chromosome,
    pub best_fitness: f64,
    pub mutation: AdaptiveMutation,
    pub iteration: usize,
    pub log: Vec<EvaluationRecord>,
    pub history: Vec<HistoryRow>,
}

impl GaState {
    fn record_history(&mut self) {
        let mean = self.fitness.iter().sum::<f64>() / self.fitness.len() as f64;
        self.history.push(HistoryRow {
            iteration: self.iteration,
            best_fitness: self.best_fitness,
            mean_fitness: mean,
            mu: self.mutation.mu,
            sigma: self.mutation.sigma,
            stagnation: self.mutation.stagnation,
            evaluations: self.log.len(),
        });
    }
}

/// One optimizer instance: configuration, strategies, and random streams.
pub struct Ga<'a> {
    spec: &'a Workcell,
    cfg: GaConfig,
    selection: Arc<dyn Selection>,
    streams: Streams,
    pool: Option<rayon::ThreadPool>,
}

impl<'a> Ga<'a> {
    pub fn new(spec: &'a Workcell, cfg: GaConfig) -> Result<Self, EvolveError> {
        Self::with_streams(spec, cfg, GA_STREAMS)
    }

    fn with_streams(spec: &'a Workcell, cfg: GaConfig, family: u64) -> Result<Self, EvolveError> {
        cfg.validate()?;
        let selection = builtin_selections().resolve("selection", &cfg.selection)?;
        let pool = if cfg.jobs == 1 {
            None
        } else {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(cfg.jobs)
                    .build()
                    .map_err(|e| EvolveError::Config(e.to_string()))?,
            )
        };
        Ok(Ga {
            spec,
            streams: Streams::new(cfg.seed, family),
            cfg,
            selection,
            pool,
        })
    }

    pub fn config(&self) -> &GaConfig {
        &self.cfg
    }

    fn evaluate_batch(
        &self,
        evaluator: &dyn Evaluator,
        xs: &[Chromosome],
    ) -> Result<Vec<Evaluation>, EvolveError> {
        match &self.pool {
            None => xs.iter().map(|x| evaluator.evaluate(x)).collect(),
            Some(pool) => pool.install(|| xs.par_iter().map(|x| evaluator.evaluate(x)).collect()),
        }
    }

    fn log_batch(state_log: &mut Vec<EvaluationRecord>, iteration: usize, xs: &[Chromosome], evals: &[Evaluation]) {
        for (x, e) in xs.iter().zip(evals) {
            state_log.push(EvaluationRecord {
                index: state_log.len(),
                iteration,
                chromosome: x.clone(),
                fitness: e.fitness,
                kpi: e.kpi,
            });
        }
    }

    /// Samples and evaluates the initial parents, at most `limit` of them.
    pub fn initialize(&mut self, evaluator: &dyn Evaluator, limit: usize) -> Result<GaState, EvolveError> {
        let n = self.cfg.parents.min(limit.max(1));
        let parents = (0..n)
            .map(|_| feasibility::sample(self.spec, &mut self.streams.sampling, self.cfg.max_tries))
            .collect::<Result<Vec<_>, _>>()?;
        let evals = self.evaluate_batch(evaluator, &parents)?;
        let mut log = Vec::new();
        Self::log_batch(&mut log, 0, &parents, &evals);
        let (parents, fitness) = sort_by_fitness(parents, evals.iter().map(|e| e.fitness).collect());
        let mut state = GaState {
            best: parents[0].clone(),
            best_fitness: fitness[0],
            parents,
            fitness,
            mutation: AdaptiveMutation::new(&self.cfg),
            iteration: 0,
            log,
            history: Vec::new(),
        };
        state.record_history();
        Ok(state)
    }

    /// Select, recombine, and mutate until `N_c` feasible children exist.
    pub fn make_children(&mut self, state: &GaState) -> Result<Vec<Chromosome>, EvolveError> {
        let wanted = self.cfg.children;
        let probs = self.selection.probabilities(&state.fitness, self.cfg.beta);
        let mut out = Vec::with_capacity(wanted);
        let mut attempts = 0;
        while out.len() < wanted {
            if attempts >= self.cfg.child_attempts {
                return Err(EvolveError::Stalled {
                    found: out.len(),
                    wanted,
                    attempts,
                });
            }
            let (i, j) = select_parents(&probs, &mut self.streams.selection);
            let (a, b) = crossover(&state.parents[i], &state.parents[j], self.spec, &mut self.streams.crossover);
            for mut child in [a, b] {
                attempts += 1;
                mutate(
                    &mut child,
                    self.spec,
                    state.mutation.mu,
                    state.mutation.sigma,
                    &mut self.streams.mutation,
                );
                if out.len() < wanted && feasibility::check(self.spec, &child)?.ok() {
                    out.push(child);
                }
            }
        }
        Ok(out)
    }

    /// One generation. `limit` caps how many children are evaluated.
    pub fn step(&mut self, state: &mut GaState, evaluator: &dyn Evaluator, limit: usize) -> Result<(), EvolveError> {
        let mut children = self.make_children(state)?;
        children.truncate(limit.max(1));
        let evals = self.evaluate_batch(evaluator, &children)?;
        state.iteration += 1;
        Self::log_batch(&mut state.log, state.iteration, &children, &evals);
        let (mut sorted, mut fitness) = sort_by_fitness(children, evals.iter().map(|e| e.fitness).collect());
        sorted.truncate(self.cfg.parents);
        fitness.truncate(self.cfg.parents);
        state.parents = sorted;
        state.fitness = fitness;
        let improved = state.fitness[0] < state.best_fitness;
        if improved {
            state.best = state.parents[0].clone();
            state.best_fitness = state.fitness[0];
        }
        state.mutation.observe(improved);
        state.record_history();
        Ok(())
    }

    /// Initial population plus `N_it` generations.
    pub fn run(&mut self, evaluator: &dyn Evaluator) -> Result<RunOutput, EvolveError> {
        let mut state = self.initialize(evaluator, usize::MAX)?;
        for _ in 0..self.cfg.iterations {
            self.step(&mut state, evaluator, usize::MAX)?;
        }
        Ok(RunOutput::from(state))
    }

    /// Runs generations until exactly `n` chromosomes have been evaluated.
    fn run_evaluations(&mut self, evaluator: &dyn Evaluator, n: usize) -> Result<RunOutput, EvolveError> {
        let mut state = self.initialize(evaluator, n)?;
        while state.log.len() < n {
            let left = n - state.log.len();
            self.step(&mut state, evaluator, left)?;
        }
        Ok(RunOutput::from(state))
    }
}

fn sort_by_fitness(xs: Vec<Chromosome>, f: Vec<f64>) -> (Vec<Chromosome>, Vec<f64>) {
    let mut pairs: Vec<(Chromosome, f64)> = xs.into_iter().zip(f).collect();
    pairs.sort_by(|a, b| a.1.total_cmp(&b.1));
    pairs.into_iter().unzip()
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub best: Chromosome,
    pub best_fitness: f64,
    pub history: Vec<HistoryRow>,
    pub log: Vec<EvaluationRecord>,
}

impl From<GaState> for RunOutput {
    fn from(s: GaState) -> Self {
        RunOutput {
            best: s.best,
            best_fitness: s.best_fitness,
            history: s.history,
            log: s.log,
        }
    }
}

/// Random-search reference: the same generator with every fitness forced
/// to zero, so selection is uniform and nothing is ever preferred.
#[derive(Clone, Debug)]
pub struct Baseline {
    pub stats: BaselineStats,
    /// Every evaluated chromosome with normalized KPIs and weighted fitness.
    pub rows: Vec<EvaluationRecord>,
}

impl Baseline {
    pub fn best_fitness(&self) -> f64 {
        self.rows.iter().map(|r| r.fitness).fold(f64::INFINITY, f64::min)
    }
}

pub fn resolve_scheduler(cfg: &GaConfig) -> Result<Arc<dyn Scheduler>, EvolveError> {
    Ok(scheduler::builtin_schedulers(cfg.exact_max_ops).resolve("scheduler", &cfg.scheduler)?)
}

pub fn build_baseline(spec: &Workcell, cfg: &GaConfig, n_samples: usize) -> Result<Baseline, EvolveError> {
    let raw = PipelineEvaluator {
        spec,
        scheduler: resolve_scheduler(cfg)?,
        stats: None,
        weights: cfg.weights,
    };
    let mut ga = Ga::with_streams(spec, cfg.clone(), BASELINE_STREAMS)?;
    let out = ga.run_evaluations(&raw, n_samples)?;
    let kpis: Vec<KpiVector> = out.log.iter().map(|r| r.kpi.expect("pipeline records KPIs")).collect();
    let stats = BaselineStats::from_samples(&kpis, cfg.seed)?;
    let rows = out
        .log
        .into_iter()
        .map(|r| {
            let k = kpi::normalize(&r.kpi.expect("pipeline records KPIs"), &stats);
            EvaluationRecord {
                fitness: kpi::fitness(&k, &cfg.weights),
                kpi: Some(k),
                ..r
            }
        })
        .collect();
    Ok(Baseline { stats, rows })
}

#[derive(Clone, Debug)]
pub struct OptimizationResult {
    pub run: RunOutput,
    pub best: Assessment,
    pub gantt: GanttTable,
}

pub fn optimize(spec: &Workcell, cfg: &GaConfig, stats: &BaselineStats) -> Result<OptimizationResult, EvolveError> {
    let scheduler = resolve_scheduler(cfg)?;
    let evaluator = PipelineEvaluator {
        spec,
        scheduler: scheduler.clone(),
        stats: Some(stats.clone()),
        weights: cfg.weights,
    };
    let run = Ga::new(spec, cfg.clone())?.run(&evaluator)?;
    let best = kpi::assess(spec, &run.best, scheduler.as_ref())?;
    let gantt = scheduler::gantt(&best.schedule, &run.best.allocation, spec);
    Ok(OptimizationResult { run, best, gantt })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feasibility::{check, sample, DEFAULT_MAX_TRIES};
    use crate::model::tests::tiny_cell;
    use crate::model::AgentId;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cell_config() -> GaConfig {
        GaConfig {
            mutation_step: 0.05,
            ..GaConfig::default()
        }
    }

    fn feasible(spec: &Workcell, seed: u64) -> Chromosome {
        sample(spec, &mut ChaCha8Rng::seed_from_u64(seed), DEFAULT_MAX_TRIES).unwrap()
    }

    #[test]
    fn boltzmann_two_values() {
        let p = Boltzmann.probabilities(&[1.0, 3.0], 1.0);
        // exp(-1/2) / (exp(-1/2) + exp(-3/2)) = 1 / (1 + e^-1)
        let expected = 1.0 / (1.0 + (-1.0f64).exp());
        assert_relative_eq!(p[0], expected, max_relative = 1e-12);
        assert_relative_eq!(p[1], 1.0 - expected, max_relative = 1e-12);
        assert!((p[0] - 0.731).abs() < 5e-4);
    }

    #[test]
    fn boltzmann_uniform_cases() {
        assert_eq!(Boltzmann.probabilities(&[2.0; 4], 1.0), vec![0.25; 4]);
        assert_eq!(Boltzmann.probabilities(&[1.0, 5.0, 9.0], 0.0), vec![1.0 / 3.0; 3]);
        assert_eq!(Boltzmann.probabilities(&[0.0; 4], 1.0), vec![0.25; 4]);
        assert_eq!(UniformSelection.probabilities(&[1.0, 9.0], 1.0), vec![0.5; 2]);
    }

    #[test]
    fn boltzmann_prefers_lower_with_negative_mean() {
        let p = Boltzmann.probabilities(&[-2.0, -1.0, 0.5], 1.0);
        assert!(p[0] > p[1] && p[1] > p[2]);
    }

    #[test]
    fn infinite_fitness_mapping() {
        let f = finite_fitness(&[1.0, 3.0, f64::INFINITY]);
        // population std of (1, 3) is 1
        assert_eq!(f, vec![1.0, 3.0, 4.0]);
        assert_eq!(finite_fitness(&[f64::INFINITY; 2]), vec![0.0; 2]);
        let p = Boltzmann.probabilities(&[1.0, f64::INFINITY], 1.0);
        assert!(p.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn roulette_frequencies() {
        let probs = [0.1, 0.2, 0.3, 0.4];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut counts = [0usize; 4];
        let n = 50_000;
        for _ in 0..n {
            let (a, b) = select_parents(&probs, &mut rng);
            counts[a] += 1;
            counts[b] += 1;
        }
        for (c, p) in counts.iter().zip(probs) {
            assert!((*c as f64 / (2 * n) as f64 - p).abs() < 0.01);
        }
    }

    #[test]
    fn identity_mask_and_identical_parents() {
        let spec = tiny_cell();
        let a = feasible(&spec, 1);
        let b = feasible(&spec, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (ca, cb) = crossover_with_mask(&a, &b, &[true, true], &spec, &mut rng);
        assert_eq!(ca.layout, a.layout);
        assert_eq!(cb.layout, b.layout);
        let (ca, cb) = crossover(&a, &a, &spec, &mut rng);
        assert_eq!(ca.layout, cb.layout);
        assert_eq!(ca.allocation[2], vec![AgentId(0), AgentId(1)]);
        assert_eq!(cb.allocation[2], vec![AgentId(0), AgentId(1)]);
    }

    #[test]
    fn mutation_extremes() {
        let spec = tiny_cell();
        let x = feasible(&spec, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut y = x.clone();
        mutate(&mut y, &spec, 0.0, 1.0, &mut rng);
        assert_eq!(y, x);
        let mut y = x.clone();
        mutate(&mut y, &spec, 1.0, 0.0, &mut rng);
        assert_eq!(y.layout, x.layout);
        assert_ne!(y.allocation[0], x.allocation[0]);
        assert_ne!(y.allocation[1], x.allocation[1]);
        assert_eq!(y.allocation[2], x.allocation[2]);
    }

    #[test]
    fn single_capable_agent_never_changes() {
        let mut spec = tiny_cell();
        spec.capability = crate::model::CapabilityMatrix::new(vec![vec![0, 0, 0], vec![1, 0, 0]]);
        let x = feasible(&spec, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            let mut y = x.clone();
            mutate(&mut y, &spec, 1.0, 0.1, &mut rng);
            assert_eq!(y.allocation[0], vec![AgentId(0)]);
        }
    }

    #[test]
    fn adaptive_mutation_sequence() {
        let mut m = AdaptiveMutation::new(&GaConfig::default());
        m.observe(false);
        m.observe(false);
        assert_eq!(m.mu, 0.25);
        m.observe(false);
        assert_eq!(m.mu, 0.25 * 1.05);
        m.observe(false);
        assert_eq!(m.mu, 0.25 * 1.05 * 1.05);
        assert!((m.mu - 0.275625).abs() < 1e-15);
        assert_eq!(m.sigma, 100.0 * 0.95 * 0.95);
        m.observe(true);
        assert_eq!((m.mu, m.sigma, m.stagnation), (0.25, 100.0, 0));
    }

    #[test]
    fn config_layers_and_validation() {
        let spec_layer = GaSection {
            iterations: Some(5),
            seed: Some(9),
            ..GaSection::default()
        };
        let cli_layer = GaSection {
            seed: Some(7),
            weights: Some([1.0, 0.0, 0.0, 0.0]),
            ..GaSection::default()
        };
        let cfg = GaConfig::default().layered(&[&spec_layer, &cli_layer]).unwrap();
        assert_eq!((cfg.iterations, cfg.seed, cfg.parents), (5, 7, 4));
        assert_eq!(cfg.weights, Weights([1.0, 0.0, 0.0, 0.0]));
        assert_eq!(GaConfig::default().evaluation_budget(), 124);
        let odd = GaSection {
            children: Some(5),
            ..GaSection::default()
        };
        assert!(GaConfig::default().layered(&[&odd]).is_err());
    }

    #[test]
    fn constant_evaluator_run() {
        let spec = tiny_cell();
        let eval = FnEvaluator::new(|_, _| 1.0);
        let out = Ga::new(&spec, cell_config()).unwrap().run(&eval).unwrap();
        assert_eq!(out.log.len(), 124);
        let mus: Vec<f64> = out.history.iter().map(|h| h.mu).collect();
        assert_eq!(&mus[..5], &[0.25, 0.25, 0.25, 0.25 * 1.05, 0.25 * 1.05 * 1.05]);
        for r in &out.log {
            assert!(check(&spec, &r.chromosome).unwrap().ok());
        }
    }

    #[test]
    fn improvement_resets_mutation() {
        let spec = tiny_cell();
        // generation 5 children are evaluations 4 + 6*4 .. 4 + 6*5
        let eval = FnEvaluator::new(|k, _| if (28..34).contains(&k) { -1.0 } else { 0.0 });
        let mut ga = Ga::new(&spec, cell_config()).unwrap();
        let out = ga.run(&eval).unwrap();
        assert!(out.history[4].mu > 0.25);
        assert_eq!(out.history[5].mu, 0.25);
        assert_eq!(out.history[5].stagnation, 0);
        assert_eq!(out.best_fitness, -1.0);
    }

    #[test]
    fn runs_are_deterministic_and_parallel_safe() {
        let spec = tiny_cell();
        let f = |_: usize, x: &Chromosome| (x.layout[0] - 0.3).abs() + x.layout[1];
        let a = Ga::new(&spec, cell_config()).unwrap().run(&FnEvaluator::new(f)).unwrap();
        let b = Ga::new(&spec, cell_config()).unwrap().run(&FnEvaluator::new(f)).unwrap();
        let cfg = GaConfig {
            jobs: 4,
            ..cell_config()
        };
        let c = Ga::new(&spec, cfg).unwrap().run(&FnEvaluator::new(f)).unwrap();
        assert_eq!(a.best, b.best);
        assert_eq!(a.log, c.log);
        let initial = a.log[..4].iter().map(|r| r.fitness).fold(f64::INFINITY, f64::min);
        assert!(a.best_fitness <= initial);
        assert!(a.history.windows(2).all(|w| w[1].best_fitness <= w[0].best_fitness));
    }

    #[test]
    fn replacement_keeps_best_children() {
        let spec = tiny_cell();
        let f = |_: usize, x: &Chromosome| x.layout[0] * 3.0 - x.layout[1];
        let mut ga = Ga::new(&spec, cell_config()).unwrap();
        let eval = FnEvaluator::new(f);
        let mut state = ga.initialize(&eval, usize::MAX).unwrap();
        for _ in 0..5 {
            ga.step(&mut state, &eval, usize::MAX).unwrap();
            let gen: Vec<f64> = state
                .log
                .iter()
                .filter(|r| r.iteration == state.iteration)
                .map(|r| r.fitness)
                .collect();
            let worst_kept = state.fitness.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let discarded = gen.iter().filter(|v| !state.fitness.contains(v));
            assert!(discarded.into_iter().all(|v| worst_kept <= *v));
            assert!(state.fitness.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn stalled_generation_is_reported() {
        let spec = tiny_cell();
        let cfg = GaConfig {
            mutation_rate: 1.0,
            mutation_step: 1e6,
            child_attempts: 200,
            ..GaConfig::default()
        };
        let err = Ga::new(&spec, cfg).unwrap().run(&FnEvaluator::new(|_, _| 0.0)).unwrap_err();
        assert!(matches!(err, EvolveError::Stalled { attempts: 200, .. }));
    }

    #[test]
    fn unknown_selection_is_rejected() {
        let spec = tiny_cell();
        let cfg = GaConfig {
            selection: "tournament".into(),
            ..GaConfig::default()
        };
        let err = Ga::new(&spec, cfg).err().unwrap();
        assert!(err.to_string().contains("boltzmann, uniform"), "{err}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn boltzmann_is_a_distribution(f in proptest::collection::vec(-50.0f64..50.0, 1..8), beta in 0.0f64..5.0) {
            let p = Boltzmann.probabilities(&f, beta);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(p.iter().all(|v| *v > 0.0));
        }

        #[test]
        fn children_are_feasible(seed in 0u64..1000) {
            let spec = tiny_cell();
            let cfg = GaConfig { seed, ..cell_config() };
            let mut ga = Ga::new(&spec, cfg).unwrap();
            let eval = FnEvaluator::new(|k, _| k as f64);
            let state = ga.initialize(&eval, usize::MAX).unwrap();
            let children = ga.make_children(&state).unwrap();
            prop_assert_eq!(children.len(), 6);
            for c in &children {
                prop_assert!(check(&spec, c).unwrap().ok());
            }
        }
    }
}
