//! Run orchestration: budgets, the temperature ladder, independent trials
//! per temperature (optionally in parallel) and the merge between steps.

use crate::error::{invalid, Error, Result};
use crate::objective::{Concurrency, ObjectiveHandle};
use crate::rng::Jkiss;
use crate::stages::{run_axes, run_genetic, run_proximal, run_swarm_search, StageOptions, TrialContext};
use crate::swarm::{merge_stacks, RadiusSchedule, RatedPoint, Stack, StackMetrics};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Smallest per-trial budget accepted by [`allocate_budget`].
pub const MIN_EVALS_PER_TRIAL: u64 = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dim: usize,
    /// Strictly descending, each in `[0, 1]`.
    pub temperatures: Vec<f64>,
    pub trials_per_temperature: usize,
    pub evals_per_trial: u64,
    pub stack_capacity: usize,
    pub master_seed: u64,
    pub stages: StageOptions,
    pub radius: RadiusSchedule,
    /// Worker threads for concurrent trials; 0 picks the machine default
    /// and 1 runs trials sequentially.
    pub threads: usize,
    /// Keep every evaluated point for export.
    pub record_history: bool,
}

impl RunConfig {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            temperatures: vec![1.0, 0.75, 0.5, 0.25, 0.0],
            trials_per_temperature: 10,
            evals_per_trial: 10_000,
            stack_capacity: 120,
            master_seed: 0,
            stages: StageOptions::default(),
            radius: RadiusSchedule::default(),
            threads: 0,
            record_history: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(invalid("dim", "must be at least 1"));
        }
        if self.temperatures.is_empty() {
            return Err(invalid("temperatures", "must not be empty"));
        }
        if let Some(t) = self.temperatures.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(invalid("temperatures", format!("{t} lies outside [0, 1]")));
        }
        if self.temperatures.windows(2).any(|w| w[1] >= w[0]) {
            return Err(invalid("temperatures", "must be strictly descending"));
        }
        if self.trials_per_temperature == 0 {
            return Err(invalid("trials", "must be at least 1"));
        }
        if self.stack_capacity == 0 {
            return Err(invalid("stack_capacity", "must be at least 1"));
        }
        let streams = self.temperatures.len() as u64 * self.trials_per_temperature as u64;
        if streams >= 1 << 32 {
            return Err(invalid("trials", "too many trials for distinct stream indices"));
        }
        if self.evals_per_trial >= 1 << 32 {
            return Err(invalid("evals_per_trial", "must be below 2^32"));
        }
        if !(self.radius.base >= 0.0 && self.radius.slope >= 0.0 && (self.radius.base + self.radius.slope).is_finite()) {
            return Err(invalid("r_eq", "base and slope must be finite and nonnegative"));
        }
        allocate_budget(self.evals_per_trial)?;
        self.stages.validate()
    }

    pub fn alpha(&self) -> f64 {
        2.0 / (self.stack_capacity as f64 + 1.0)
    }
}

/// Splits a trial budget `b + b + 1.3b + 1.3b`, rounding each share and
/// giving the remainder to the last stage.
pub fn allocate_budget(evals_per_trial: u64) -> Result<[u64; 4]> {
    if evals_per_trial < MIN_EVALS_PER_TRIAL {
        return Err(invalid(
            "evals_per_trial",
            format!("must be at least {MIN_EVALS_PER_TRIAL}, got {evals_per_trial}"),
        ));
    }
    let b = evals_per_trial as f64 / 4.6;
    let s1 = b.round() as u64;
    let s3 = (1.3 * b).round() as u64;
    Ok([s1, s1, s3, evals_per_trial - 2 * s1 - s3])
}

/// The points at 1/4, 1/2 and 3/4 along the main diagonal.
pub fn initial_guesses(dim: usize) -> Vec<Vec<f64>> {
    [0.25, 0.5, 0.75].iter().map(|&c| vec![c; dim]).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    Swarm,
    Genetic,
    Proximal,
    Axes,
}

impl StageKind {
    pub const ALL: [StageKind; 4] = [Self::Swarm, Self::Genetic, Self::Proximal, Self::Axes];
}

/// State after one stage of one trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub step: usize,
    pub temperature: f64,
    pub trial: usize,
    pub stream: u64,
    pub stage: StageKind,
    /// Evaluations charged to the stage (guess re-evaluation is charged to
    /// the swarm stage).
    pub evals: u64,
    pub stack_len: usize,
    pub best_value: Option<f64>,
    pub metrics: Option<StackMetrics>,
    pub elapsed_secs: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunDiagnostics {
    pub budgets: [u64; 4],
    pub records: Vec<StageRecord>,
    /// Best merged value after each temperature step.
    pub step_bests: Vec<f64>,
    pub total_evals: u64,
    pub elapsed_secs: f64,
    /// Every finite evaluation, when history recording is on.
    pub history: Vec<RatedPoint>,
}

impl RunDiagnostics {
    /// Best values after every stage of every trial, in execution order of
    /// the sequential schedule.
    pub fn best_trajectory(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.best_value).collect()
    }
}

#[derive(Clone, Debug)]
pub struct TrialOutcome {
    pub stack: Stack,
    pub records: Vec<StageRecord>,
    pub history: Vec<RatedPoint>,
    pub evals: u64,
}

/// Context shared by the trials of one temperature step.
struct Step<'a> {
    config: &'a RunConfig,
    objective: &'a ObjectiveHandle,
    index: usize,
    temperature: f64,
    budgets: [u64; 4],
}

/// One trial of the four stages at temperature `temperature` from the given
/// guesses (evaluated in order, best first).
pub fn run_trial(
    objective: &ObjectiveHandle,
    config: &RunConfig,
    temperature: f64,
    guesses: &[Vec<f64>],
    stream: u64,
) -> Result<TrialOutcome> {
    config.validate()?;
    let step = Step {
        config,
        objective,
        index: 0,
        temperature,
        budgets: allocate_budget(config.evals_per_trial)?,
    };
    trial(&step, 0, guesses, stream)
}

fn trial(step: &Step<'_>, trial_index: usize, guesses: &[Vec<f64>], stream: u64) -> Result<TrialOutcome> {
    let config = step.config;
    if guesses.is_empty() {
        return Err(invalid("guesses", "need at least one guess point"));
    }
    if let Some(g) = guesses.iter().find(|g| g.len() != config.dim) {
        return Err(Error::DimensionMismatch {
            expected: config.dim,
            found: g.len(),
        });
    }
    let r_eq = config.radius.radius(step.temperature, config.dim);
    let stack = Stack::new(config.stack_capacity, r_eq)?;
    let rng = Jkiss::seed(config.master_seed, stream);
    let mut ctx = TrialContext::new(step.objective, stack, rng, step.temperature, stream, config.stages)?;
    if config.record_history {
        ctx.record_trace();
    }

    let mut records = Vec::with_capacity(4);
    let mut clock = Instant::now();
    let guess_count = guesses.len().min(step.budgets[0] as usize).max(1);
    for g in &guesses[..guess_count] {
        if let Some(i) = g.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::OutOfDomain {
                index: i,
                value: g[i],
                lower: 0.0,
                upper: 1.0,
            });
        }
        ctx.evaluate_and_offer(g.clone())?;
    }

    let mut cumulative = 0;
    let mut stage_start = 0;
    for (kind, share) in StageKind::ALL.into_iter().zip(step.budgets) {
        cumulative += share;
        let limit = cumulative.saturating_sub(ctx.evals());
        match kind {
            StageKind::Swarm => run_swarm_search(&mut ctx, limit)?,
            StageKind::Genetic => run_genetic(&mut ctx, limit)?,
            StageKind::Proximal => run_proximal(&mut ctx, limit)?,
            StageKind::Axes => run_axes(&mut ctx, limit)?,
        };
        let now = Instant::now();
        let metrics = if ctx.stack.is_empty() {
            None
        } else {
            Some(ctx.stack.metrics(config.alpha())?)
        };
        records.push(StageRecord {
            step: step.index,
            temperature: step.temperature,
            trial: trial_index,
            stream,
            stage: kind,
            evals: ctx.evals() - stage_start,
            stack_len: ctx.stack.len(),
            best_value: ctx.stack.best_value(),
            metrics,
            elapsed_secs: (now - clock).as_secs_f64(),
        });
        stage_start = ctx.evals();
        clock = now;
    }
    let evals = ctx.evals();
    let history = ctx.take_trace();
    Ok(TrialOutcome {
        stack: ctx.stack,
        records,
        history,
        evals,
    })
}

/// Result of one temperature step.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub stack: Stack,
    pub trials: Vec<TrialOutcome>,
}

fn pool(config: &RunConfig) -> Result<Option<rayon::ThreadPool>> {
    if config.threads == 1 {
        return Ok(None);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map(Some)
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))
}

fn temperature_step(step: &Step<'_>, guesses: &[Vec<f64>], pool: Option<&rayon::ThreadPool>) -> Result<StepOutcome> {
    let trials = step.config.trials_per_temperature;
    let base = (step.index * trials) as u64;
    let run = |i: usize| trial(step, i, guesses, base + i as u64);
    let parallel = pool.filter(|_| step.objective.concurrency() == Concurrency::ConcurrentSafe && trials > 1);
    let outcomes: Vec<TrialOutcome> = match parallel {
        Some(p) => p.install(|| (0..trials).into_par_iter().map(run).collect::<Result<_>>())?,
        None => (0..trials).map(run).collect::<Result<_>>()?,
    };
    let r_eq = step.config.radius.radius(step.temperature, step.config.dim);
    let stack = merge_stacks(outcomes.iter().map(|o| &o.stack), step.config.stack_capacity, r_eq)?;
    Ok(StepOutcome {
        stack,
        trials: outcomes,
    })
}

/// All trials of temperature step `step_index` and their merge.
pub fn run_temperature_step(
    objective: &ObjectiveHandle,
    config: &RunConfig,
    step_index: usize,
    guesses: &[Vec<f64>],
) -> Result<StepOutcome> {
    config.validate()?;
    let temperature = *config
        .temperatures
        .get(step_index)
        .ok_or_else(|| invalid("step_index", format!("{step_index} beyond the temperature list")))?;
    let step = Step {
        config,
        objective,
        index: step_index,
        temperature,
        budgets: allocate_budget(config.evals_per_trial)?,
    };
    let pool = pool(config)?;
    temperature_step(&step, guesses, pool.as_ref())
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub stack: Stack,
    pub diagnostics: RunDiagnostics,
}

/// The full descending temperature ladder; each merged stack seeds the
/// next step.
pub fn run_optimization(objective: &ObjectiveHandle, config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    if objective.dim() != config.dim {
        return Err(Error::DimensionMismatch {
            expected: config.dim,
            found: objective.dim(),
        });
    }
    let started = Instant::now();
    let budgets = allocate_budget(config.evals_per_trial)?;
    let pool = pool(config)?;
    let mut diagnostics = RunDiagnostics {
        budgets,
        ..Default::default()
    };
    let mut guesses = initial_guesses(config.dim);
    let mut last = None;
    for (index, &temperature) in config.temperatures.iter().enumerate() {
        let step = Step {
            config,
            objective,
            index,
            temperature,
            budgets,
        };
        let outcome = temperature_step(&step, &guesses, pool.as_ref())?;
        for t in outcome.trials {
            diagnostics.total_evals += t.evals;
            diagnostics.records.extend(t.records);
            diagnostics.history.extend(t.history);
        }
        if let Some(best) = outcome.stack.best_value() {
            diagnostics.step_bests.push(best);
        }
        if !outcome.stack.is_empty() {
            guesses = outcome.stack.entries().iter().map(|p| p.position.clone()).collect();
        }
        last = Some(outcome.stack);
    }
    diagnostics.elapsed_secs = started.elapsed().as_secs_f64();
    Ok(RunOutcome {
        stack: last.expect("at least one temperature"),
        diagnostics,
    })
}
