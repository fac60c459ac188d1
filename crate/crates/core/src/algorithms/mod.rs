//! Randomized-smoothing optimizers and the loop that drives them.
//!
//! Three theory-scheduled methods are provided:
//!
//! - RS-GF: single-sample descent with a growth-adapted stepsize.
//! - RS-NGF: batched, normalized descent.
//! - RS-NVRGF: normalized descent on a SPIDER variance-reduced estimate.
//!
//! GF and VRGF are the constant-stepsize baselines (VRGF takes
//! un-normalized SPIDER steps). Every run goes through [`Solver`], which
//! enforces the oracle budget, logs `f(x_t)` and the stationarity surrogate
//! as *measurement* calls, and returns a [`RunRecord`].

mod analysis;
mod optimizers;
pub mod schedule;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use analysis::{alignment_slack, spider_variance_bound, SpiderStep};
pub use optimizers::{GradientDescent, NormalizedDescent, Optimizer, Plan, Spider, StepInfo};
pub use schedule::{
    batch_rs_ngf, big_batch_rs_nvrgf, refresh_period, schedule_rs_nvrgf, stepsize_rs_gf,
    stepsize_rs_ngf, stepsize_rs_nvrgf, BatchSize, SpiderBatches, Stepsize, TheoryParams,
    MAX_BATCH,
};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::growth::{GrowthModel, SmoothingConfig};
use crate::harness::measure_stationarity;
use crate::problems::{Problem, Tally};
use crate::rng::RngStream;
use crate::smoothing::{DifferenceScheme, Estimator};
use crate::vecops;
use optimizers::Core;

/// RNG stream id used by the optimizer's own estimates.
pub const ALGORITHM_STREAM: u64 = 0;
/// RNG stream id used for measurements (surrogates), kept apart so that
/// measuring never changes the optimization path.
pub const MEASUREMENT_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "rs-gf")]
    RsGf,
    #[serde(rename = "rs-ngf")]
    RsNgf,
    #[serde(rename = "rs-nvrgf")]
    RsNvrgf,
    #[serde(rename = "gf")]
    Gf,
    #[serde(rename = "vrgf")]
    Vrgf,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::RsGf,
        Algorithm::RsNgf,
        Algorithm::RsNvrgf,
        Algorithm::Gf,
        Algorithm::Vrgf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::RsGf => "rs-gf",
            Algorithm::RsNgf => "rs-ngf",
            Algorithm::RsNvrgf => "rs-nvrgf",
            Algorithm::Gf => "gf",
            Algorithm::Vrgf => "vrgf",
        }
    }

    /// Whether the method is one of the theory-scheduled RS-* methods.
    pub fn is_theory(self) -> bool {
        matches!(self, Algorithm::RsGf | Algorithm::RsNgf | Algorithm::RsNvrgf)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::invalid(format!("unknown algorithm `{s}`")))
    }
}

/// How `eta_t` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// The method's theory stepsize multiplied by `scale`.
    Theory { scale: f64 },
    Constant(f64),
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::Theory { scale: 1.0 }
    }
}

/// Batch size of RS-NGF.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchRule {
    #[default]
    Theory,
    Fixed(u64),
}

/// Refresh period `q`, small batch `b` and refresh batch `B` of the SPIDER
/// methods.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpiderRule {
    #[default]
    Theory,
    Fixed { period: u64, small: u64, big: u64 },
}

/// When the stationarity surrogate `|grad f_delta(x_t)|` is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureCadence {
    Never,
    /// At `x_1`, then every `k` iterations.
    EveryIters(u64),
    /// About `n` equally spaced measurements: over the oracle budget when one
    /// is set, over the iteration cap otherwise.
    Spread(u64),
}

impl Default for MeasureCadence {
    fn default() -> Self {
        MeasureCadence::Spread(20)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunOptions {
    /// Iteration cap; defaults to the theory `T` when absent.
    pub max_iterations: Option<u64>,
    /// Oracle-call budget. A step whose cost would exceed it is not taken.
    pub oracle_budget: Option<u64>,
    /// Log `f(x_t)` every this many iterations (the first and last iterate
    /// are always logged).
    pub log_every: u64,
    pub measure: MeasureCadence,
    /// Sample count for each surrogate measurement.
    pub b_eval: u64,
    pub max_batch: u64,
    /// Warn once when `|x_t|` exceeds this radius.
    pub level_radius: Option<f64>,
    /// Whether SPIDER refresh iterations also take a step.
    pub refresh_moves: bool,
    /// Write elapsed wall time into trajectories. Off by default so that
    /// repeated runs produce identical output.
    pub record_wall_time: bool,
    pub scheme: DifferenceScheme,
    pub exec: Exec,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            max_iterations: None,
            oracle_budget: None,
            log_every: 1,
            measure: MeasureCadence::default(),
            b_eval: 10_000,
            max_batch: MAX_BATCH,
            level_radius: None,
            refresh_moves: true,
            record_wall_time: false,
            scheme: DifferenceScheme::Central,
            exec: Exec::default(),
        }
    }
}

/// One logged iterate `x_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub iter: u64,
    /// Oracle calls spent before iteration `t`.
    pub oracle_calls: u64,
    /// Measurement calls spent so far, including this entry's own.
    pub measurement_calls: u64,
    pub f_value: f64,
    /// `eta_t`, or 0 for the last entry.
    pub stepsize: f64,
    pub grad_surrogate: Option<f64>,
    pub wall_time_s: f64,
    pub point: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub algorithm: Algorithm,
    pub trajectory: Vec<TrajectoryPoint>,
    /// Iterate with the smallest recorded surrogate.
    pub output_point: Vec<f64>,
    /// Set when no surrogate was recorded and `output_point` fell back to
    /// the last iterate.
    pub output_fallback: bool,
    pub final_point: Vec<f64>,
    /// Initial states of the algorithm and measurement streams.
    pub seeds: Vec<RngStream>,
    pub wall_time: f64,
    /// Completed iterations.
    pub iterations: u64,
    pub refreshes: u64,
    pub skipped_steps: u64,
    /// Batch size of each completed iteration.
    pub batches: Vec<u64>,
    pub oracle_calls: u64,
    pub measurement_calls: u64,
    /// Reason the run stopped early on a non-finite value.
    pub diverged: Option<String>,
    pub warnings: Vec<String>,
}

/// Result of [`select_output`].
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub point: Vec<f64>,
    /// Trajectory index of the chosen entry.
    pub index: usize,
    pub fallback: bool,
}

/// The logged iterate minimizing the surrogate, earliest on ties. Without
/// any surrogate, the last iterate is returned and `fallback` is set.
pub fn select_output(trajectory: &[TrajectoryPoint]) -> Option<Selection> {
    let best = trajectory
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.grad_surrogate.map(|s| (i, s)))
        .fold(None::<(usize, f64)>, |acc, (i, s)| match acc {
            Some((_, b)) if b <= s => acc,
            _ => Some((i, s)),
        });
    match best {
        Some((index, _)) => Some(Selection {
            point: trajectory[index].point.clone(),
            index,
            fallback: false,
        }),
        None => trajectory.last().map(|p| Selection {
            point: p.point.clone(),
            index: trajectory.len() - 1,
            fallback: true,
        }),
    }
}

/// Full description of one optimizer run; [`Solver::run`] executes it.
#[derive(Clone)]
pub struct Solver {
    pub algorithm: Algorithm,
    pub smoothing: SmoothingConfig,
    pub step: StepRule,
    pub batch: BatchRule,
    pub spider: SpiderRule,
    pub theory: Option<TheoryParams>,
    /// Overrides the problem's declared model.
    pub model: Option<GrowthModel>,
    pub options: RunOptions,
}

impl Solver {
    /// Theory schedules everywhere; the baselines need [`Solver::with_step`].
    pub fn new(algorithm: Algorithm, smoothing: SmoothingConfig) -> Self {
        Self {
            algorithm,
            smoothing,
            step: StepRule::default(),
            batch: BatchRule::default(),
            spider: SpiderRule::default(),
            theory: None,
            model: None,
            options: RunOptions::default(),
        }
    }

    pub fn with_step(mut self, step: StepRule) -> Self {
        self.step = step;
        self
    }

    pub fn with_batch(mut self, batch: BatchRule) -> Self {
        self.batch = batch;
        self
    }

    pub fn with_spider(mut self, spider: SpiderRule) -> Self {
        self.spider = spider;
        self
    }

    pub fn with_theory(mut self, theory: TheoryParams) -> Self {
        self.theory = Some(theory);
        self
    }

    pub fn with_model(mut self, model: GrowthModel) -> Self {
        self.model = Some(model);
        self
    }

    pub fn with_options(mut self, options: RunOptions) -> Self {
        self.options = options;
        self
    }

    fn needs_theory(&self) -> bool {
        let step = matches!(self.step, StepRule::Theory { .. });
        match self.algorithm {
            Algorithm::RsGf | Algorithm::Gf => step,
            Algorithm::RsNgf => step || self.batch == BatchRule::Theory,
            Algorithm::RsNvrgf | Algorithm::Vrgf => step || self.spider == SpiderRule::Theory,
        }
    }

    /// Instantiate the optimizer at `x0` with algorithm stream `seed`.
    pub fn build(&self, problem: &Problem, x0: &[f64], seed: u64) -> Result<Box<dyn Optimizer>> {
        if problem.dim() != self.smoothing.dim {
            return Err(Error::DimensionMismatch {
                expected: problem.dim(),
                got: self.smoothing.dim,
            });
        }
        if matches!(self.algorithm, Algorithm::Gf | Algorithm::Vrgf)
            && !matches!(self.step, StepRule::Constant(_))
        {
            return Err(Error::invalid(format!(
                "{} needs a constant stepsize",
                self.algorithm
            )));
        }
        let (model, theory) = if self.needs_theory() {
            let model = match &self.model {
                Some(m) => m.clone(),
                None => problem.require_model()?.clone(),
            };
            let theory = self.theory.ok_or_else(|| {
                Error::invalid(format!("{} with theory schedule needs theory parameters", self.algorithm))
            })?;
            (Some(model), Some(theory))
        } else {
            (None, self.theory)
        };
        let estimator = Estimator::new(self.smoothing)
            .with_scheme(self.options.scheme)
            .with_exec(self.options.exec)
            .with_tally(Tally::Oracle);
        let core = Core::new(
            self.algorithm,
            x0.to_vec(),
            estimator,
            RngStream::new(seed, ALGORITHM_STREAM),
            model,
            theory,
            self.step,
            self.options.max_batch,
        )?;
        Ok(match self.algorithm {
            Algorithm::RsGf | Algorithm::Gf => Box::new(GradientDescent::new(core)),
            Algorithm::RsNgf => Box::new(NormalizedDescent::new(core, self.batch)?),
            Algorithm::RsNvrgf => Box::new(Spider::new(
                core,
                self.spider,
                true,
                self.options.refresh_moves,
            )?),
            Algorithm::Vrgf => Box::new(Spider::new(
                core,
                self.spider,
                false,
                self.options.refresh_moves,
            )?),
        })
    }

    fn iteration_cap(&self) -> Result<u64> {
        match (self.options.max_iterations, self.theory, self.options.oracle_budget) {
            (Some(t), _, _) => Ok(t),
            (None, Some(p), _) => Ok(p.iterations),
            (None, None, Some(_)) => Ok(u64::MAX),
            (None, None, None) => Err(Error::invalid(
                "set max_iterations, theory parameters or an oracle budget",
            )),
        }
    }

    /// Run from `x0`. Counters of `problem` are read as deltas, so a shared
    /// problem may be reused across sequential runs.
    pub fn run(&self, problem: &Problem, x0: &[f64], seed: u64) -> Result<RunRecord> {
        let cap = self.iteration_cap()?;
        let mut opt = self.build(problem, x0, seed)?;
        Driver::new(problem, &self.smoothing, &self.options, seed, cap).run(opt.as_mut())
    }
}

struct Driver<'a> {
    problem: &'a Problem,
    cfg: &'a SmoothingConfig,
    opts: &'a RunOptions,
    seed: u64,
    cap: u64,
    measure_rng: RngStream,
    start: Instant,
    oracle0: u64,
    measure0: u64,
    next_measure: u64,
}

impl<'a> Driver<'a> {
    fn new(
        problem: &'a Problem,
        cfg: &'a SmoothingConfig,
        opts: &'a RunOptions,
        seed: u64,
        cap: u64,
    ) -> Self {
        Self {
            problem,
            cfg,
            opts,
            seed,
            cap,
            measure_rng: RngStream::new(seed, MEASUREMENT_STREAM),
            start: Instant::now(),
            oracle0: problem.oracle_calls(),
            measure0: problem.measurement_calls(),
            next_measure: 0,
        }
    }

    fn oracle_used(&self) -> u64 {
        self.problem.oracle_calls() - self.oracle0
    }

    fn measure_used(&self) -> u64 {
        self.problem.measurement_calls() - self.measure0
    }

    /// Whether the iterate about to be logged at `t` gets a surrogate.
    fn measure_due(&mut self, t: u64, last: bool) -> bool {
        match self.opts.measure {
            MeasureCadence::Never => false,
            MeasureCadence::EveryIters(k) => last || (t - 1).is_multiple_of(k.max(1)),
            MeasureCadence::Spread(n) => {
                let n = n.max(1);
                let (pos, span) = match self.opts.oracle_budget {
                    Some(b) => (self.oracle_used(), b),
                    None => (t - 1, self.cap),
                };
                let threshold = |j: u64| (span as u128 * j as u128 / n as u128) as u64;
                if last || pos >= threshold(self.next_measure) {
                    while self.next_measure <= n && pos >= threshold(self.next_measure) {
                        self.next_measure += 1;
                    }
                    true
                } else {
                    false
                }
            }
        }
    }

    fn entry(&mut self, t: u64, x: &[f64], stepsize: f64, last: bool) -> Result<TrajectoryPoint> {
        let surrogate = if self.measure_due(t, last) {
            Some(measure_stationarity(
                self.problem,
                x,
                self.cfg,
                self.opts.b_eval,
                &mut self.measure_rng,
                self.opts.exec,
            )?)
        } else {
            None
        };
        let f_value = self.problem.eval(x, Tally::Measurement)?;
        Ok(TrajectoryPoint {
            iter: t,
            oracle_calls: self.oracle_used(),
            measurement_calls: self.measure_used(),
            f_value,
            stepsize,
            grad_surrogate: surrogate,
            wall_time_s: if self.opts.record_wall_time {
                self.start.elapsed().as_secs_f64()
            } else {
                0.0
            },
            point: x.to_vec(),
        })
    }

    fn run(mut self, opt: &mut dyn Optimizer) -> Result<RunRecord> {
        let mut trajectory = Vec::new();
        let mut warnings = Vec::new();
        let mut batches = Vec::new();
        let mut refreshes = 0;
        let mut skipped = 0;
        let mut diverged = None;
        let mut radius_warned = false;
        let log_every = self.opts.log_every.max(1);

        let outcome: Result<()> = (|| {
            while opt.iteration() <= self.cap {
                let t = opt.iteration();
                let plan = opt.plan(self.problem)?;
                warnings.extend(opt.take_warnings());
                if !(plan.stepsize.is_finite() && plan.stepsize > 0.0) {
                    return Err(Error::invalid(format!(
                        "non-positive stepsize {} at iteration {t}",
                        plan.stepsize
                    )));
                }
                if let Some(budget) = self.opts.oracle_budget {
                    if self.oracle_used() + plan.cost > budget {
                        break;
                    }
                }
                if (t - 1).is_multiple_of(log_every) {
                    let x = opt.point().to_vec();
                    trajectory.push(self.entry(t, &x, plan.stepsize, false)?);
                }
                let info = opt.execute(self.problem, &plan)?;
                batches.push(info.batch);
                refreshes += u64::from(info.refresh);
                skipped += u64::from(!info.moved);

                let x = opt.point();
                if !vecops::is_finite(x) {
                    return Err(Error::NonFiniteObjective {
                        point: x.to_vec(),
                        value: f64::NAN,
                    });
                }
                if let (Some(radius), false) = (self.opts.level_radius, radius_warned) {
                    let norm = vecops::norm(x);
                    if norm > radius {
                        radius_warned = true;
                        let msg = format!(
                            "iterate norm {norm:.3e} exceeds level radius {radius} at iteration {}",
                            info.iter + 1
                        );
                        log::warn!("{msg}");
                        warnings.push(msg);
                    }
                }
            }
            let t = opt.iteration();
            let x = opt.point().to_vec();
            if trajectory.last().map(|p: &TrajectoryPoint| p.iter) != Some(t) {
                trajectory.push(self.entry(t, &x, 0.0, true)?);
            }
            Ok(())
        })();

        match outcome {
            Ok(()) => {}
            Err(Error::NonFiniteObjective { point, value }) => {
                let msg = format!(
                    "non-finite value {value} at iteration {} (|x| = {:.3e})",
                    opt.iteration(),
                    vecops::norm(&point)
                );
                log::warn!("seed {}: {msg}", self.seed);
                diverged = Some(msg);
            }
            Err(e) => return Err(e),
        }

        let final_point = opt.point().to_vec();
        let selection = select_output(&trajectory);
        let (output_point, output_fallback) = match selection {
            Some(s) => (s.point, s.fallback),
            None => (final_point.clone(), true),
        };
        if output_fallback && self.opts.measure != MeasureCadence::Never {
            warnings.push("no surrogate recorded; output is the last iterate".into());
        }
        Ok(RunRecord {
            algorithm: opt.algorithm(),
            trajectory,
            output_point,
            output_fallback,
            final_point,
            seeds: vec![
                RngStream::new(self.seed, ALGORITHM_STREAM),
                RngStream::new(self.seed, MEASUREMENT_STREAM),
            ],
            wall_time: self.start.elapsed().as_secs_f64(),
            iterations: opt.iteration() - 1,
            refreshes,
            skipped_steps: skipped,
            batches,
            oracle_calls: self.oracle_used(),
            measurement_calls: self.measure_used(),
            diverged,
            warnings,
        })
    }
}

fn theory_solver(
    algorithm: Algorithm,
    model: &GrowthModel,
    cfg: &SmoothingConfig,
    params: &TheoryParams,
    options: RunOptions,
) -> Solver {
    Solver::new(algorithm, *cfg)
        .with_model(model.clone())
        .with_theory(*params)
        .with_options(options)
}

/// RS-GF for `params.iterations` iterations (or until the budget in
/// `options` runs out).
pub fn rs_gf(
    problem: &Problem,
    model: &GrowthModel,
    cfg: &SmoothingConfig,
    params: &TheoryParams,
    x0: &[f64],
    seed: u64,
    options: RunOptions,
) -> Result<RunRecord> {
    theory_solver(Algorithm::RsGf, model, cfg, params, options).run(problem, x0, seed)
}

/// RS-NGF with theory stepsizes and batch sizes.
pub fn rs_ngf(
    problem: &Problem,
    model: &GrowthModel,
    cfg: &SmoothingConfig,
    params: &TheoryParams,
    x0: &[f64],
    seed: u64,
    options: RunOptions,
) -> Result<RunRecord> {
    theory_solver(Algorithm::RsNgf, model, cfg, params, options).run(problem, x0, seed)
}

/// RS-NVRGF with theory stepsizes, refresh period and batch sizes.
pub fn rs_nvrgf(
    problem: &Problem,
    model: &GrowthModel,
    cfg: &SmoothingConfig,
    params: &TheoryParams,
    x0: &[f64],
    seed: u64,
    options: RunOptions,
) -> Result<RunRecord> {
    theory_solver(Algorithm::RsNvrgf, model, cfg, params, options).run(problem, x0, seed)
}

/// Constant-stepsize single-sample descent for `iterations` iterations.
pub fn gf_baseline(
    problem: &Problem,
    cfg: &SmoothingConfig,
    stepsize: f64,
    iterations: u64,
    x0: &[f64],
    seed: u64,
    mut options: RunOptions,
) -> Result<RunRecord> {
    options.max_iterations = Some(iterations);
    Solver::new(Algorithm::Gf, *cfg)
        .with_step(StepRule::Constant(stepsize))
        .with_options(options)
        .run(problem, x0, seed)
}

/// Constant-stepsize, un-normalized SPIDER descent.
#[allow(clippy::too_many_arguments)]
pub fn vrgf_baseline(
    problem: &Problem,
    cfg: &SmoothingConfig,
    stepsize: f64,
    iterations: u64,
    small: u64,
    big: u64,
    period: u64,
    x0: &[f64],
    seed: u64,
    mut options: RunOptions,
) -> Result<RunRecord> {
    options.max_iterations = Some(iterations);
    Solver::new(Algorithm::Vrgf, *cfg)
        .with_step(StepRule::Constant(stepsize))
        .with_spider(SpiderRule::Fixed { period, small, big })
        .with_options(options)
        .run(problem, x0, seed)
}
