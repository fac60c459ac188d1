//! Experiment configuration files.
//!
//! A config is one TOML document. Unknown keys anywhere are rejected, so a
//! typo in a sweep fails loudly instead of silently running the default.
//!
//! ```toml
//! name = "loc-pow5-rs-ngf"
//! seeds = [0, 1, 2, 3, 4]
//! checkpoints = 200            # aggregate grid size
//!
//! [problem]
//! kind = "localization"        # localization | quadratic | abs | constant | linear | worked_example
//! loss = "pow5"                # pow5 | exp_cube | abs
//! instance_seed = 0            # or: instance = "instance.toml"
//!
//! [init]
//! seed = 2024                  # or: point = [ ... ]
//! scale = 1.0
//!
//! [smoothing]
//! delta = 0.01
//!
//! [algorithm]
//! name = "rs-ngf"              # rs-gf | rs-ngf | rs-nvrgf | gf | vrgf
//! step_scale = 1.0             # multiplies the theory stepsize; or: stepsize = 0.01
//! batch = 8                    # rs-ngf fixed batch (theory batch when absent)
//!
//! [options]
//! oracle_budget = 10000
//! b_eval = 10000
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::algorithms::{
    Algorithm, BatchRule, RunOptions, Solver, SpiderRule, StepRule, TheoryParams,
};
use crate::error::{Error, Result};
use crate::growth::SmoothingConfig;
use crate::problems::{
    abs_1d, box_projection, constant, generate_instance, linear, localization_problem, quadratic,
    random_initial_point, worked_example_1d, GenerateSpec, LocalizationInstance, Loss, Problem,
    Tally,
};
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub seeds: Vec<u64>,
    /// Output directory; relative paths are resolved against the working
    /// directory.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_checkpoints")]
    pub checkpoints: usize,
    pub problem: ProblemSpec,
    #[serde(default)]
    pub init: InitSpec,
    pub smoothing: SmoothingSpec,
    pub algorithm: AlgorithmSpec,
    #[serde(default)]
    pub options: RunOptions,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_checkpoints() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    Localization {
        loss: Loss,
        /// Instance file; generated from the fields below when absent.
        #[serde(default)]
        instance: Option<PathBuf>,
        #[serde(default)]
        instance_seed: u64,
        #[serde(default = "ten")]
        n: usize,
        #[serde(default = "four")]
        m: usize,
        #[serde(default = "hundred")]
        n_xx: usize,
        #[serde(default = "fifty")]
        n_ax: usize,
        #[serde(default)]
        noise: f64,
        #[serde(default)]
        box_radius: Option<f64>,
    },
    Quadratic {
        dim: usize,
        #[serde(default)]
        box_radius: Option<f64>,
    },
    Abs,
    Constant {
        dim: usize,
        value: f64,
    },
    Linear {
        coefficients: Vec<f64>,
    },
    WorkedExample,
}

fn ten() -> usize {
    10
}
fn four() -> usize {
    4
}
fn hundred() -> usize {
    100
}
fn fifty() -> usize {
    50
}

/// Starting point: explicit, or uniform in `scale * [-0.5, 0.5]^d` from `seed`.
/// The same point is used for every run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitSpec {
    pub point: Option<Vec<f64>>,
    pub seed: u64,
    pub scale: f64,
}

impl Default for InitSpec {
    fn default() -> Self {
        Self {
            point: None,
            seed: 2024,
            scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothingSpec {
    pub delta: f64,
    #[serde(default = "one")]
    pub c: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    pub name: Algorithm,
    /// Constant stepsize (required for gf/vrgf; overrides the theory
    /// stepsize of the RS methods).
    #[serde(default)]
    pub stepsize: Option<f64>,
    /// Multiplier on the theory stepsize.
    #[serde(default)]
    pub step_scale: Option<f64>,
    /// Fixed RS-NGF batch.
    #[serde(default)]
    pub batch: Option<u64>,
    /// Fixed SPIDER refresh period `q`.
    #[serde(default)]
    pub period: Option<u64>,
    /// Fixed SPIDER small batch `b`.
    #[serde(default)]
    pub small_batch: Option<u64>,
    /// Fixed SPIDER refresh batch `B`; defaults to `b q`.
    #[serde(default)]
    pub big_batch: Option<u64>,
    /// `Delta`; defaults to `f(x_1) - lower_bound_hint`.
    #[serde(default)]
    pub delta_gap: Option<f64>,
    #[serde(default)]
    pub lower_bound_hint: f64,
    /// Theory horizon `T`; derived from the oracle budget when absent.
    #[serde(default)]
    pub iterations: Option<u64>,
    #[serde(default = "default_p")]
    pub failure_prob: f64,
    #[serde(default = "default_eps")]
    pub epsilon: f64,
}

fn default_p() -> f64 {
    0.1
}

fn default_eps() -> f64 {
    0.1
}

impl AlgorithmSpec {
    pub fn new(name: Algorithm) -> Self {
        Self {
            name,
            stepsize: None,
            step_scale: None,
            batch: None,
            period: None,
            small_batch: None,
            big_batch: None,
            delta_gap: None,
            lower_bound_hint: 0.0,
            iterations: None,
            failure_prob: default_p(),
            epsilon: default_eps(),
        }
    }

    fn step_rule(&self) -> StepRule {
        match self.stepsize {
            Some(eta) => StepRule::Constant(eta),
            None => StepRule::Theory {
                scale: self.step_scale.unwrap_or(1.0),
            },
        }
    }

    fn spider_rule(&self) -> Result<SpiderRule> {
        match (self.period, self.small_batch, self.big_batch) {
            (None, None, None) => Ok(SpiderRule::Theory),
            (Some(period), Some(small), big) => Ok(SpiderRule::Fixed {
                period,
                small,
                big: big.unwrap_or(small * period),
            }),
            _ => Err(Error::Config(
                "fixed SPIDER schedule needs both `period` and `small_batch`".into(),
            )),
        }
    }

    /// Average oracle cost of one iteration when it is known up front.
    fn cost_per_iteration(&self) -> Option<f64> {
        match self.name {
            Algorithm::RsGf | Algorithm::Gf => Some(2.0),
            Algorithm::RsNgf => self.batch.map(|b| 2.0 * b as f64),
            Algorithm::RsNvrgf | Algorithm::Vrgf => match self.spider_rule() {
                Ok(SpiderRule::Fixed { period, small, big }) => {
                    let q = period as f64;
                    Some((2.0 * big as f64 + 4.0 * small as f64 * (q - 1.0)) / q)
                }
                _ => None,
            },
        }
    }
}

/// A config turned into runnable pieces.
pub struct Prepared {
    pub problem: Problem,
    pub instance: Option<LocalizationInstance>,
    pub x0: Vec<f64>,
    pub solver: Solver,
    /// `Delta` actually used (explicit or derived from `f(x_1)`).
    pub delta_gap: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_toml(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Load a TOML config, or the `config` entry of a run manifest
    /// (`.json`). Relative instance paths are resolved against the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = if path.extension().is_some_and(|e| e == "json") {
            let v: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
            let c = v
                .get("config")
                .ok_or_else(|| Error::Config("manifest has no `config` entry".into()))?;
            serde_json::from_value(c.clone()).map_err(|e| Error::Config(e.to_string()))?
        } else {
            Self::from_toml(&text)?
        };
        if let ProblemSpec::Localization {
            instance: Some(p), ..
        } = &mut cfg.problem
        {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.seeds.is_empty() {
            return bad("`seeds` must not be empty".into());
        }
        if self.checkpoints < 2 {
            return bad("`checkpoints` must be >= 2".into());
        }
        if self.options.oracle_budget == Some(0) {
            return bad("`oracle_budget` must be > 0".into());
        }
        if self.options.b_eval == 0 {
            return bad("`b_eval` must be >= 1".into());
        }
        if self.options.oracle_budget.is_none()
            && self.options.max_iterations.is_none()
            && self.algorithm.iterations.is_none()
        {
            return bad("set `options.oracle_budget`, `options.max_iterations` or `algorithm.iterations`".into());
        }
        if let ProblemSpec::Localization {
            instance: Some(p), ..
        } = &self.problem
        {
            if !p.exists() {
                return bad(format!("instance file {} does not exist", p.display()));
            }
        }
        let a = &self.algorithm;
        if matches!(a.name, Algorithm::Gf | Algorithm::Vrgf) && a.stepsize.is_none() {
            return bad(format!("{} needs `algorithm.stepsize`", a.name));
        }
        if a.stepsize.is_some() && a.step_scale.is_some() {
            return bad("set at most one of `stepsize` and `step_scale`".into());
        }
        if a.name == Algorithm::Vrgf && a.spider_rule()? == SpiderRule::Theory {
            return bad("vrgf needs `period` and `small_batch`".into());
        }
        a.spider_rule()?;
        SmoothingConfig::with_constant(self.smoothing.delta, 1, self.smoothing.c)
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// Build the problem instance (with fresh counters), the start point and
    /// the solver.
    pub fn prepare(&self) -> Result<Prepared> {
        self.validate()?;
        let (problem, instance) = self.build_problem()?;
        let dim = problem.dim();
        let x0 = match &self.init.point {
            Some(p) => {
                if p.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: p.len(),
                    });
                }
                p.clone()
            }
            None => initial_point(dim, self.init.scale, self.init.seed),
        };
        let smoothing = SmoothingConfig::with_constant(self.smoothing.delta, dim, self.smoothing.c)?;
        let a = &self.algorithm;
        let mut options = self.options.clone();
        if options.max_iterations.is_none() {
            options.max_iterations = a.iterations;
        }

        let step = a.step_rule();
        let batch = a.batch.map_or(BatchRule::Theory, BatchRule::Fixed);
        let spider = a.spider_rule()?;
        let mut solver = Solver::new(a.name, smoothing)
            .with_step(step)
            .with_batch(batch)
            .with_spider(spider)
            .with_options(options.clone());

        let needs_theory = matches!(step, StepRule::Theory { .. })
            || (a.name == Algorithm::RsNgf && batch == BatchRule::Theory)
            || (a.name == Algorithm::RsNvrgf && spider == SpiderRule::Theory);
        let mut delta_gap = None;
        if needs_theory {
            let gap = match a.delta_gap {
                Some(g) => g,
                None => {
                    // One measurement-tallied evaluation at x_1; the counters
                    // are reset below so runs start from zero.
                    let f1 = problem.eval(&x0, Tally::Measurement)?;
                    f1 - a.lower_bound_hint
                }
            };
            let horizon = match (a.iterations, options.max_iterations, options.oracle_budget) {
                (Some(t), _, _) | (None, Some(t), _) => t,
                (None, None, Some(budget)) => {
                    let per = a.cost_per_iteration().unwrap_or(2.0);
                    ((budget as f64 / per).floor() as u64).max(1)
                }
                (None, None, None) => unreachable!("validated above"),
            };
            let params = TheoryParams::new(gap, horizon, a.failure_prob, a.epsilon)
                .map_err(|e| Error::Config(format!("theory parameters: {e}")))?;
            solver = solver.with_theory(params);
            delta_gap = Some(gap);
        }
        problem.reset_counters();
        Ok(Prepared {
            problem,
            instance,
            x0,
            solver,
            delta_gap,
        })
    }

    fn build_problem(&self) -> Result<(Problem, Option<LocalizationInstance>)> {
        let project = |p: Problem, r: &Option<f64>| -> Result<Problem> {
            Ok(match r {
                Some(k) => p.with_projection(box_projection(*k)?),
                None => p,
            })
        };
        Ok(match &self.problem {
            ProblemSpec::Localization {
                loss,
                instance,
                instance_seed,
                n,
                m,
                n_xx,
                n_ax,
                noise,
                box_radius,
            } => {
                let inst = match instance {
                    Some(path) => {
                        let inst = LocalizationInstance::load(path)?;
                        if inst.r_kind != *loss {
                            return Err(Error::Config(format!(
                                "instance loss `{}` does not match configured `{}`",
                                inst.r_kind.name(),
                                loss.name()
                            )));
                        }
                        inst
                    }
                    None => generate_instance(&GenerateSpec {
                        n: *n,
                        m: *m,
                        n_xx: *n_xx,
                        n_ax: *n_ax,
                        r_kind: *loss,
                        seed: *instance_seed,
                        noise: *noise,
                    })?,
                };
                (project(localization_problem(&inst)?, box_radius)?, Some(inst))
            }
            ProblemSpec::Quadratic { dim, box_radius } => {
                (project(quadratic(*dim).problem, box_radius)?, None)
            }
            ProblemSpec::Abs => (abs_1d().problem, None),
            ProblemSpec::Constant { dim, value } => (constant(*dim, *value).problem, None),
            ProblemSpec::Linear { coefficients } => (linear(coefficients.clone()).problem, None),
            ProblemSpec::WorkedExample => (worked_example_1d(), None),
        })
    }

    /// Set a tunable scalar by name; used by grid search.
    pub fn set_param(&mut self, key: &str, value: f64) -> Result<()> {
        let as_int = |v: f64| -> Result<u64> {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as u64)
            } else {
                Err(Error::Config(format!("`{key}` needs a positive integer, got {v}")))
            }
        };
        let a = &mut self.algorithm;
        match key {
            "stepsize" => {
                a.stepsize = Some(value);
                a.step_scale = None;
            }
            "step_scale" => {
                a.step_scale = Some(value);
                a.stepsize = None;
            }
            "batch" => a.batch = Some(as_int(value)?),
            "period" => a.period = Some(as_int(value)?),
            "small_batch" => a.small_batch = Some(as_int(value)?),
            "big_batch" => a.big_batch = Some(as_int(value)?),
            "delta_gap" => a.delta_gap = Some(value),
            "epsilon" => a.epsilon = value,
            "delta" => self.smoothing.delta = value,
            _ => return Err(Error::Config(format!("unknown tunable `{key}`"))),
        }
        Ok(())
    }
}

/// Uniform in `scale * [-0.5, 0.5]^dim`; for localization problems this is
/// the same draw as [`random_initial_point`].
pub fn initial_point(dim: usize, scale: f64, seed: u64) -> Vec<f64> {
    if dim.is_multiple_of(2) {
        return random_initial_point(dim / 2, scale, seed);
    }
    let mut v = random_initial_point(dim.div_ceil(2), scale, seed);
    v.truncate(dim);
    v
}

/// Stream handle for ad-hoc measurements of a config (e.g. `measure`).
pub fn measurement_stream(seed: u64) -> RngStream {
    RngStream::new(seed, crate::algorithms::MEASUREMENT_STREAM)
}
