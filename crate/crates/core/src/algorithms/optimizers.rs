use std::ops::Range;

use super::schedule::{
    batch_rs_ngf, big_batch_rs_nvrgf, refresh_period, stepsize_rs_gf, stepsize_rs_ngf,
    stepsize_rs_nvrgf, TheoryParams,
};
use super::{Algorithm, BatchRule, SpiderRule, StepRule};
use crate::error::{Error, Result};
use crate::growth::{GrowthModel, SmoothingConfig};
use crate::problems::Problem;
use crate::rng::RngStream;
use crate::smoothing::{DifferenceScheme, Estimator};
use crate::vecops;

/// What the next iteration will do, computed at the current iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub stepsize: f64,
    pub batch: u64,
    pub refresh: bool,
    /// Oracle calls the iteration will consume.
    pub cost: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub iter: u64,
    pub stepsize: f64,
    pub batch: u64,
    pub refresh: bool,
    pub moved: bool,
    pub oracle_calls: u64,
    /// The estimate the step followed (`g` or the SPIDER `m_t`).
    pub direction: Vec<f64>,
    pub samples: Range<u64>,
}

/// One-step-at-a-time interface shared by every method.
pub trait Optimizer {
    fn algorithm(&self) -> Algorithm;
    fn point(&self) -> &[f64];
    /// Index `t` of the next iteration, starting at 1.
    fn iteration(&self) -> u64;
    fn plan(&mut self, problem: &Problem) -> Result<Plan>;
    fn execute(&mut self, problem: &Problem, plan: &Plan) -> Result<StepInfo>;
    /// Warnings accumulated since the last call.
    fn take_warnings(&mut self) -> Vec<String> {
        Vec::new()
    }
}

/// State common to all methods.
pub(crate) struct Core {
    pub algorithm: Algorithm,
    pub x: Vec<f64>,
    pub t: u64,
    pub cfg: SmoothingConfig,
    pub estimator: Estimator,
    pub rng: RngStream,
    pub model: Option<GrowthModel>,
    pub theory: Option<TheoryParams>,
    pub step: StepRule,
    pub max_batch: u64,
    pub warnings: Vec<String>,
}

impl Core {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        algorithm: Algorithm,
        x0: Vec<f64>,
        estimator: Estimator,
        rng: RngStream,
        model: Option<GrowthModel>,
        theory: Option<TheoryParams>,
        step: StepRule,
        max_batch: u64,
    ) -> Result<Self> {
        let cfg = estimator.cfg;
        if x0.len() != cfg.dim {
            return Err(Error::DimensionMismatch {
                expected: cfg.dim,
                got: x0.len(),
            });
        }
        if let StepRule::Constant(eta) = step {
            if !(eta.is_finite() && eta > 0.0) {
                return Err(Error::invalid(format!("stepsize must be > 0, got {eta}")));
            }
        }
        if let StepRule::Theory { scale } = step {
            if !(scale.is_finite() && scale > 0.0) {
                return Err(Error::invalid(format!("stepsize scale must be > 0, got {scale}")));
            }
        }
        Ok(Self {
            algorithm,
            x: x0,
            t: 1,
            cfg,
            estimator,
            rng,
            model,
            theory,
            step,
            max_batch,
            warnings: Vec::new(),
        })
    }

    fn theory(&self) -> Result<(&GrowthModel, &TheoryParams)> {
        let model = self
            .model
            .as_ref()
            .ok_or_else(|| Error::invalid("theory schedule needs a growth model"))?;
        let params = self
            .theory
            .as_ref()
            .ok_or_else(|| Error::invalid("theory schedule needs theory parameters"))?;
        Ok((model, params))
    }

    fn stepsize(
        &self,
        formula: fn(&GrowthModel, &SmoothingConfig, &TheoryParams, &[f64]) -> Result<super::Stepsize>,
    ) -> Result<f64> {
        match self.step {
            StepRule::Constant(eta) => Ok(eta),
            StepRule::Theory { scale } => {
                let (model, params) = self.theory()?;
                Ok(scale * formula(model, &self.cfg, params, &self.x)?.eta)
            }
        }
    }

    /// Oracle calls of one batched estimate.
    fn estimate_cost(&self, batch: u64) -> u64 {
        match self.estimator.scheme {
            DifferenceScheme::Central => 2 * batch,
            DifferenceScheme::Forward => batch + 1,
        }
    }

    fn note_cap(&mut self, what: &str, raw: f64) {
        self.warnings.push(format!(
            "iteration {}: {what} batch {raw:.3e} capped at {}",
            self.t, self.max_batch
        ));
    }

    fn advance(&mut self, problem: &Problem, direction: &[f64], eta: f64) {
        vecops::axpy(-eta, direction, &mut self.x);
        problem.project(&mut self.x);
    }
}

/// Plain single-sample descent `x <- x - eta g(x, w)` (RS-GF, or GF with a
/// constant stepsize).
pub struct GradientDescent {
    core: Core,
}

impl GradientDescent {
    pub(crate) fn new(core: Core) -> Self {
        Self { core }
    }
}

impl Optimizer for GradientDescent {
    fn algorithm(&self) -> Algorithm {
        self.core.algorithm
    }

    fn point(&self) -> &[f64] {
        &self.core.x
    }

    fn iteration(&self) -> u64 {
        self.core.t
    }

    fn plan(&mut self, _problem: &Problem) -> Result<Plan> {
        Ok(Plan {
            stepsize: self.core.stepsize(stepsize_rs_gf)?,
            batch: 1,
            refresh: false,
            cost: self.core.estimate_cost(1),
        })
    }

    fn execute(&mut self, problem: &Problem, plan: &Plan) -> Result<StepInfo> {
        let c = &mut self.core;
        let g = c.estimator.estimate(problem, &c.x, plan.batch, &mut c.rng)?;
        c.advance(problem, &g.vector, plan.stepsize);
        let info = StepInfo {
            iter: c.t,
            stepsize: plan.stepsize,
            batch: plan.batch,
            refresh: false,
            moved: true,
            oracle_calls: g.oracle_calls,
            direction: g.vector,
            samples: g.samples,
        };
        c.t += 1;
        Ok(info)
    }

    fn take_warnings(&mut self) -> Vec<String> {
        std::mem::take(&mut self.core.warnings)
    }
}

/// Batched normalized descent `x <- x - eta g / |g|` (RS-NGF). Steps with
/// `g = 0` are skipped.
pub struct NormalizedDescent {
    core: Core,
    batch: BatchRule,
}

impl NormalizedDescent {
    pub(crate) fn new(core: Core, batch: BatchRule) -> Result<Self> {
        if batch == BatchRule::Fixed(0) {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        Ok(Self { core, batch })
    }
}

impl Optimizer for NormalizedDescent {
    fn algorithm(&self) -> Algorithm {
        self.core.algorithm
    }

    fn point(&self) -> &[f64] {
        &self.core.x
    }

    fn iteration(&self) -> u64 {
        self.core.t
    }

    fn plan(&mut self, _problem: &Problem) -> Result<Plan> {
        let batch = match self.batch {
            BatchRule::Fixed(b) => b,
            BatchRule::Theory => {
                let (model, params) = self.core.theory()?;
                let b = batch_rs_ngf(model, &self.core.cfg, params, &self.core.x, self.core.max_batch)?;
                if b.capped {
                    self.core.note_cap("RS-NGF", b.raw);
                }
                b.value
            }
        };
        Ok(Plan {
            stepsize: self.core.stepsize(stepsize_rs_ngf)?,
            batch,
            refresh: false,
            cost: self.core.estimate_cost(batch),
        })
    }

    fn execute(&mut self, problem: &Problem, plan: &Plan) -> Result<StepInfo> {
        let c = &mut self.core;
        let g = c.estimator.estimate(problem, &c.x, plan.batch, &mut c.rng)?;
        let n = vecops::norm(&g.vector);
        let moved = n > 0.0;
        if moved {
            c.advance(problem, &g.vector, plan.stepsize / n);
        }
        let info = StepInfo {
            iter: c.t,
            stepsize: plan.stepsize,
            batch: plan.batch,
            refresh: false,
            moved,
            oracle_calls: g.oracle_calls,
            direction: g.vector,
            samples: g.samples,
        };
        c.t += 1;
        Ok(info)
    }

    fn take_warnings(&mut self) -> Vec<String> {
        std::mem::take(&mut self.core.warnings)
    }
}

/// SPIDER recursion with periodic big-batch refresh.
///
/// Iteration `t` refreshes when `t mod q == 1` (every iteration when
/// `q == 1`); otherwise it adds `g(x_t, S) - g(x_{t-1}, S)` for one shared
/// sample set `S`. `normalized` selects RS-NVRGF (`x - eta m / |m|`) or
/// VRGF (`x - eta m`).
pub struct Spider {
    core: Core,
    rule: SpiderRule,
    normalized: bool,
    refresh_moves: bool,
    m: Vec<f64>,
    prev: Vec<f64>,
}

impl Spider {
    pub(crate) fn new(
        core: Core,
        rule: SpiderRule,
        normalized: bool,
        refresh_moves: bool,
    ) -> Result<Self> {
        if let SpiderRule::Fixed {
            period,
            small,
            big,
        } = rule
        {
            if period == 0 || small == 0 || big == 0 {
                return Err(Error::invalid("q, b and B must all be >= 1"));
            }
        }
        let d = core.cfg.dim;
        let prev = core.x.clone();
        Ok(Self {
            core,
            rule,
            normalized,
            refresh_moves,
            m: vec![0.0; d],
            prev,
        })
    }

    fn period(&self) -> Result<u64> {
        match self.rule {
            SpiderRule::Fixed { period, .. } => Ok(period),
            SpiderRule::Theory => Ok(refresh_period(self.core.theory()?.1)),
        }
    }

    /// Current SPIDER estimate `m_t`.
    pub fn momentum(&self) -> &[f64] {
        &self.m
    }

    pub fn previous_point(&self) -> &[f64] {
        &self.prev
    }
}

impl Optimizer for Spider {
    fn algorithm(&self) -> Algorithm {
        self.core.algorithm
    }

    fn point(&self) -> &[f64] {
        &self.core.x
    }

    fn iteration(&self) -> u64 {
        self.core.t
    }

    fn plan(&mut self, _problem: &Problem) -> Result<Plan> {
        let period = self.period()?;
        let refresh = (self.core.t - 1).is_multiple_of(period);
        let batch = match (self.rule, refresh) {
            (SpiderRule::Fixed { big, .. }, true) => big,
            (SpiderRule::Fixed { small, .. }, false) => small,
            (SpiderRule::Theory, true) => {
                let (model, params) = self.core.theory()?;
                let b = big_batch_rs_nvrgf(model, &self.core.cfg, params, &self.core.x, self.core.max_batch)?;
                if b.capped {
                    self.core.note_cap("RS-NVRGF refresh", b.raw);
                }
                b.value
            }
            (SpiderRule::Theory, false) => {
                (72.0 * period as f64 * self.core.cfg.dim as f64).ceil() as u64
            }
        };
        let cost = if refresh {
            self.core.estimate_cost(batch)
        } else {
            2 * self.core.estimate_cost(batch)
        };
        Ok(Plan {
            stepsize: self.core.stepsize(stepsize_rs_nvrgf)?,
            batch,
            refresh,
            cost,
        })
    }

    fn execute(&mut self, problem: &Problem, plan: &Plan) -> Result<StepInfo> {
        let c = &mut self.core;
        let (samples, calls) = if plan.refresh {
            let g = c.estimator.estimate(problem, &c.x, plan.batch, &mut c.rng)?;
            self.m = g.vector;
            (g.samples, g.oracle_calls)
        } else {
            let samples = c.rng.reserve(plan.batch);
            let now = c.estimator.estimate_on(problem, &c.x, &c.rng, samples.clone())?;
            let before = c.estimator.estimate_on(problem, &self.prev, &c.rng, samples.clone())?;
            for ((m, a), b) in self.m.iter_mut().zip(&now.vector).zip(&before.vector) {
                *m += a - b;
            }
            (samples, now.oracle_calls + before.oracle_calls)
        };

        self.prev.clone_from(&c.x);
        let mut moved = !(plan.refresh && !self.refresh_moves);
        if moved {
            if self.normalized {
                let n = vecops::norm(&self.m);
                moved = n > 0.0;
                if moved {
                    c.advance(problem, &self.m, plan.stepsize / n);
                }
            } else {
                c.advance(problem, &self.m, plan.stepsize);
            }
        }
        let info = StepInfo {
            iter: c.t,
            stepsize: plan.stepsize,
            batch: plan.batch,
            refresh: plan.refresh,
            moved,
            oracle_calls: calls,
            direction: self.m.clone(),
            samples,
        };
        c.t += 1;
        Ok(info)
    }

    fn take_warnings(&mut self) -> Vec<String> {
        std::mem::take(&mut self.core.warnings)
    }
}
