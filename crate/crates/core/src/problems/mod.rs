//! Black-box objectives with oracle accounting.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::growth::GrowthModel;

mod analytic;
mod localization;

pub use analytic::{
    abs_1d, analytic_suite, constant, linear, quadratic, worked_example_1d, AnalyticProblem,
};
pub use localization::{
    generate_instance, localization_problem, random_initial_point, GenerateSpec,
    LocalizationInstance, Loss, Pair,
};

type Objective = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// Which counter an evaluation is charged to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tally {
    /// Evaluations an optimizer spends; the x-axis of every benchmark curve.
    Oracle,
    /// Evaluations spent on bookkeeping: logging f, stationarity surrogates.
    Measurement,
}

type ProjectFn = dyn Fn(&mut [f64]) + Send + Sync;

/// In-place map onto a feasible set, applied after every optimizer update.
#[derive(Clone)]
pub struct Projection(Arc<ProjectFn>);

impl Projection {
    pub fn new<P>(p: P) -> Self
    where
        P: Fn(&mut [f64]) + Send + Sync + 'static,
    {
        Self(Arc::new(p))
    }

    pub fn apply(&self, x: &mut [f64]) {
        (self.0)(x)
    }
}

impl fmt::Debug for Projection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Projection")
    }
}

/// Coordinatewise clamp onto `[-kappa, kappa]^d`.
pub fn box_projection(kappa: f64) -> Result<Projection> {
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(Error::invalid(format!("kappa must be > 0, got {kappa}")));
    }
    Ok(Projection::new(move |x: &mut [f64]| {
        for v in x.iter_mut() {
            *v = v.clamp(-kappa, kappa);
        }
    }))
}

/// A zeroth-order oracle: dimension, objective, optional growth model and
/// feasible-set projection, plus separate oracle and measurement counters.
///
/// Counters are atomic, so a problem can be evaluated from several threads.
pub struct Problem {
    name: String,
    dim: usize,
    objective: Arc<Objective>,
    model: Option<GrowthModel>,
    projection: Option<Projection>,
    oracle_calls: AtomicU64,
    measurement_calls: AtomicU64,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("model", &self.model)
            .field("oracle_calls", &self.oracle_calls())
            .field("measurement_calls", &self.measurement_calls())
            .finish()
    }
}

impl Problem {
    pub fn new<F>(name: impl Into<String>, dim: usize, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            dim,
            objective: Arc::new(f),
            model: None,
            projection: None,
            oracle_calls: AtomicU64::new(0),
            measurement_calls: AtomicU64::new(0),
        }
    }

    /// Average of `terms`, e.g. per-example losses of a remote classifier.
    pub fn finite_sum(
        name: impl Into<String>,
        dim: usize,
        terms: Vec<Arc<Objective>>,
    ) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::invalid("finite sum needs at least one term"));
        }
        let n = terms.len() as f64;
        Ok(Self::new(name, dim, move |x: &[f64]| {
            terms.iter().map(|t| t(x)).sum::<f64>() / n
        }))
    }

    pub fn with_model(mut self, model: GrowthModel) -> Self {
        self.model = Some(model);
        self
    }

    pub fn with_projection(mut self, projection: Projection) -> Self {
        self.projection = Some(projection);
        self
    }

    /// Same objective, model and projection with zeroed counters.
    pub fn fresh_instance(&self) -> Self {
        Self {
            name: self.name.clone(),
            dim: self.dim,
            objective: Arc::clone(&self.objective),
            model: self.model.clone(),
            projection: self.projection.clone(),
            oracle_calls: AtomicU64::new(0),
            measurement_calls: AtomicU64::new(0),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn model(&self) -> Option<&GrowthModel> {
        self.model.as_ref()
    }

    pub fn require_model(&self) -> Result<&GrowthModel> {
        self.model
            .as_ref()
            .ok_or_else(|| Error::MissingModel(self.name.clone()))
    }

    pub fn projection(&self) -> Option<&Projection> {
        self.projection.as_ref()
    }

    pub fn project(&self, x: &mut [f64]) {
        if let Some(p) = &self.projection {
            p.apply(x);
        }
    }

    /// Evaluates the objective and charges one call to `tally`.
    pub fn eval(&self, x: &[f64], tally: Tally) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let counter = match tally {
            Tally::Oracle => &self.oracle_calls,
            Tally::Measurement => &self.measurement_calls,
        };
        counter.fetch_add(1, Ordering::Relaxed);
        let value = (self.objective)(x);
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::NonFiniteObjective {
                point: x.to_vec(),
                value,
            })
        }
    }

    pub fn oracle_calls(&self) -> u64 {
        self.oracle_calls.load(Ordering::Relaxed)
    }

    pub fn measurement_calls(&self) -> u64 {
        self.measurement_calls.load(Ordering::Relaxed)
    }

    pub fn reset_counters(&self) {
        self.oracle_calls.store(0, Ordering::Relaxed);
        self.measurement_calls.store(0, Ordering::Relaxed);
    }
}
