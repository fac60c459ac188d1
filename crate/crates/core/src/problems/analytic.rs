use std::sync::Arc;

use super::Problem;
use crate::growth::GrowthModel;
use crate::vecops;

type ValueFn = dyn Fn(&[f64], f64) -> f64 + Send + Sync;
type GradFn = dyn Fn(&[f64], f64) -> Vec<f64> + Send + Sync;

/// A test objective together with closed forms of its ball smoothing,
/// where they exist. Both closures take `(x, delta)`.
pub struct AnalyticProblem {
    pub problem: Problem,
    pub smoothed_value: Option<Arc<ValueFn>>,
    pub smoothed_grad: Option<Arc<GradFn>>,
}

/// `f = c` on `R^dim`.
pub fn constant(dim: usize, c: f64) -> AnalyticProblem {
    let problem = Problem::new(format!("constant({c})"), dim, move |_: &[f64]| c)
        .with_model(GrowthModel::lipschitz(0.0).expect("zero is a valid constant"));
    AnalyticProblem {
        problem,
        smoothed_value: Some(Arc::new(move |_, _| c)),
        smoothed_grad: Some(Arc::new(move |x: &[f64], _| vec![0.0; x.len()])),
    }
}

/// `f = a^T x`.
pub fn linear(a: Vec<f64>) -> AnalyticProblem {
    let dim = a.len();
    let a_norm = vecops::norm(&a);
    let (a1, a2, a3) = (a.clone(), a.clone(), a);
    let problem = Problem::new("linear", dim, move |x: &[f64]| vecops::dot(&a1, x))
        .with_model(GrowthModel::lipschitz(a_norm).expect("norm is finite"));
    AnalyticProblem {
        problem,
        smoothed_value: Some(Arc::new(move |x, _| vecops::dot(&a2, x))),
        smoothed_grad: Some(Arc::new(move |_, _| a3.clone())),
    }
}

/// `f = |x|^2 / 2`. Ball smoothing adds `delta^2 d / (2 (d + 2))` and keeps
/// the gradient `x`.
pub fn quadratic(dim: usize) -> AnalyticProblem {
    let problem = Problem::new("quadratic", dim, |x: &[f64]| 0.5 * vecops::dot(x, x))
        .with_model(GrowthModel::smooth(vecops::norm, 1.0).expect("L = 1"));
    let d = dim as f64;
    AnalyticProblem {
        problem,
        smoothed_value: Some(Arc::new(move |x, delta| {
            0.5 * vecops::dot(x, x) + 0.5 * delta * delta * d / (d + 2.0)
        })),
        smoothed_grad: Some(Arc::new(|x, _| x.to_vec())),
    }
}

/// `f = |x|` on the real line; `f_delta(x) = |x|` for `|x| >= delta`,
/// `(x^2 + delta^2) / (2 delta)` otherwise.
pub fn abs_1d() -> AnalyticProblem {
    let problem = Problem::new("abs", 1, |x: &[f64]| x[0].abs())
        .with_model(GrowthModel::lipschitz(1.0).expect("L = 1"));
    AnalyticProblem {
        problem,
        smoothed_value: Some(Arc::new(|x, delta| {
            let t = x[0];
            if t.abs() >= delta {
                t.abs()
            } else {
                (t * t + delta * delta) / (2.0 * delta)
            }
        })),
        smoothed_grad: Some(Arc::new(|x, delta| {
            let t = x[0];
            vec![if t.abs() >= delta { t.signum() } else { t / delta }]
        })),
    }
}

/// The constant, linear, quadratic and absolute-value test objectives.
pub fn analytic_suite() -> Vec<AnalyticProblem> {
    vec![
        constant(3, 7.0),
        linear(vec![1.0, -2.0, 0.5]),
        quadratic(10),
        abs_1d(),
    ]
}

/// `f(x) = exp(|x|) - x^3` with `alpha(x) = exp(|x|) + 3 x^2`, a growth that
/// no polynomial dominates.
pub fn worked_example_1d() -> Problem {
    Problem::new("worked_example", 1, |x: &[f64]| {
        x[0].abs().exp() - x[0].powi(3)
    })
    .with_model(GrowthModel::radial(|t| t.exp() + 3.0 * t * t).with_dim(1))
}
