//! Subgradient growth models and the constants derived from them.
//!
//! A [`GrowthModel`] is a pair of bound functions:
//!
//! - `alpha(x) >= sup { |z| : z in the Clarke subdifferential at x }`
//! - `beta(x, r) >= |alpha(x) - alpha(y)|` for every `y` with `|y - x| <= r`,
//!   nondecreasing in `r`.
//!
//! Models are plain callables so they compose exactly through [`sum`],
//! [`compose`] and [`smoothed`]. Nothing here proves that a model is valid
//! for a given objective; [`validate_model`] only tries to falsify it.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::problems::{Problem, Tally};
use crate::rng::RngStream;
use crate::smoothing::sample_sphere_with;
use crate::vecops;

type AlphaFn = dyn Fn(&[f64]) -> Result<f64> + Send + Sync;
type BetaFn = dyn Fn(&[f64], f64) -> Result<f64> + Send + Sync;

/// Floor applied to theory-formula denominators.
pub const DENOM_FLOOR: f64 = 1e-12;

#[derive(Clone)]
pub struct GrowthModel {
    alpha: Arc<AlphaFn>,
    beta: Arc<BetaFn>,
    /// Domain dimension when the model is tied to one.
    dim: Option<usize>,
    label: String,
}

impl fmt::Debug for GrowthModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GrowthModel")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .finish()
    }
}

fn checked(which: &'static str, x: &[f64], value: f64) -> Result<f64> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(Error::InvalidBound {
            which,
            point: x.to_vec(),
            value,
        })
    }
}

fn nonneg_param(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(Error::invalid(format!("{name} must be finite and >= 0, got {v}")))
    }
}

impl GrowthModel {
    /// Builds a model from raw bound functions.
    pub fn new<A, B>(label: impl Into<String>, alpha: A, beta: B) -> Self
    where
        A: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        B: Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
    {
        Self::from_fallible(
            label,
            move |x: &[f64]| Ok(alpha(x)),
            move |x: &[f64], r| Ok(beta(x, r)),
        )
    }

    fn from_fallible<A, B>(label: impl Into<String>, alpha: A, beta: B) -> Self
    where
        A: Fn(&[f64]) -> Result<f64> + Send + Sync + 'static,
        B: Fn(&[f64], f64) -> Result<f64> + Send + Sync + 'static,
    {
        Self {
            alpha: Arc::new(alpha),
            beta: Arc::new(beta),
            dim: None,
            label: label.into(),
        }
    }

    /// Ties the model to a domain dimension; queries of another size fail.
    pub fn with_dim(mut self, dim: usize) -> Self {
        self.dim = Some(dim);
        self
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        match self.dim {
            Some(d) if d != x.len() => Err(Error::DimensionMismatch {
                expected: d,
                got: x.len(),
            }),
            _ => Ok(()),
        }
    }

    pub fn alpha(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let v = (self.alpha)(x)?;
        checked("alpha", x, v)
    }

    pub fn beta(&self, x: &[f64], r: f64) -> Result<f64> {
        self.check_dim(x)?;
        if r.is_nan() || r < 0.0 {
            return Err(Error::invalid(format!("radius must be >= 0, got {r}")));
        }
        let v = (self.beta)(x, r)?;
        checked("beta", x, v)
    }

    /// `alpha(x) + beta(x, r)`, the bound on subgradient norms over `B_r(x)`.
    pub fn ball_bound(&self, x: &[f64], r: f64) -> Result<f64> {
        Ok(self.alpha(x)? + self.beta(x, r)?)
    }

    /// Model of an `L`-Lipschitz function: `alpha = L`, `beta = 0`.
    pub fn lipschitz(l: f64) -> Result<Self> {
        let l = nonneg_param("Lipschitz constant", l)?;
        Ok(Self::new(format!("lipschitz({l})"), move |_| l, |_, _| 0.0))
    }

    /// Model of a differentiable function whose gradient is `L`-Lipschitz:
    /// `alpha(x) = |grad f(x)|`, `beta(x, r) = L r`.
    pub fn smooth<G>(grad_norm: G, l: f64) -> Result<Self>
    where
        G: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        let l = nonneg_param("gradient Lipschitz constant", l)?;
        Ok(Self::from_fallible(
            format!("smooth(L={l})"),
            move |x: &[f64]| checked("grad_norm", x, grad_norm(x)),
            move |_: &[f64], r| Ok(l * r),
        ))
    }

    /// Model from a nondecreasing radial bound `gamma(|x|)` on subgradient
    /// norms: `alpha(x) = gamma(|x|)`, `beta(x, r) = gamma(|x|) + gamma(|x| + r)`.
    pub fn radial<G>(gamma: G) -> Self
    where
        G: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let gamma = Arc::new(gamma);
        let g2 = Arc::clone(&gamma);
        Self::new(
            "radial",
            move |x| gamma(vecops::norm(x)),
            move |x, r| {
                let t = vecops::norm(x);
                g2(t) + g2(t + r)
            },
        )
    }

    /// Tighter radial model for a `gamma` that is nondecreasing *and convex*
    /// on `[0, inf)`: `beta(x, r) = gamma(|x| + r) - gamma(|x|)`.
    ///
    /// Convexity makes the increment over `[t, t + r]` dominate the decrement
    /// over `[max(t - r, 0), t]`, so the one-sided difference suffices.
    pub fn radial_convex<G>(gamma: G) -> Self
    where
        G: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let gamma = Arc::new(gamma);
        let g2 = Arc::clone(&gamma);
        Self::new(
            "radial_convex",
            move |x| gamma(vecops::norm(x)),
            move |x, r| {
                let t = vecops::norm(x);
                (g2(t + r) - g2(t)).max(0.0)
            },
        )
    }

    /// Model of `w * f` for a constant `w >= 0`.
    pub fn scaled(&self, w: f64) -> Result<Self> {
        let w = nonneg_param("scale", w)?;
        let (a, b) = (self.clone(), self.clone());
        let mut out = Self::from_fallible(
            format!("{w}*({})", self.label),
            move |x: &[f64]| Ok(w * a.alpha(x)?),
            move |x: &[f64], r| Ok(w * b.beta(x, r)?),
        );
        out.dim = self.dim;
        Ok(out)
    }

    /// Model of a finite sum of functions, one model per summand.
    pub fn sum_all(models: Vec<GrowthModel>) -> Result<Self> {
        let dim = common_dim(&models)?;
        let label = models
            .iter()
            .map(|m| m.label.as_str())
            .collect::<Vec<_>>()
            .join(" + ");
        let models = Arc::new(models);
        let m2 = Arc::clone(&models);
        let mut out = Self::from_fallible(
            label,
            move |x: &[f64]| models.iter().map(|m| m.alpha(x)).sum(),
            move |x: &[f64], r| m2.iter().map(|m| m.beta(x, r)).sum(),
        );
        out.dim = dim;
        Ok(out)
    }
}

fn common_dim(models: &[GrowthModel]) -> Result<Option<usize>> {
    let mut dim = None;
    for m in models {
        match (dim, m.dim) {
            (Some(a), Some(b)) if a != b => {
                return Err(Error::DimensionMismatch {
                    expected: a,
                    got: b,
                })
            }
            (None, Some(b)) => dim = Some(b),
            _ => {}
        }
    }
    Ok(dim)
}

/// Model of `g + h`.
pub fn sum(g: &GrowthModel, h: &GrowthModel) -> Result<GrowthModel> {
    GrowthModel::sum_all(vec![g.clone(), h.clone()])
}

/// Model of `g(h(x))` from a model of `g` over `R^m`, a model of `h` over
/// `R^d`, and the map `h` itself.
///
/// `alpha_f(x) = alpha_h(x) alpha_g(h(x))` and
/// `beta_f(x, r) = (alpha_h(x) + beta_h(x, r)) beta_g(h(x), (alpha_h(x) + beta_h(x, r)) r)
///               + beta_h(x, r) alpha_g(h(x))`.
///
/// Each `alpha` or `beta` query evaluates `h` once.
pub fn compose<H>(outer: &GrowthModel, inner: &GrowthModel, inner_eval: H) -> GrowthModel
where
    H: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
{
    let h = Arc::new(inner_eval);
    let (g_a, h_a, eval_a) = (outer.clone(), inner.clone(), Arc::clone(&h));
    let (g_b, h_b, eval_b) = (outer.clone(), inner.clone(), h);
    let mut out = GrowthModel::from_fallible(
        format!("({}) o ({})", outer.label, inner.label),
        move |x: &[f64]| {
            let hx = eval_a(x);
            Ok(h_a.alpha(x)? * g_a.alpha(&hx)?)
        },
        move |x: &[f64], r| {
            let hx = eval_b(x);
            let ah = h_b.alpha(x)?;
            let bh = h_b.beta(x, r)?;
            let reach = ah + bh;
            Ok(reach * g_b.beta(&hx, reach * r)? + bh * g_b.alpha(&hx)?)
        },
    );
    out.dim = inner.dim;
    out
}

/// Growth model of the smoothed surrogate `f_delta`:
/// `alpha~(x) = alpha(x) + beta(x, delta)`, `beta~(x, r) = beta(x, r + delta)`.
pub fn smoothed(model: &GrowthModel, cfg: &SmoothingConfig) -> GrowthModel {
    smoothed_by(model, cfg.delta)
}

fn smoothed_by(model: &GrowthModel, delta: f64) -> GrowthModel {
    let (a, b) = (model.clone(), model.clone());
    let mut out = GrowthModel::from_fallible(
        format!("smoothed({}, {delta})", model.label),
        move |x: &[f64]| Ok(a.alpha(x)? + a.beta(x, delta)?),
        move |x: &[f64], r| b.beta(x, r + delta),
    );
    out.dim = model.dim;
    out
}

/// Smoothing radius, ambient dimension and the constant `c` of the local
/// smoothness modulus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingConfig {
    pub delta: f64,
    pub dim: usize,
    pub c: f64,
}

impl SmoothingConfig {
    pub fn new(delta: f64, dim: usize) -> Result<Self> {
        Self::with_constant(delta, dim, 1.0)
    }

    pub fn with_constant(delta: f64, dim: usize, c: f64) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::invalid(format!("delta must be > 0, got {delta}")));
        }
        if dim == 0 {
            return Err(Error::invalid("dimension must be >= 1"));
        }
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::invalid(format!("c must be > 0, got {c}")));
        }
        Ok(Self { delta, dim, c })
    }

    fn sqrt_dim(&self) -> f64 {
        (self.dim as f64).sqrt()
    }
}

/// Local gradient-Lipschitz modulus of `f_delta` around `x` for moves of
/// length `r`: `c sqrt(d) (2 alpha(x) + beta(x, delta) + beta(x, r + delta)) / (2 delta)`.
pub fn local_smoothness(
    model: &GrowthModel,
    cfg: &SmoothingConfig,
    x: &[f64],
    r: f64,
) -> Result<f64> {
    let a = model.alpha(x)?;
    let b_delta = model.beta(x, cfg.delta)?;
    let b_far = model.beta(x, r + cfg.delta)?;
    Ok(cfg.c * cfg.sqrt_dim() * (2.0 * a + b_delta + b_far) / (2.0 * cfg.delta))
}

/// Sub-Gaussian scale of the single-sample estimator:
/// `(alpha(x) + beta(x, 2 delta)) sqrt(16 sqrt(2 pi) d)`.
pub fn sigma(model: &GrowthModel, cfg: &SmoothingConfig, x: &[f64]) -> Result<f64> {
    let bound = model.ball_bound(x, 2.0 * cfg.delta)?;
    Ok(bound * sigma_factor(cfg.dim))
}

pub(crate) fn sigma_factor(dim: usize) -> f64 {
    (16.0 * (2.0 * std::f64::consts::PI).sqrt() * dim as f64).sqrt()
}

/// Almost-sure norm bound of a single-sample estimate: `d (alpha(x) + beta(x, 3 delta))`.
pub fn estimator_bound(model: &GrowthModel, cfg: &SmoothingConfig, x: &[f64]) -> Result<f64> {
    Ok(cfg.dim as f64 * model.ball_bound(x, 3.0 * cfg.delta)?)
}

/// Sampling used by [`validate_model`].
#[derive(Debug, Clone)]
pub struct ValidationConfig {
    pub pairs: u64,
    /// Base points are `center + scale * N(0, I)`, pulled back into this radius.
    pub clip_radius: f64,
    pub scale: f64,
    pub center: Option<Vec<f64>>,
    /// Displacements have length `U(0, max_displacement]`.
    pub max_displacement: f64,
    /// Relative slack for floating-point rounding.
    pub rel_tol: f64,
    pub seed: u64,
    pub exec: Exec,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            pairs: 100_000,
            clip_radius: 10.0,
            scale: 1.0,
            center: None,
            max_displacement: 2.0,
            rel_tol: 1e-9,
            seed: 0,
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    /// `beta(x, r1) > beta(x, r2)` with `r1 <= r2`.
    BetaNotMonotone,
    /// `|f(x) - f(y)| > (alpha(x) + beta(x, |y - x|)) |y - x|`.
    ValueBound,
}

#[derive(Debug, Clone)]
pub struct Counterexample {
    pub kind: ViolationKind,
    pub index: u64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub radii: (f64, f64),
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub checked: u64,
    /// Pairs where the objective or a bound was not finite.
    pub skipped: u64,
    pub counterexample: Option<Counterexample>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.counterexample.is_none()
    }
}

enum PairOutcome {
    Ok,
    Skipped,
    Violation(Counterexample),
}

/// Tries to falsify `model` as a growth model of `problem` on random pairs.
///
/// Objective evaluations are charged to the measurement tally.
pub fn validate_model(
    model: &GrowthModel,
    problem: &Problem,
    cfg: &ValidationConfig,
) -> ValidationReport {
    let dim = problem.dim();
    let stream = RngStream::new(cfg.seed, 0x5641_4c49);
    let outcomes = cfg.exec.map_range(0..cfg.pairs, |i| {
        check_pair(model, problem, cfg, &stream, dim, i)
    });
    let mut report = ValidationReport {
        checked: 0,
        skipped: 0,
        counterexample: None,
    };
    for outcome in outcomes {
        match outcome {
            PairOutcome::Ok => report.checked += 1,
            PairOutcome::Skipped => report.skipped += 1,
            PairOutcome::Violation(c) => {
                report.checked += 1;
                if report.counterexample.is_none() {
                    report.counterexample = Some(c);
                }
            }
        }
    }
    report
}

fn check_pair(
    model: &GrowthModel,
    problem: &Problem,
    cfg: &ValidationConfig,
    stream: &RngStream,
    dim: usize,
    index: u64,
) -> PairOutcome {
    let mut rng = stream.draw_rng(index);
    let mut offset: Vec<f64> = (0..dim)
        .map(|_| cfg.scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let len = vecops::norm(&offset);
    if len > cfg.clip_radius {
        vecops::scale(cfg.clip_radius / len, &mut offset);
    }
    let x = match &cfg.center {
        Some(c) => c.iter().zip(&offset).map(|(a, b)| a + b).collect(),
        None => offset,
    };
    let dir = sample_sphere_with(dim, &mut rng);
    let mut radii = [
        cfg.max_displacement * (1.0 - rng.random::<f64>()),
        cfg.max_displacement * (1.0 - rng.random::<f64>()),
    ];
    radii.sort_by(f64::total_cmp);
    let rho = radii[1];
    let y: Vec<f64> = x.iter().zip(&dir).map(|(a, u)| a + rho * u).collect();
    let tol = |rhs: f64| rhs * (1.0 + cfg.rel_tol) + 1e-12;

    let (b1, b2) = match (model.beta(&x, radii[0]), model.beta(&x, radii[1])) {
        (Ok(b1), Ok(b2)) => (b1, b2),
        _ => return PairOutcome::Skipped,
    };
    if b1 > tol(b2) {
        return PairOutcome::Violation(Counterexample {
            kind: ViolationKind::BetaNotMonotone,
            index,
            x,
            y,
            radii: (radii[0], radii[1]),
            lhs: b1,
            rhs: b2,
        });
    }
    let (fx, fy, a) = match (
        problem.eval(&x, Tally::Measurement),
        problem.eval(&y, Tally::Measurement),
        model.alpha(&x),
    ) {
        (Ok(fx), Ok(fy), Ok(a)) => (fx, fy, a),
        _ => return PairOutcome::Skipped,
    };
    let lhs = (fx - fy).abs();
    let rhs = (a + b2) * rho;
    if lhs > tol(rhs) {
        return PairOutcome::Violation(Counterexample {
            kind: ViolationKind::ValueBound,
            index,
            x,
            y,
            radii: (radii[0], radii[1]),
            lhs,
            rhs,
        });
    }
    PairOutcome::Ok
}
