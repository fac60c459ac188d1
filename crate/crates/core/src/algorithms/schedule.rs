//! Theory-driven stepsizes and batch sizes.
//!
//! Every schedule has the form `eta_t = C_t / (ln(2T/p) sqrt(T))` where `C_t`
//! is a minimum of terms built from the growth model at the current iterate.
//! Denominators that can vanish are floored at [`DENOM_FLOOR`]; the `+ 1`
//! guards inside the terms are part of the formulas themselves.

use crate::error::{Error, Result};
use crate::growth::{local_smoothness, sigma, GrowthModel, SmoothingConfig, DENOM_FLOOR};

/// Default ceiling on any theory-prescribed batch.
pub const MAX_BATCH: u64 = 10_000_000;

/// Problem-level constants the schedules need.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryParams {
    /// Upper bound on `f_delta(x_1) - inf f_delta`.
    pub delta_gap: f64,
    /// Iteration budget `T`.
    pub iterations: u64,
    /// Failure probability `p`.
    pub failure_prob: f64,
    /// Target stationarity; sets the SPIDER refresh period.
    pub epsilon: f64,
}

impl TheoryParams {
    pub fn new(delta_gap: f64, iterations: u64, failure_prob: f64, epsilon: f64) -> Result<Self> {
        if !(delta_gap.is_finite() && delta_gap > 0.0) {
            return Err(Error::invalid(format!("Delta must be > 0, got {delta_gap}")));
        }
        if iterations == 0 {
            return Err(Error::invalid("T must be >= 1"));
        }
        if !(failure_prob > 0.0 && failure_prob < 1.0) {
            return Err(Error::invalid(format!("p must lie in (0, 1), got {failure_prob}")));
        }
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::invalid(format!("epsilon must be > 0, got {epsilon}")));
        }
        Ok(Self {
            delta_gap,
            iterations,
            failure_prob,
            epsilon,
        })
    }

    fn sqrt_t(&self) -> f64 {
        (self.iterations as f64).sqrt()
    }

    /// `ln(2T/p) sqrt(T)`
    pub fn horizon_factor(&self) -> f64 {
        (2.0 * self.iterations as f64 / self.failure_prob).ln() * self.sqrt_t()
    }
}

/// A stepsize together with the terms whose minimum produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Stepsize {
    pub terms: Vec<f64>,
    pub c_t: f64,
    pub eta: f64,
}

impl Stepsize {
    fn from_terms(terms: Vec<f64>, params: &TheoryParams) -> Self {
        let c_t = terms.iter().copied().fold(f64::INFINITY, f64::min);
        Self {
            eta: c_t / params.horizon_factor(),
            c_t,
            terms,
        }
    }
}

fn floor(v: f64) -> f64 {
    v.max(DENOM_FLOOR)
}

/// RS-GF stepsize. With `a = alpha(x)`, `b1 = beta(x, delta)`,
/// `b3 = beta(x, 3 delta)`:
///
/// ```text
/// C_t = min { Delta / (2 (d+1) (a + b3 + 1)^2),
///             (sqrt(6)/12) Delta / (sigma(x) (a + b1)),
///             1/(d (a + b3)) sqrt(Delta / l(x, Delta / (d (a + b3 + 1) sqrt(T)))) }
/// ```
pub fn stepsize_rs_gf(
    model: &GrowthModel,
    cfg: &SmoothingConfig,
    params: &TheoryParams,
    x: &[f64],
) -> Result<Stepsize> {
    let delta_gap = params.delta_gap;
    let d = cfg.dim as f64;
    let a = model.alpha(x)?;
    let b1 = model.beta(x, cfg.delta)?;
    let b3 = model.beta(x, 3.0 * cfg.delta)?;
    let sig = sigma(model, cfg, x)?;

    let t1 = delta_gap / (2.0 * (d + 1.0) * (a + b3 + 1.0).powi(2));
    let t2 = (6f64.sqrt() / 12.0) * delta_gap / floor(sig * (a + b1));
    let reach = delta_gap / (d * (a + b3 + 1.0) * params.sqrt_t());
    let ell = local_smoothness(model, cfg, x, reach)?;
    let t3 = (1.0 / floor(d * (a + b3))) * (delta_gap / floor(ell)).sqrt();
    Ok(Stepsize::from_terms(vec![t1, t2, t3], params))
}

/// Reach `Delta / ((alpha + beta(x, delta) + 1) sqrt(T))` used by the
/// normalized schedules, along with `alpha + beta(x, delta) + 1`.
fn normalized_reach(
    model: &GrowthModel,
    cfg: &SmoothingConfig,
    params: &TheoryParams,
    x: &[f64],
) -> Result<(f64, f64)> {
    let guard = model.ball_bound(x, cfg.delta)? + 1.0;
    Ok((guard, params.delta_gap / (guard * params.sqrt_t())))
}

/// RS-NGF stepsize:
/// `C_t = min { Delta / (12 g), sqrt(Delta / (3 l)), 2 Delta / sqrt(l) }`
/// with `g = alpha + beta(x, delta) + 1` and `l = l(x, Delta / (g sqrt(T)))`.
pub fn stepsize_rs_ngf(
    model: &GrowthModel,
    cfg: &SmoothingConfig,
    params: &TheoryParams,
    x: &[f64],
) -> Result<Stepsize> {
    let delta_gap = params.delta_gap;
    let (guard, reach) = normalized_reach(model, cfg, params, x)?;
    let ell = floor(local_smoothness(model, cfg, x, reach)?);
    let terms = vec![
        delta_gap / (12.0 * guard),
        (delta_gap / (3.0 * ell)).sqrt(),
        2.0 * delta_gap / ell.sqrt(),
    ];
    Ok(Stepsize::from_terms(terms, params))
}

/// A batch size, the unrounded value and whether the cap was hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchSize {
    pub value: u64,
    pub raw: f64,
    pub capped: bool,
}

fn ceil_batch(raw: f64, max_batch: u64) -> BatchSize {
    let max_batch = max_batch.max(1);
    if raw.is_nan() || raw > max_batch as f64 {
        log::warn!("theory batch {raw:e} exceeds cap {max_batch}; capping");
        return BatchSize {
            value: max_batch,
            raw,
            capped: true,
        };
    }
    BatchSize {
        value: (raw.ceil() as u64).max(1),
        raw,
        capped: false,
    }
}

/// RS-NGF batch `B_t = ceil(T sigma(x)^2 / l(x, Delta / (g sqrt(T))))`, at least 1.
pub fn batch_rs_ngf(
    model: &GrowthModel,
    cfg: &SmoothingConfig,
    params: &TheoryParams,
    x: &[f64],
    max_batch: u64,
) -> Result<BatchSize> {
    let (_, reach) = normalized_reach(model, cfg, params, x)?;
    let ell = floor(local_smoothness(model, cfg, x, reach)?);
    let sig = sigma(model, cfg, x)?;
    Ok(ceil_batch(params.iterations as f64 * sig * sig / ell, max_batch))
}

/// RS-NVRGF stepsize, the four-term minimum
///
/// ```text
/// C_t = min { delta^(1/2) / d^(1/4),
///             Delta / (24 g),
///             Delta delta^(1/2) / (d^(1/4) (alpha + beta(x, delta + Delta / (sqrt(T) g)))),
///             sqrt(2 Delta / (3 l(x, Delta / (g sqrt(T))))) }
/// ```
pub fn stepsize_rs_nvrgf(
    model: &GrowthModel,
    cfg: &SmoothingConfig,
    params: &TheoryParams,
    x: &[f64],
) -> Result<Stepsize> {
    let delta_gap = params.delta_gap;
    let d_quarter = (cfg.dim as f64).powf(0.25);
    let sqrt_delta = cfg.delta.sqrt();
    let (guard, reach) = normalized_reach(model, cfg, params, x)?;
    let ell = floor(local_smoothness(model, cfg, x, reach)?);
    let wide = model.ball_bound(x, cfg.delta + reach)?;
    let terms = vec![
        sqrt_delta / d_quarter,
        delta_gap / (24.0 * guard),
        delta_gap * sqrt_delta / floor(d_quarter * wide),
        (2.0 * delta_gap / (3.0 * ell)).sqrt(),
    ];
    Ok(Stepsize::from_terms(terms, params))
}

/// Refresh period and batch sizes of the variance-reduced method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpiderBatches {
    /// Big batch used at refresh iterations.
    pub big: BatchSize,
    /// Small batch used for the paired differences.
    pub small: u64,
    pub period: u64,
}

/// `q = ceil(1/epsilon)`, `b = ceil(72 q d)` and the refresh batch
/// `B = ceil(72 sigma(x)^2 T delta / sqrt(d))` at the refresh point.
pub fn schedule_rs_nvrgf(
    model: &GrowthModel,
    cfg: &SmoothingConfig,
    params: &TheoryParams,
    x_refresh: &[f64],
    max_batch: u64,
) -> Result<SpiderBatches> {
    let period = refresh_period(params);
    let small = (72.0 * period as f64 * cfg.dim as f64).ceil() as u64;
    Ok(SpiderBatches {
        big: big_batch_rs_nvrgf(model, cfg, params, x_refresh, max_batch)?,
        small,
        period,
    })
}

pub fn refresh_period(params: &TheoryParams) -> u64 {
    ((1.0 / params.epsilon).ceil() as u64).max(1)
}

pub fn big_batch_rs_nvrgf(
    model: &GrowthModel,
    cfg: &SmoothingConfig,
    params: &TheoryParams,
    x_refresh: &[f64],
    max_batch: u64,
) -> Result<BatchSize> {
    let sig = sigma(model, cfg, x_refresh)?;
    let raw = 72.0 * sig * sig * params.iterations as f64 * cfg.delta / (cfg.dim as f64).sqrt();
    Ok(ceil_batch(raw, max_batch))
}
