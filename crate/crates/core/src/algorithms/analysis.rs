//! Quantities from the convergence analysis that are useful as runtime
//! diagnostics and in tests.

use crate::error::{Error, Result};
use crate::growth::{sigma, GrowthModel, SmoothingConfig};
use crate::vecops;

/// `<x, y>/|y| - (|x| - 2 |x - y|)`, which is nonnegative for every `x` and
/// every `y != 0`. Used when a normalized step follows an estimate `y` of the
/// true gradient `x`.
pub fn alignment_slack(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let ny = vecops::norm(y);
    if ny == 0.0 {
        return Err(Error::invalid("y must be nonzero"));
    }
    Ok(vecops::dot(x, y) / ny - vecops::norm(x) + 2.0 * vecops::dist(x, y))
}

/// One non-refresh SPIDER step: the previous iterate, the length of the move
/// away from it and the small batch used for the paired difference.
#[derive(Debug, Clone, Copy)]
pub struct SpiderStep<'a> {
    pub from: &'a [f64],
    pub length: f64,
    pub batch: u64,
}

/// Bound on `E |m_t - grad f_delta(x_t)|^2` after a refresh at `x_refresh`
/// with batch `big` followed by `steps`:
///
/// ```text
/// sigma(x_refresh)^2 / B + sum_s (eta_s^2 / b_s) d^2 (alpha(x_s) + beta(x_s, delta + eta_s))^2 / delta^2
/// ```
pub fn spider_variance_bound(
    model: &GrowthModel,
    cfg: &SmoothingConfig,
    x_refresh: &[f64],
    big: u64,
    steps: &[SpiderStep<'_>],
) -> Result<f64> {
    if big == 0 || steps.iter().any(|s| s.batch == 0) {
        return Err(Error::invalid("batch sizes must be >= 1"));
    }
    let sig = sigma(model, cfg, x_refresh)?;
    let d = cfg.dim as f64;
    let mut bound = sig * sig / big as f64;
    for s in steps {
        let g = model.ball_bound(s.from, cfg.delta + s.length)?;
        bound += s.length * s.length / s.batch as f64 * (d * g / cfg.delta).powi(2);
    }
    Ok(bound)
}
