use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::growth::SmoothingConfig;
use crate::problems::{Problem, Tally};
use crate::rng::RngStream;
use crate::smoothing::Estimator;
use crate::vecops;

/// `|grad f_delta(x)|` estimated from `b_eval` samples and charged to the
/// measurement counter. The estimate is biased upward by its own noise
/// (roughly `sigma / sqrt(b_eval)`), so `b_eval` should be large.
pub fn measure_stationarity(
    problem: &Problem,
    x: &[f64],
    cfg: &SmoothingConfig,
    b_eval: u64,
    rng: &mut RngStream,
    exec: Exec,
) -> Result<f64> {
    if b_eval == 0 {
        return Err(Error::invalid("B_eval must be >= 1"));
    }
    let estimator = Estimator::new(*cfg).with_exec(exec).with_tally(Tally::Measurement);
    let g = estimator.estimate(problem, x, b_eval, rng)?;
    Ok(vecops::norm(&g.vector))
}
