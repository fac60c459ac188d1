//! Uniform sphere/ball sampling and the two-point smoothing estimator.
//!
//! For `w` uniform on the unit sphere the single-sample estimate
//!
//! ```text
//! g(x, w) = d (f(x + delta w) - f(x - delta w)) / (2 delta) * w
//! ```
//!
//! is unbiased for the gradient of `f_delta(x) = E_{u ~ U(ball)} f(x + delta u)`.
//! Batches average independent samples. Draw `i` of a batch always comes from
//! `RngStream::draw_rng(i)`, so parallel and sequential evaluation agree
//! exactly and the same sample set can be replayed at another point.

use std::ops::Range;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{Exec, CHUNK};
use crate::growth::SmoothingConfig;
use crate::problems::{Problem, Tally};
use crate::rng::RngStream;
use crate::vecops;

/// Uniform point on the unit sphere in `R^d` (normalized Gaussian).
pub fn sample_sphere_with<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    if d == 1 {
        // Exact +-1; normalizing can round to 0.9999999999999999.
        return vec![if rng.random::<bool>() { 1.0 } else { -1.0 }];
    }
    loop {
        let mut w: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = vecops::norm(&w);
        if n > 0.0 && n.is_finite() {
            vecops::scale(1.0 / n, &mut w);
            return w;
        }
    }
}

/// Uniform point in the closed unit ball: a sphere direction scaled by `U^(1/d)`.
pub fn sample_ball_with<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    let mut w = sample_sphere_with(d, rng);
    // U in (0, 1]
    let u: f64 = 1.0 - rng.random::<f64>();
    vecops::scale(u.powf(1.0 / d as f64), &mut w);
    w
}

pub fn sample_sphere(d: usize, rng: &mut RngStream) -> Result<Vec<f64>> {
    if d == 0 {
        return Err(Error::invalid("sphere dimension must be >= 1"));
    }
    Ok(sample_sphere_with(d, &mut rng.next_rng()))
}

pub fn sample_ball(d: usize, rng: &mut RngStream) -> Result<Vec<f64>> {
    if d == 0 {
        return Err(Error::invalid("ball dimension must be >= 1"));
    }
    Ok(sample_ball_with(d, &mut rng.next_rng()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DifferenceScheme {
    /// `f(x + delta w) - f(x - delta w)` over `2 delta`; two calls per sample.
    #[default]
    Central,
    /// `f(x + delta w) - f(x)` over `delta`; one call per sample plus one per batch.
    Forward,
}

/// Output of a batched gradient estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub vector: Vec<f64>,
    pub batch_size: u64,
    pub oracle_calls: u64,
    /// Draw indices of the sample set within `stream`.
    pub samples: Range<u64>,
    pub stream: (u64, u64),
}

/// Large-batch estimate of `grad f_delta(x)` with standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceGradient {
    pub vector: Vec<f64>,
    pub coord_stderr: Vec<f64>,
    /// Largest coordinate standard error.
    pub stderr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueEstimate {
    pub mean: f64,
    pub stderr: f64,
}

/// Configured gradient estimator.
#[derive(Debug, Clone, Copy)]
pub struct Estimator {
    pub cfg: SmoothingConfig,
    pub scheme: DifferenceScheme,
    pub exec: Exec,
    pub tally: Tally,
}

struct Moments {
    sum: Vec<f64>,
    sumsq: Vec<f64>,
}

impl Estimator {
    pub fn new(cfg: SmoothingConfig) -> Self {
        Self {
            cfg,
            scheme: DifferenceScheme::Central,
            exec: Exec::default(),
            tally: Tally::Oracle,
        }
    }

    pub fn with_scheme(mut self, scheme: DifferenceScheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn with_tally(mut self, tally: Tally) -> Self {
        self.tally = tally;
        self
    }

    fn check(&self, problem: &Problem, x: &[f64]) -> Result<()> {
        if problem.dim() != self.cfg.dim {
            return Err(Error::DimensionMismatch {
                expected: self.cfg.dim,
                got: problem.dim(),
            });
        }
        if x.len() != self.cfg.dim {
            return Err(Error::DimensionMismatch {
                expected: self.cfg.dim,
                got: x.len(),
            });
        }
        if !vecops::is_finite(x) {
            return Err(Error::invalid(format!("query point is not finite: {x:?}")));
        }
        Ok(())
    }

    /// Estimate over the next `batch` draws of `rng`.
    pub fn estimate(
        &self,
        problem: &Problem,
        x: &[f64],
        batch: u64,
        rng: &mut RngStream,
    ) -> Result<GradientEstimate> {
        if batch == 0 {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        let samples = rng.reserve(batch);
        self.estimate_on(problem, x, rng, samples)
    }

    /// Estimate over an explicit sample set; replaying the same set at
    /// another point gives the paired difference a SPIDER update needs.
    pub fn estimate_on(
        &self,
        problem: &Problem,
        x: &[f64],
        stream: &RngStream,
        samples: Range<u64>,
    ) -> Result<GradientEstimate> {
        self.check(problem, x)?;
        let batch = samples.end - samples.start;
        if batch == 0 {
            return Err(Error::invalid("empty sample set"));
        }
        let calls_before = self.calls(problem);
        let m = self.moments(problem, x, stream, samples.clone(), false)?;
        let mut vector = m.sum;
        for v in vector.iter_mut() {
            *v /= batch as f64;
        }
        Ok(GradientEstimate {
            vector,
            batch_size: batch,
            oracle_calls: self.calls(problem) - calls_before,
            samples,
            stream: (stream.seed, stream.stream_id),
        })
    }

    fn calls(&self, problem: &Problem) -> u64 {
        match self.tally {
            Tally::Oracle => problem.oracle_calls(),
            Tally::Measurement => problem.measurement_calls(),
        }
    }

    /// The individual single-sample estimates of a sample set, in draw order.
    pub fn single_samples(
        &self,
        problem: &Problem,
        x: &[f64],
        stream: &RngStream,
        samples: Range<u64>,
    ) -> Result<Vec<Vec<f64>>> {
        self.check(problem, x)?;
        let base = self.base_value(problem, x)?;
        let mut out = Vec::with_capacity((samples.end - samples.start) as usize);
        for chunk in chunks(samples) {
            for item in self.exec.map_range(chunk, |i| self.sample(problem, x, stream, i, base)) {
                let (coef, w) = item?;
                out.push(w.iter().map(|wk| coef * wk).collect());
            }
        }
        Ok(out)
    }

    fn base_value(&self, problem: &Problem, x: &[f64]) -> Result<f64> {
        match self.scheme {
            DifferenceScheme::Central => Ok(0.0),
            DifferenceScheme::Forward => problem.eval(x, self.tally),
        }
    }

    /// Scalar coefficient and direction of draw `index`.
    fn sample(
        &self,
        problem: &Problem,
        x: &[f64],
        stream: &RngStream,
        index: u64,
        base: f64,
    ) -> Result<(f64, Vec<f64>)> {
        let d = self.cfg.dim;
        let delta = self.cfg.delta;
        let w = sample_sphere_with(d, &mut stream.draw_rng(index));
        let shifted = |sign: f64| -> Vec<f64> {
            x.iter().zip(&w).map(|(xi, wi)| xi + sign * delta * wi).collect()
        };
        let plus = problem.eval(&shifted(1.0), self.tally)?;
        let coef = match self.scheme {
            DifferenceScheme::Central => {
                let minus = problem.eval(&shifted(-1.0), self.tally)?;
                d as f64 * (plus - minus) / (2.0 * delta)
            }
            DifferenceScheme::Forward => d as f64 * (plus - base) / delta,
        };
        Ok((coef, w))
    }

    fn moments(
        &self,
        problem: &Problem,
        x: &[f64],
        stream: &RngStream,
        samples: Range<u64>,
        second: bool,
    ) -> Result<Moments> {
        let d = self.cfg.dim;
        let base = self.base_value(problem, x)?;
        let mut m = Moments {
            sum: vec![0.0; d],
            sumsq: if second { vec![0.0; d] } else { Vec::new() },
        };
        for chunk in chunks(samples) {
            for item in self.exec.map_range(chunk, |i| self.sample(problem, x, stream, i, base)) {
                let (coef, w) = item?;
                for (k, wk) in w.iter().enumerate() {
                    let v = coef * wk;
                    m.sum[k] += v;
                    if second {
                        m.sumsq[k] += v * v;
                    }
                }
            }
        }
        Ok(m)
    }

    /// Estimate with per-coordinate standard errors over the next `n` draws.
    pub fn reference(
        &self,
        problem: &Problem,
        x: &[f64],
        n: u64,
        rng: &mut RngStream,
    ) -> Result<ReferenceGradient> {
        if n < 2 {
            return Err(Error::invalid("reference gradient needs at least two samples"));
        }
        self.check(problem, x)?;
        let samples = rng.reserve(n);
        let m = self.moments(problem, x, rng, samples, true)?;
        let nf = n as f64;
        let vector: Vec<f64> = m.sum.iter().map(|s| s / nf).collect();
        let coord_stderr: Vec<f64> = m
            .sumsq
            .iter()
            .zip(&vector)
            .map(|(sq, mean)| {
                let var = ((sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
                (var / nf).sqrt()
            })
            .collect();
        let stderr = coord_stderr.iter().copied().fold(0.0, f64::max);
        Ok(ReferenceGradient {
            vector,
            coord_stderr,
            stderr,
        })
    }
}

fn chunks(samples: Range<u64>) -> impl Iterator<Item = Range<u64>> {
    let (start, end) = (samples.start, samples.end);
    (start..end)
        .step_by(CHUNK)
        .map(move |s| s..(s + CHUNK as u64).min(end))
}

/// Central-difference estimate `g(x, S_B)` over the next `batch` draws,
/// charged to the oracle counter.
pub fn grad_estimate(
    problem: &Problem,
    x: &[f64],
    cfg: &SmoothingConfig,
    batch: u64,
    rng: &mut RngStream,
) -> Result<GradientEstimate> {
    Estimator::new(*cfg).estimate(problem, x, batch, rng)
}

/// Monte Carlo mean of `f(x + delta u)`, `u` uniform in the unit ball,
/// charged to the measurement counter.
pub fn smoothed_value_estimate(
    problem: &Problem,
    x: &[f64],
    cfg: &SmoothingConfig,
    n: u64,
    rng: &mut RngStream,
) -> Result<ValueEstimate> {
    smoothed_value_estimate_with(problem, x, cfg, n, rng, Exec::default())
}

pub fn smoothed_value_estimate_with(
    problem: &Problem,
    x: &[f64],
    cfg: &SmoothingConfig,
    n: u64,
    rng: &mut RngStream,
    exec: Exec,
) -> Result<ValueEstimate> {
    if n < 2 {
        return Err(Error::invalid("value estimate needs at least two samples"));
    }
    if x.len() != cfg.dim {
        return Err(Error::DimensionMismatch {
            expected: cfg.dim,
            got: x.len(),
        });
    }
    let samples = rng.reserve(n);
    let stream = rng.clone();
    let mut values = Vec::with_capacity(n as usize);
    for chunk in chunks(samples) {
        for v in exec.map_range(chunk, |i| {
            let u = sample_ball_with(cfg.dim, &mut stream.draw_rng(i));
            let y: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a + cfg.delta * b).collect();
            problem.eval(&y, Tally::Measurement)
        }) {
            values.push(v?);
        }
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    Ok(ValueEstimate {
        mean,
        stderr: (var / nf).sqrt(),
    })
}

/// Large-batch central-difference estimate of `grad f_delta(x)` with
/// standard errors, charged to the measurement counter.
pub fn smoothed_grad_reference(
    problem: &Problem,
    x: &[f64],
    cfg: &SmoothingConfig,
    n: u64,
    rng: &mut RngStream,
) -> Result<ReferenceGradient> {
    Estimator::new(*cfg)
        .with_tally(Tally::Measurement)
        .reference(problem, x, n, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{constant, linear, quadratic};

    #[test]
    fn sphere_zero_dim_rejected() {
        let mut rng = RngStream::new(0, 0);
        assert!(sample_sphere(0, &mut rng).is_err());
        assert!(sample_ball(0, &mut rng).is_err());
    }

    #[test]
    fn sphere_points_have_unit_norm() {
        let mut rng = RngStream::new(1, 0);
        for d in [1, 2, 3, 7, 50] {
            for _ in 0..2000 {
                let w = sample_sphere(d, &mut rng).unwrap();
                assert!((vecops::norm(&w) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sphere_in_one_dim_is_fair_sign() {
        let mut rng = RngStream::new(2, 0);
        let n = 100_000;
        let mut plus = 0;
        for _ in 0..n {
            let w = sample_sphere(1, &mut rng).unwrap();
            assert!(w[0] == 1.0 || w[0] == -1.0);
            if w[0] > 0.0 {
                plus += 1;
            }
        }
        let freq = plus as f64 / n as f64;
        assert!((freq - 0.5).abs() < 0.01, "{freq}");
    }

    #[test]
    fn sphere_coordinates_are_centered() {
        let mut rng = RngStream::new(3, 0);
        let n = 1_000_000;
        let mut mean = [0.0; 3];
        for _ in 0..n {
            let w = sample_sphere(3, &mut rng).unwrap();
            for k in 0..3 {
                mean[k] += w[k] / n as f64;
            }
        }
        for m in mean {
            assert!(m.abs() <= 0.003, "{m}");
        }
    }

    #[test]
    fn ball_radius_moments() {
        let mut rng = RngStream::new(4, 0);
        let n = 100_000;
        let mut abs_mean = 0.0;
        let mut r2_mean = 0.0;
        for _ in 0..n {
            let u = sample_ball(1, &mut rng).unwrap();
            assert!(u[0].abs() <= 1.0);
            abs_mean += u[0].abs() / n as f64;
            let v = sample_ball(2, &mut rng).unwrap();
            assert!(vecops::norm(&v) <= 1.0);
            r2_mean += vecops::norm(&v) / n as f64;
        }
        assert!((abs_mean - 0.5).abs() < 0.01, "{abs_mean}");
        assert!((r2_mean - 2.0 / 3.0).abs() < 0.01, "{r2_mean}");
    }

    #[test]
    fn constant_gives_zero_estimate() {
        let ap = constant(4, 3.0);
        let cfg = SmoothingConfig::new(0.3, 4).unwrap();
        let mut rng = RngStream::new(0, 0);
        let g = grad_estimate(&ap.problem, &[1.0, 2.0, 3.0, 4.0], &cfg, 50, &mut rng).unwrap();
        assert!(g.vector.iter().all(|&v| v == 0.0));
        assert_eq!(g.oracle_calls, 100);
        assert_eq!(g.batch_size, 50);
        assert_eq!(ap.problem.oracle_calls(), 100);
    }

    #[test]
    fn linear_single_sample_by_hand() {
        // the draw is fixed by the stream, so evaluate with explicit directions
        let ap = linear(vec![1.0, 0.0]);
        let delta = 0.37;
        let d = 2.0;
        for (w, expected) in [([1.0, 0.0], [2.0, 0.0]), ([0.0, 1.0], [0.0, 0.0])] {
            let plus = ap.problem.eval(&[delta * w[0], delta * w[1]], Tally::Oracle).unwrap();
            let minus = ap.problem.eval(&[-delta * w[0], -delta * w[1]], Tally::Oracle).unwrap();
            let coef = d * (plus - minus) / (2.0 * delta);
            assert!((coef * w[0] - expected[0]).abs() < 1e-12);
            assert!((coef * w[1] - expected[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn batch_equals_mean_of_singles() {
        let ap = quadratic(5);
        let cfg = SmoothingConfig::new(0.05, 5).unwrap();
        let x = [0.3, -0.1, 0.8, 0.0, 1.2];
        let stream = RngStream::new(11, 2);
        let est = Estimator::new(cfg);
        let batch = est.estimate_on(&ap.problem, &x, &stream, 100..10_100).unwrap();
        let singles = est.single_samples(&ap.problem, &x, &stream, 100..10_100).unwrap();
        let mut sum = [0.0; 5];
        for s in &singles {
            for k in 0..5 {
                sum[k] += s[k];
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / singles.len() as f64).collect();
        assert_eq!(batch.vector, mean);
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let ap = quadratic(3);
        let cfg = SmoothingConfig::new(0.1, 3).unwrap();
        let stream = RngStream::new(5, 0);
        let seq = Estimator::new(cfg).with_exec(Exec::Sequential);
        let par = Estimator::new(cfg).with_exec(Exec::Parallel);
        let a = seq.estimate_on(&ap.problem, &[1.0, 2.0, 3.0], &stream, 0..20_000).unwrap();
        let b = par.estimate_on(&ap.problem, &[1.0, 2.0, 3.0], &stream, 0..20_000).unwrap();
        assert_eq!(a.vector, b.vector);
    }

    #[test]
    fn forward_scheme_counts_base_call() {
        let ap = linear(vec![1.0, -1.0]);
        let cfg = SmoothingConfig::new(0.1, 2).unwrap();
        let mut rng = RngStream::new(0, 0);
        let est = Estimator::new(cfg).with_scheme(DifferenceScheme::Forward);
        let g = est.estimate(&ap.problem, &[0.0, 0.0], 10, &mut rng).unwrap();
        assert_eq!(g.oracle_calls, 11);
    }

    #[test]
    fn non_finite_objective_carries_point() {
        let p = Problem::new("boom", 1, |x: &[f64]| if x[0] > 0.0 { f64::INFINITY } else { 0.0 });
        let cfg = SmoothingConfig::new(1.0, 1).unwrap();
        let mut rng = RngStream::new(0, 0);
        match grad_estimate(&p, &[0.5], &cfg, 4, &mut rng) {
            Err(Error::NonFiniteObjective { point, .. }) => assert!(point[0] > 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn value_estimate_constant_and_shifted_abs() {
        let ap = constant(2, 7.0);
        let cfg = SmoothingConfig::new(0.5, 2).unwrap();
        let mut rng = RngStream::new(0, 0);
        let v = smoothed_value_estimate(&ap.problem, &[0.0, 0.0], &cfg, 1000, &mut rng).unwrap();
        assert_eq!(v.mean, 7.0);
        assert_eq!(v.stderr, 0.0);
        assert_eq!(ap.problem.measurement_calls(), 1000);
        assert_eq!(ap.problem.oracle_calls(), 0);

        let abs = crate::problems::abs_1d();
        let cfg = SmoothingConfig::new(1.0, 1).unwrap();
        let v = smoothed_value_estimate(&abs.problem, &[2.0], &cfg, 100_000, &mut rng).unwrap();
        assert!((v.mean - 2.0).abs() <= 5.0 * v.stderr + 1e-12, "{v:?}");
        assert!(smoothed_value_estimate(&abs.problem, &[2.0], &cfg, 1, &mut rng).is_err());
    }

    #[test]
    fn reference_of_constant_is_exact_zero() {
        let ap = constant(3, 1.0);
        let cfg = SmoothingConfig::new(0.1, 3).unwrap();
        let mut rng = RngStream::new(0, 0);
        let r = smoothed_grad_reference(&ap.problem, &[0.0; 3], &cfg, 1000, &mut rng).unwrap();
        assert_eq!(r.vector, vec![0.0; 3]);
        assert_eq!(r.stderr, 0.0);
        assert_eq!(ap.problem.measurement_calls(), 2000);
    }
}
