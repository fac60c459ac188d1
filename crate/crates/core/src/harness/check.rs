//! Built-in property suite behind `smoothzo check`.
//!
//! Each check draws its own random inputs from fixed seeds and reports
//! pass/fail with a one-line detail. Sample counts are chosen so the whole
//! default suite finishes in seconds; the integration tests run the heavier
//! versions.

use serde::Serialize;

use crate::algorithms::alignment_slack;
use crate::error::{Error, Result};
use crate::growth::{
    estimator_bound, local_smoothness, sigma, smoothed, validate_model, GrowthModel,
    SmoothingConfig, ValidationConfig,
};
use crate::problems::{
    abs_1d, analytic_suite, generate_instance, localization_problem, quadratic, worked_example_1d,
    GenerateSpec, Loss, Problem, Tally,
};
use crate::rng::RngStream;
use crate::smoothing::{sample_ball_with, smoothed_value_estimate, Estimator};
use crate::vecops;
use rand::Rng;

pub const SUITES: [&str; 8] = [
    "default",
    "models",
    "estimator",
    "calculus",
    "analysis",
    "wrong-model",
    "empty",
    "all",
];

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub suite: String,
    pub results: Vec<CheckResult>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }
}

fn result(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> CheckResult {
    CheckResult {
        name: name.into(),
        passed,
        detail: detail.into(),
    }
}

/// Problems with declared models used across the checks: the analytic
/// suite, the worked example and the three localization variants.
pub fn model_suite() -> Result<Vec<Problem>> {
    let mut out: Vec<Problem> = analytic_suite().into_iter().map(|a| a.problem).collect();
    out.push(worked_example_1d());
    for loss in [Loss::Pow5, Loss::ExpCube, Loss::Abs] {
        let inst = generate_instance(&GenerateSpec::standard(loss, 0))?;
        out.push(localization_problem(&inst)?);
    }
    Ok(out)
}

/// Run a named suite. `empty` yields an empty (passing) report.
pub fn check(suite: &str) -> Result<CheckReport> {
    let results = match suite {
        "empty" => Vec::new(),
        "models" => check_models(20_000)?,
        "estimator" => check_estimator()?,
        "calculus" => check_calculus()?,
        "analysis" => check_analysis(),
        "wrong-model" => vec![check_wrong_model()],
        "default" => {
            let mut r = check_models(20_000)?;
            r.extend(check_estimator()?);
            r.extend(check_calculus()?);
            r.extend(check_analysis());
            r
        }
        "all" => {
            let mut r = check("default")?.results;
            r.push(check_wrong_model());
            r
        }
        other => {
            return Err(Error::invalid(format!(
                "unknown suite `{other}` (known: {})",
                SUITES.join(", ")
            )))
        }
    };
    Ok(CheckReport {
        suite: suite.to_string(),
        results,
    })
}

fn check_models(pairs: u64) -> Result<Vec<CheckResult>> {
    let cfg = ValidationConfig {
        pairs,
        ..ValidationConfig::default()
    };
    Ok(model_suite()?
        .iter()
        .map(|p| {
            let model = p.model().expect("suite problems carry models");
            let report = validate_model(model, p, &cfg);
            let detail = match &report.counterexample {
                None => format!("{} pairs, {} skipped", report.checked, report.skipped),
                Some(c) => format!("{:?}: lhs {:.6e} > rhs {:.6e}", c.kind, c.lhs, c.rhs),
            };
            result(format!("model valid: {}", p.name()), report.passed(), detail)
        })
        .collect())
}

/// `lipschitz(1)` declared for `x^2`, which must be refuted.
fn check_wrong_model() -> CheckResult {
    let p = Problem::new("square", 1, |x: &[f64]| x[0] * x[0]);
    let model = GrowthModel::lipschitz(1.0).expect("valid constant");
    let report = validate_model(&model, &p, &ValidationConfig::default());
    let detail = match &report.counterexample {
        Some(c) => format!("refuted at x = {:?}, y = {:?}", c.x, c.y),
        None => "no counterexample found".to_string(),
    };
    result("wrong model lipschitz(1) on x^2 is valid", report.passed(), detail)
}

fn random_point(dim: usize, radius: f64, rng: &mut impl Rng) -> Vec<f64> {
    sample_ball_with(dim, rng).into_iter().map(|v| radius * v).collect()
}

fn check_estimator() -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();

    // Unbiasedness against the analytic gradient of the smoothed quadratic.
    let q = quadratic(10);
    let cfg = SmoothingConfig::new(0.01, 10)?;
    let mut rng = RngStream::new(11, 0);
    let x = random_point(10, 1.0, &mut rng.next_rng());
    let est = Estimator::new(cfg).with_tally(Tally::Measurement);
    let r = est.reference(&q.problem, &x, 200_000, &mut rng)?;
    let worst = r
        .vector
        .iter()
        .zip(&x)
        .zip(&r.coord_stderr)
        .map(|((g, t), s)| (g - t).abs() / s.max(1e-300))
        .fold(0.0, f64::max);
    out.push(result(
        "estimator unbiased (quadratic, d = 10)",
        worst <= 5.0,
        format!("max |mean - grad| / stderr = {worst:.3}"),
    ));

    // Almost-sure norm bound and second-moment bound.
    let mut problems = vec![abs_1d().problem, worked_example_1d()];
    for loss in [Loss::Pow5, Loss::ExpCube] {
        problems.push(localization_problem(&generate_instance(&GenerateSpec::standard(loss, 0))?)?);
    }
    for p in &problems {
        let model = p.model().expect("suite problems carry models");
        let cfg = SmoothingConfig::new(0.1, p.dim())?;
        let est = Estimator::new(cfg).with_tally(Tally::Measurement);
        let mut rng = RngStream::new(12, 0);
        let mut violations = 0;
        let mut moment_ok = true;
        let mut worst_ratio: f64 = 0.0;
        for _ in 0..5 {
            let x = random_point(p.dim(), 1.0, &mut rng.next_rng());
            let bound = estimator_bound(model, &cfg, &x)?;
            let sig = sigma(model, &cfg, &x)?;
            let samples = rng.reserve(2_000);
            let gs = est.single_samples(p, &x, &rng, samples)?;
            let mut second = 0.0;
            for g in &gs {
                let n = vecops::norm(g);
                if n > bound * (1.0 + 1e-12) {
                    violations += 1;
                }
                second += n * n;
            }
            second /= gs.len() as f64;
            worst_ratio = worst_ratio.max(second / (sig * sig).max(1e-300));
            moment_ok &= second <= sig * sig;
        }
        out.push(result(
            format!("estimator norm bound: {}", p.name()),
            violations == 0,
            format!("{violations} violations in 10000 samples"),
        ));
        out.push(result(
            format!("second moment <= sigma^2: {}", p.name()),
            moment_ok,
            format!("max E|g|^2 / sigma^2 = {worst_ratio:.3e}"),
        ));
    }

    // Smoothing moves the value by at most delta (alpha + beta(delta)).
    let mut gap_ok = true;
    let mut gap_detail = String::new();
    for p in &problems {
        let model = p.model().expect("suite problems carry models");
        let cfg = SmoothingConfig::new(0.1, p.dim())?;
        let mut rng = RngStream::new(13, 0);
        let x = random_point(p.dim(), 1.0, &mut rng.next_rng());
        let v = smoothed_value_estimate(p, &x, &cfg, 20_000, &mut rng)?;
        let f = p.eval(&x, Tally::Measurement)?;
        let allowed = cfg.delta * model.ball_bound(&x, cfg.delta)? + 5.0 * v.stderr;
        if (v.mean - f).abs() > allowed {
            gap_ok = false;
            gap_detail = format!("{}: gap {:.3e} > {allowed:.3e}", p.name(), (v.mean - f).abs());
        }
    }
    out.push(result("value gap |f_delta - f| <= delta (alpha + beta)", gap_ok, gap_detail));
    Ok(out)
}

fn check_calculus() -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    let mut rng = RngStream::new(21, 0).next_rng();
    let g = GrowthModel::smooth(vecops::norm, 2.0)?;
    let h = GrowthModel::radial(|t| t * t);
    let s = crate::growth::sum(&g, &h)?;
    let cfg = SmoothingConfig::new(0.3, 3)?;
    let sm = smoothed(&g, &cfg);
    let mut sum_err: f64 = 0.0;
    let mut smooth_err: f64 = 0.0;
    for _ in 0..1_000 {
        let x = random_point(3, 5.0, &mut rng);
        let r: f64 = rng.random_range(0.0..3.0);
        let lhs = s.alpha(&x)? + s.beta(&x, r)?;
        let rhs = g.alpha(&x)? + h.alpha(&x)? + g.beta(&x, r)? + h.beta(&x, r)?;
        sum_err = sum_err.max((lhs - rhs).abs());
        let a = sm.alpha(&x)? + sm.beta(&x, r)?;
        let b = g.alpha(&x)? + g.beta(&x, cfg.delta)? + g.beta(&x, r + cfg.delta)?;
        smooth_err = smooth_err.max((a - b).abs() / b.max(1.0));
    }
    out.push(result(
        "sum rule adds alpha and beta",
        sum_err < 1e-9,
        format!("max error {sum_err:.3e}"),
    ));
    out.push(result(
        "smoothed model shifts beta by delta",
        smooth_err < 1e-9,
        format!("max relative error {smooth_err:.3e}"),
    ));
    Ok(out)
}

fn check_analysis() -> Vec<CheckResult> {
    let mut out = Vec::new();
    let mut rng = RngStream::new(31, 0).next_rng();
    let mut worst = f64::INFINITY;
    for _ in 0..100_000 {
        let d = rng.random_range(1..=8);
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
        let y: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
        if let Ok(s) = alignment_slack(&x, &y) {
            worst = worst.min(s);
        }
    }
    out.push(result(
        "<x, y>/|y| >= |x| - 2 |x - y|",
        worst >= -1e-12,
        format!("min slack {worst:.3e}"),
    ));

    // Descent inequality on the smoothed quadratic, whose gradient is x.
    let d = 10;
    let q = quadratic(d);
    let model = q.problem.model().expect("quadratic has a model");
    let cfg = SmoothingConfig::new(0.1, d).expect("valid");
    let fd = q.smoothed_value.as_ref().expect("closed form");
    let mut violations = 0;
    for _ in 0..10_000 {
        let x = random_point(d, 3.0, &mut rng);
        let step = random_point(d, 1.0, &mut rng);
        let y: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
        let r = vecops::norm(&step);
        let lhs = fd(&y, cfg.delta) - fd(&x, cfg.delta) - vecops::dot(&x, &step);
        let ell = local_smoothness(model, &cfg, &x, r).expect("finite");
        if lhs > 0.5 * ell * r * r + 1e-9 {
            violations += 1;
        }
    }
    out.push(result(
        "descent inequality (quadratic)",
        violations == 0,
        format!("{violations} violations in 10000 pairs"),
    ));
    out
}
