//! Grid search over tunable config scalars.

use serde::Serialize;

use super::config::ExperimentConfig;
use super::run::execute;
use crate::algorithms::MeasureCadence;
use crate::error::{Error, Result};

/// Stepsize grid `{2^(-2i+1) : i = -6..6}`, ascending.
pub fn standard_stepsize_grid() -> Vec<f64> {
    let mut g: Vec<f64> = (-6..=6).map(|i: i32| 2f64.powi(-2 * i + 1)).collect();
    g.sort_by(f64::total_cmp);
    g
}

/// Batch grid `{2, 4, 8, 16, 32}`.
pub fn standard_batch_grid() -> Vec<f64> {
    vec![2.0, 4.0, 8.0, 16.0, 32.0]
}

/// Default grid for a key: the stepsize grid for `stepsize`/`step_scale`,
/// the batch grid for batch-like keys.
pub fn default_grid(key: &str) -> Result<Vec<f64>> {
    match key {
        "stepsize" | "step_scale" => Ok(standard_stepsize_grid()),
        "batch" | "period" | "small_batch" | "big_batch" => Ok(standard_batch_grid()),
        _ => Err(Error::Config(format!("no default grid for `{key}`"))),
    }
}

/// Parse `key=v1,v2,...` or `key=standard`.
pub fn parse_grid_arg(arg: &str) -> Result<(String, Vec<f64>)> {
    let (key, values) = arg
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("grid `{arg}` is not of the form key=values")))?;
    let key = key.trim().to_string();
    let values = if values.trim() == "standard" {
        default_grid(&key)?
    } else {
        values
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad grid value `{v}` for `{key}`")))
            })
            .collect::<Result<Vec<_>>>()?
    };
    if values.is_empty() {
        return Err(Error::Config(format!("grid for `{key}` is empty")));
    }
    Ok((key, values))
}

#[derive(Debug, Clone, Serialize)]
pub struct GridPoint {
    pub params: Vec<(String, f64)>,
    /// Median over seeds of the final objective (`+inf` for diverged seeds).
    pub median_final: f64,
    /// Median over seeds of the best logged objective.
    pub median_best: f64,
    pub diverged: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct TuneReport {
    pub points: Vec<GridPoint>,
    pub best: usize,
    pub best_config: ExperimentConfig,
}

impl TuneReport {
    pub fn best_point(&self) -> &GridPoint {
        &self.points[self.best]
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn cartesian(grid: &[(String, Vec<f64>)]) -> Vec<Vec<(String, f64)>> {
    grid.iter().fold(vec![Vec::new()], |acc, (key, values)| {
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        acc.into_iter()
            .flat_map(|prefix| {
                sorted.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push((key.clone(), *v));
                    p
                })
            })
            .collect()
    })
}

/// Evaluate every grid point on the config's seeds and pick the minimal
/// median final objective. Ties go to the earlier point in the grid, which
/// is ordered by ascending values, so smaller stepsizes and batches win.
///
/// Selection only looks at objective values, so stationarity measurements
/// are switched off during the sweep (they do not affect the iterates).
pub fn tune(base: &ExperimentConfig, grid: &[(String, Vec<f64>)]) -> Result<TuneReport> {
    if grid.is_empty() {
        return Err(Error::Config("empty tuning grid".into()));
    }
    let original_measure = base.options.measure;
    let mut base = base.clone();
    base.options.measure = MeasureCadence::Never;
    let mut points = Vec::new();
    let mut configs = Vec::new();
    for params in cartesian(grid) {
        let mut cfg = base.clone();
        for (k, v) in &params {
            cfg.set_param(k, *v)?;
        }
        let (_, records) = execute(&cfg)?;
        let diverged = records.iter().filter(|(_, r)| r.diverged.is_some()).count();
        let mut finals: Vec<f64> = records
            .iter()
            .map(|(_, r)| match (&r.diverged, r.trajectory.last()) {
                (None, Some(p)) if p.f_value.is_finite() => p.f_value,
                _ => f64::INFINITY,
            })
            .collect();
        let mut bests: Vec<f64> = records
            .iter()
            .map(|(_, r)| {
                r.trajectory
                    .iter()
                    .map(|p| p.f_value)
                    .filter(|f| f.is_finite())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        log::info!("tune {params:?}: {diverged} diverged");
        points.push(GridPoint {
            params,
            median_final: median(&mut finals),
            median_best: median(&mut bests),
            diverged,
        });
        configs.push(cfg);
    }
    let best = points
        .iter()
        .enumerate()
        .filter(|(_, p)| p.median_final.is_finite())
        .fold(None::<(usize, f64)>, |acc, (i, p)| match acc {
            Some((_, b)) if b <= p.median_final => acc,
            _ => Some((i, p.median_final)),
        })
        .map(|(i, _)| i)
        .ok_or_else(|| Error::Config("every grid point diverged".into()))?;
    let mut best_config = configs.swap_remove(best);
    best_config.options.measure = original_measure;
    Ok(TuneReport {
        best_config,
        points,
        best,
    })
}
