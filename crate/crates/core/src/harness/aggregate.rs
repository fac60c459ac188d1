//! Trajectory CSV files and cross-seed aggregation.

use std::fs;
use std::path::{Path, PathBuf};

use crate::algorithms::TrajectoryPoint;
use crate::error::{Error, Result};

/// Column order of every trajectory file.
pub const TRAJECTORY_HEADER: [&str; 8] = [
    "seed",
    "iter",
    "oracle_calls",
    "measurement_calls",
    "f_value",
    "stepsize",
    "grad_surrogate",
    "wall_time_s",
];

pub const AGGREGATE_HEADER: [&str; 6] = [
    "oracle_calls",
    "f_mean",
    "f_std",
    "grad_surrogate_mean",
    "grad_surrogate_std",
    "seeds",
];

/// Scientific format with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_float).unwrap_or_default()
}

/// One parsed trajectory row.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub seed: u64,
    pub iter: u64,
    pub oracle_calls: u64,
    pub measurement_calls: u64,
    pub f_value: f64,
    pub stepsize: f64,
    pub grad_surrogate: Option<f64>,
    pub wall_time_s: f64,
}

impl TrajectoryRow {
    pub fn from_point(seed: u64, p: &TrajectoryPoint) -> Self {
        Self {
            seed,
            iter: p.iter,
            oracle_calls: p.oracle_calls,
            measurement_calls: p.measurement_calls,
            f_value: p.f_value,
            stepsize: p.stepsize,
            grad_surrogate: p.grad_surrogate,
            wall_time_s: p.wall_time_s,
        }
    }
}

pub fn write_trajectory(path: &Path, rows: &[TrajectoryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TRAJECTORY_HEADER)?;
    for r in rows {
        w.write_record([
            r.seed.to_string(),
            r.iter.to_string(),
            r.oracle_calls.to_string(),
            r.measurement_calls.to_string(),
            fmt_float(r.f_value),
            fmt_float(r.stepsize),
            fmt_opt(r.grad_surrogate),
            fmt_float(r.wall_time_s),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory(path: &Path) -> Result<Vec<TrajectoryRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != TRAJECTORY_HEADER {
        return Err(Error::Config(format!(
            "{}: unexpected header {header:?}",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |col: &str| {
            Error::Config(format!("{}: row {}: bad `{col}`", path.display(), line + 2))
        };
        let int = |i: usize| rec[i].parse::<u64>().map_err(|_| bad(TRAJECTORY_HEADER[i]));
        let float = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(TRAJECTORY_HEADER[i]));
        rows.push(TrajectoryRow {
            seed: int(0)?,
            iter: int(1)?,
            oracle_calls: int(2)?,
            measurement_calls: int(3)?,
            f_value: float(4)?,
            stepsize: float(5)?,
            grad_surrogate: if rec[6].is_empty() { None } else { Some(float(6)?) },
            wall_time_s: float(7)?,
        });
    }
    Ok(rows)
}

pub fn trajectory_file_name(seed: u64) -> String {
    format!("trajectory_seed{seed}.csv")
}

/// All `trajectory_seed*.csv` files of a directory, sorted by seed.
pub fn trajectory_files(dir: &Path) -> Result<Vec<(u64, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if let Some(seed) = name
            .strip_prefix("trajectory_seed")
            .and_then(|s| s.strip_suffix(".csv"))
            .and_then(|s| s.parse::<u64>().ok())
        {
            out.push((seed, path));
        }
    }
    out.sort();
    Ok(out)
}

/// Cross-seed statistics on a common oracle-call grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub oracle_calls: u64,
    pub f_mean: f64,
    pub f_std: f64,
    pub grad_surrogate_mean: Option<f64>,
    pub grad_surrogate_std: Option<f64>,
    /// Seeds with a logged value at or before this checkpoint.
    pub seeds: usize,
}

/// `k` evenly spaced checkpoints in `[0, max_calls]`, rounded and
/// deduplicated so the grid is strictly increasing.
pub fn checkpoint_grid(max_calls: u64, k: usize) -> Vec<u64> {
    let k = k.max(2);
    let mut grid: Vec<u64> = (0..k)
        .map(|i| ((max_calls as f64) * i as f64 / (k - 1) as f64).round() as u64)
        .collect();
    grid.dedup();
    grid
}

/// Last logged value at or before `c` ("last-value interpolation").
pub fn value_at<T: Copy>(rows: &[TrajectoryRow], c: u64, get: impl Fn(&TrajectoryRow) -> Option<T>) -> Option<T> {
    rows.iter()
        .take_while(|r| r.oracle_calls <= c)
        .filter_map(get)
        .last()
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Aggregate per-seed trajectories on a `k`-point grid up to the largest
/// oracle count any seed reached. Standard deviations are population
/// standard deviations over seeds.
pub fn aggregate(per_seed: &[Vec<TrajectoryRow>], k: usize) -> Vec<AggregateRow> {
    let max_calls = per_seed
        .iter()
        .filter_map(|rows| rows.last().map(|r| r.oracle_calls))
        .max()
        .unwrap_or(0);
    checkpoint_grid(max_calls, k)
        .into_iter()
        .map(|c| {
            let fs: Vec<f64> = per_seed
                .iter()
                .filter_map(|rows| value_at(rows, c, |r| Some(r.f_value)))
                .collect();
            let gs: Vec<f64> = per_seed
                .iter()
                .filter_map(|rows| value_at(rows, c, |r| r.grad_surrogate))
                .collect();
            let (f_mean, f_std) = if fs.is_empty() { (f64::NAN, f64::NAN) } else { mean_std(&fs) };
            let (gm, gsd) = if gs.is_empty() {
                (None, None)
            } else {
                let (m, s) = mean_std(&gs);
                (Some(m), Some(s))
            };
            AggregateRow {
                oracle_calls: c,
                f_mean,
                f_std,
                grad_surrogate_mean: gm,
                grad_surrogate_std: gsd,
                seeds: fs.len(),
            }
        })
        .collect()
}

pub fn write_aggregate(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(AGGREGATE_HEADER)?;
    for r in rows {
        w.write_record([
            r.oracle_calls.to_string(),
            fmt_float(r.f_mean),
            fmt_float(r.f_std),
            fmt_opt(r.grad_surrogate_mean),
            fmt_opt(r.grad_surrogate_std),
            r.seeds.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Re-aggregate the trajectory files found in `dir` into
/// `dir/aggregate.csv`.
pub fn aggregate_dir(dir: &Path, k: usize) -> Result<Vec<AggregateRow>> {
    let files = trajectory_files(dir)?;
    if files.is_empty() {
        return Err(Error::Config(format!(
            "no trajectory_seed*.csv files in {}",
            dir.display()
        )));
    }
    let per_seed = files
        .iter()
        .map(|(_, p)| read_trajectory(p))
        .collect::<Result<Vec<_>>>()?;
    let rows = aggregate(&per_seed, k);
    write_aggregate(&dir.join("aggregate.csv"), &rows)?;
    Ok(rows)
}
