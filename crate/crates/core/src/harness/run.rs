use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use super::aggregate::{
    aggregate, trajectory_file_name, write_aggregate, write_trajectory, AggregateRow,
    TrajectoryRow,
};
use super::config::ExperimentConfig;
use crate::algorithms::RunRecord;
use crate::error::{Error, Result};

/// Environment variable naming the default output root.
pub const OUTPUT_DIR_ENV: &str = "SMOOTHZO_OUTPUT_DIR";

/// Per-seed summary written to the manifest.
#[derive(Debug, Clone, Serialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub iterations: u64,
    pub oracle_calls: u64,
    pub measurement_calls: u64,
    pub refreshes: u64,
    pub skipped_steps: u64,
    pub initial_f: f64,
    pub final_f: f64,
    pub best_f: f64,
    pub output_point: Vec<f64>,
    pub output_fallback: bool,
    pub final_point: Vec<f64>,
    pub diverged: Option<String>,
    pub warnings: Vec<String>,
    pub wall_time_s: f64,
}

impl SeedSummary {
    fn new(seed: u64, r: &RunRecord) -> Self {
        let fs = r.trajectory.iter().map(|p| p.f_value);
        Self {
            seed,
            iterations: r.iterations,
            oracle_calls: r.oracle_calls,
            measurement_calls: r.measurement_calls,
            refreshes: r.refreshes,
            skipped_steps: r.skipped_steps,
            initial_f: r.trajectory.first().map_or(f64::NAN, |p| p.f_value),
            final_f: r.trajectory.last().map_or(f64::NAN, |p| p.f_value),
            best_f: fs.fold(f64::INFINITY, f64::min),
            output_point: r.output_point.clone(),
            output_fallback: r.output_fallback,
            final_point: r.final_point.clone(),
            diverged: r.diverged.clone(),
            warnings: r.warnings.clone(),
            wall_time_s: r.wall_time,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub package: &'static str,
    pub version: &'static str,
    pub parallel_feature: bool,
    pub config: ExperimentConfig,
    pub problem: String,
    pub dim: usize,
    pub x0: Vec<f64>,
    pub delta_gap: Option<f64>,
    pub instance: Option<crate::problems::LocalizationInstance>,
    pub seeds: Vec<SeedSummary>,
    pub wall_time_s: f64,
}

/// Everything a run produced.
pub struct Outcome {
    pub dir: PathBuf,
    pub records: Vec<(u64, RunRecord)>,
    pub aggregate: Vec<AggregateRow>,
    pub manifest: Manifest,
}

impl Outcome {
    pub fn any_diverged(&self) -> bool {
        self.records.iter().any(|(_, r)| r.diverged.is_some())
    }
}

/// Output directory: the config's `output_dir`, else `$SMOOTHZO_OUTPUT_DIR/<name>`,
/// else `results/<name>`.
pub fn resolve_output_dir(cfg: &ExperimentConfig, env_root: Option<&Path>) -> PathBuf {
    if let Some(d) = &cfg.output_dir {
        return d.clone();
    }
    match env_root {
        Some(root) => root.join(&cfg.name),
        None => PathBuf::from("results").join(&cfg.name),
    }
}

/// Run every seed (in parallel when enabled) without writing anything.
pub fn execute(cfg: &ExperimentConfig) -> Result<(super::config::Prepared, Vec<(u64, RunRecord)>)> {
    let prepared = cfg.prepare()?;
    let exec = cfg.options.exec;
    let results = exec.map_slice(&cfg.seeds, |&seed| {
        let problem = prepared.problem.fresh_instance();
        prepared
            .solver
            .run(&problem, &prepared.x0, seed)
            .map(|r| (seed, r))
    });
    let records = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok((prepared, records))
}

/// Run the experiment and write `trajectory_seed<N>.csv` per seed,
/// `aggregate.csv` and `manifest.json` into `dir`.
pub fn run_experiment(cfg: &ExperimentConfig, dir: &Path) -> Result<Outcome> {
    let start = Instant::now();
    let (prepared, records) = execute(cfg)?;
    fs::create_dir_all(dir)?;
    let mut per_seed = Vec::with_capacity(records.len());
    for (seed, record) in &records {
        let rows: Vec<TrajectoryRow> = record
            .trajectory
            .iter()
            .map(|p| TrajectoryRow::from_point(*seed, p))
            .collect();
        write_trajectory(&dir.join(trajectory_file_name(*seed)), &rows)?;
        per_seed.push(rows);
    }
    let agg = aggregate(&per_seed, cfg.checkpoints);
    write_aggregate(&dir.join("aggregate.csv"), &agg)?;

    let manifest = Manifest {
        package: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        parallel_feature: cfg!(feature = "parallel"),
        config: cfg.clone(),
        problem: prepared.problem.name().to_string(),
        dim: prepared.problem.dim(),
        x0: prepared.x0.clone(),
        delta_gap: prepared.delta_gap,
        instance: prepared.instance.clone(),
        seeds: records.iter().map(|(s, r)| SeedSummary::new(*s, r)).collect(),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(dir.join("manifest.json"), json)?;
    Ok(Outcome {
        dir: dir.to_path_buf(),
        records,
        aggregate: agg,
        manifest,
    })
}
