use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use smoothzo::harness::{
    aggregate_dir, check, config::measurement_stream, parse_grid_arg, resolve_output_dir,
    run_experiment, tune, ExperimentConfig, OUTPUT_DIR_ENV,
};
use smoothzo::problems::Tally;
use smoothzo::smoothing::smoothed_grad_reference;
use smoothzo::vecops;

const EXIT_USAGE: u8 = 1;
const EXIT_DIVERGED: u8 = 2;
const EXIT_PROPERTY: u8 = 3;

#[derive(Parser)]
#[command(name = "smoothzo", version, about = "Randomized-smoothing zeroth-order optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of a config (or a run manifest) and write CSVs.
    Run {
        config: PathBuf,
        /// Output directory (overrides the config and the environment).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Root for default output directories.
        #[arg(long, env = OUTPUT_DIR_ENV)]
        output_root: Option<PathBuf>,
    },
    /// Grid-search tunables and report the best setting.
    Tune {
        config: PathBuf,
        /// `key=v1,v2,...` or `key=standard`; repeat for a product grid.
        #[arg(long, required = true)]
        grid: Vec<String>,
        /// Write the winning config here.
        #[arg(long)]
        write_best: Option<PathBuf>,
    },
    /// Measure f and |grad f_delta| at a point.
    Measure {
        config: PathBuf,
        /// File with the point as a JSON array or whitespace/comma separated numbers.
        #[arg(long)]
        point: PathBuf,
    },
    /// Run a built-in property suite.
    Check {
        #[arg(long, default_value = "default")]
        suite: String,
    },
    /// Recompute aggregate.csv from the trajectory files in a directory.
    Aggregate {
        dir: PathBuf,
        #[arg(long, default_value_t = 200)]
        checkpoints: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn load(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Run {
            config,
            out,
            output_root,
        } => {
            let cfg = load(&config)?;
            let dir = out.unwrap_or_else(|| resolve_output_dir(&cfg, output_root.as_deref()));
            let outcome = run_experiment(&cfg, &dir)?;
            for s in &outcome.manifest.seeds {
                println!(
                    "seed {:>6}: f {:.6e} -> {:.6e}  oracle {:>10}  iters {:>8}{}",
                    s.seed,
                    s.initial_f,
                    s.final_f,
                    s.oracle_calls,
                    s.iterations,
                    s.diverged.as_deref().map(|d| format!("  DIVERGED: {d}")).unwrap_or_default()
                );
            }
            println!("wrote {}", outcome.dir.display());
            Ok(if outcome.any_diverged() {
                ExitCode::from(EXIT_DIVERGED)
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Tune {
            config,
            grid,
            write_best,
        } => {
            let cfg = load(&config)?;
            let grid = grid
                .iter()
                .map(|g| parse_grid_arg(g))
                .collect::<smoothzo::Result<Vec<_>>>()?;
            let report = tune(&cfg, &grid)?;
            println!("{:<40} {:>16} {:>16} {:>8}", "params", "median final", "median best", "diverged");
            for (i, p) in report.points.iter().enumerate() {
                let params: Vec<String> = p.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
                println!(
                    "{:<40} {:>16.6e} {:>16.6e} {:>8}{}",
                    params.join(" "),
                    p.median_final,
                    p.median_best,
                    p.diverged,
                    if i == report.best { "  <- best" } else { "" }
                );
            }
            if let Some(path) = write_best {
                std::fs::write(&path, report.best_config.to_toml()?)
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Measure { config, point } => {
            let cfg = load(&config)?;
            let prepared = cfg.prepare()?;
            let x = read_point(&point)?;
            let problem = &prepared.problem;
            if x.len() != problem.dim() {
                bail!("point has {} coordinates, problem has {}", x.len(), problem.dim());
            }
            let f = problem.eval(&x, Tally::Measurement)?;
            let mut rng = measurement_stream(cfg.seeds[0]);
            let reference = smoothed_grad_reference(
                problem,
                &x,
                &prepared.solver.smoothing,
                cfg.options.b_eval.max(2),
                &mut rng,
            )?;
            println!("f = {f:.12e}");
            println!(
                "|grad f_delta| = {:.12e} (max coordinate stderr {:.3e}, {} samples)",
                vecops::norm(&reference.vector),
                reference.stderr,
                cfg.options.b_eval.max(2)
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Check { suite } => {
            let report = check(&suite)?;
            for r in &report.results {
                println!("{} {}  ({})", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            let failed = report.results.iter().filter(|r| !r.passed).count();
            println!("{} checks, {failed} failed", report.results.len());
            Ok(if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_PROPERTY)
            })
        }
        Command::Aggregate { dir, checkpoints } => {
            let rows = aggregate_dir(&dir, checkpoints)?;
            println!("wrote {} ({} checkpoints)", dir.join("aggregate.csv").display(), rows.len());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn read_point(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let trimmed = text.trim();
    if trimmed.starts_with('[') {
        return serde_json::from_str(trimmed).context("parsing point as JSON array");
    }
    trimmed
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().with_context(|| format!("bad coordinate `{s}`")))
        .collect()
}
