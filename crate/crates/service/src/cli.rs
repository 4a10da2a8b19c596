//! Command-line front end. Session commands go through the same
//! [`SessionManager`] as the HTTP API, one process per command.

use crate::config::{parse_any, AnyConfig, ExperimentSpec, SeedSpec, SessionSpec};
use crate::error::{ServiceError, ServiceResult};
use crate::manager::SessionManager;
use crate::store::SessionStore;
use clap::{Parser, Subcommand, ValueEnum};
use seqdesign_core::experiment::{run_experiment, write_steps_csv, write_summary_csv};
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Debug, Parser)]
#[command(name = "seqdesign", version, about = "Sequential filter design for photon-count SED studies")]
pub struct Cli {
    /// Seed override: the design seed for `session new`, the single seed for
    /// `simulate`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for particle computations (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: log::LevelFilter,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a batch experiment and write the per-step and summary CSVs.
    Simulate {
        spec: PathBuf,
        /// Override the spec's `output.steps`.
        #[arg(long)]
        steps_out: Option<PathBuf>,
        /// Override the spec's `output.summary`.
        #[arg(long)]
        summary_out: Option<PathBuf>,
    },
    /// Drive a persisted live session.
    Session {
        #[arg(long, env = "SEQDESIGN_STATE_DIR", default_value = "sessions")]
        state_dir: PathBuf,
        #[command(subcommand)]
        action: SessionCommand,
    },
    /// Serve the HTTP API (and the UI bundle, if given).
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        #[arg(long, env = "SEQDESIGN_STATE_DIR", default_value = "sessions")]
        state_dir: PathBuf,
        #[arg(long)]
        ui_dir: Option<PathBuf>,
    },
    /// Check a session or experiment config without running it.
    Validate { file: PathBuf },
}

#[derive(Debug, Subcommand)]
pub enum SessionCommand {
    /// Create a session from a TOML spec; prints its view (with the id).
    New {
        spec: PathBuf,
        #[arg(long)]
        id: Option<String>,
    },
    /// Print the pending recommendation, computing it if needed.
    Recommend { id: String },
    /// Record a count; `--filter` may differ from the recommendation.
    Observe {
        id: String,
        #[arg(long)]
        filter: String,
        #[arg(long, allow_negative_numbers = true)]
        count: i64,
    },
    Status { id: String },
    Export {
        id: String,
        #[arg(long, value_enum, default_value_t = ExportFormat::Csv)]
        format: ExportFormat,
        /// Write here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportFormat {
    Csv,
    Json,
}

fn read(path: &Path) -> ServiceResult<String> {
    std::fs::read_to_string(path).map_err(|e| ServiceError::InvalidConfig {
        field: "file".into(),
        message: format!("{}: {e}", path.display()),
    })
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

fn print_json<T: Serialize>(out: &mut dyn Write, v: &T) -> ServiceResult<()> {
    serde_json::to_writer_pretty(&mut *out, v).map_err(|e| ServiceError::Storage(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> ServiceResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

fn simulate(
    spec_path: &Path,
    seed: Option<u64>,
    steps_out: Option<PathBuf>,
    summary_out: Option<PathBuf>,
    out: &mut dyn Write,
) -> ServiceResult<()> {
    let mut spec = ExperimentSpec::from_toml(&read(spec_path)?)?;
    if let Some(s) = seed {
        spec.seeds = SeedSpec::List(vec![s]);
    }
    let base = base_dir(spec_path);
    let exp = spec.experiment(&base)?;
    let (steps_path, summary_path) = spec.output_paths(&base);
    let steps_path = steps_out.unwrap_or(steps_path);
    let summary_path = summary_out.unwrap_or(summary_path);
    let result = run_experiment(&exp)?;
    write_file(&steps_path, &write_steps_csv(Vec::new(), &exp.model, &result)?)?;
    write_file(&summary_path, &write_summary_csv(Vec::new(), &result)?)?;
    for r in result.records.iter().filter(|r| r.error.is_some()) {
        writeln!(out, "run {}/{} failed: {}", r.strategy, r.seed, r.error.as_deref().unwrap_or(""))?;
    }
    writeln!(out, "{:<8} {:>5} {:>8} {:>12} {:>12}", "strategy", "runs", "failed", "final_rmse", "all_t_rmse")?;
    let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.5}"));
    for s in &result.summary {
        writeln!(
            out,
            "{:<8} {:>5} {:>8} {:>12} {:>12}",
            s.strategy.as_str(),
            s.runs,
            s.failures,
            fmt(s.mean_final_rmse),
            fmt(s.mean_all_t_rmse)
        )?;
    }
    writeln!(out, "wrote {} and {}", steps_path.display(), summary_path.display())?;
    Ok(())
}

fn session(
    state_dir: &Path,
    action: SessionCommand,
    seed: Option<u64>,
    out: &mut dyn Write,
) -> ServiceResult<()> {
    let manager = SessionManager::new(SessionStore::open(state_dir)?);
    match action {
        SessionCommand::New { spec, id } => {
            let mut parsed = SessionSpec::from_toml(&read(&spec)?)?;
            if let Some(s) = seed {
                parsed.design.rng_seed = s;
            }
            let record = manager.create(parsed, &base_dir(&spec), id)?;
            print_json(out, &manager.view(&record.id)?)
        }
        SessionCommand::Recommend { id } => print_json(out, &manager.recommend(&id)?),
        SessionCommand::Observe { id, filter, count } => print_json(out, &manager.observe(&id, &filter, count)?),
        SessionCommand::Status { id } => print_json(out, &manager.view(&id)?),
        SessionCommand::Export { id, format, out: path } => {
            let bytes = match format {
                ExportFormat::Csv => manager.export_csv(&id)?,
                ExportFormat::Json => SessionStore::encode(&manager.record(&id)?)?,
            };
            match path {
                Some(p) => write_file(&p, &bytes),
                None => Ok(out.write_all(&bytes)?),
            }
        }
    }
}

fn validate(path: &Path, out: &mut dyn Write) -> ServiceResult<()> {
    let base = base_dir(path);
    match parse_any(&read(path)?)? {
        AnyConfig::Session(spec) => {
            let model = spec.model.build(&base)?;
            spec.check(&model)?;
            writeln!(
                out,
                "ok: session config, {} templates, {} filters, {} grid points, strategy {}",
                model.templates.len(),
                model.bank.len(),
                model.grid.len(),
                spec.strategy
            )?;
        }
        AnyConfig::Experiment(spec) => {
            let exp = spec.experiment(&base)?;
            writeln!(
                out,
                "ok: experiment config, {} strategies x {} seeds, t_max {}",
                exp.strategies.len(),
                exp.seeds.len(),
                exp.t_max
            )?;
        }
    }
    Ok(())
}

/// Execute a parsed command line, writing results to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> ServiceResult<()> {
    if let Some(n) = cli.threads {
        if !seqdesign_core::exec::init_threads(n) {
            log::warn!("thread pool already initialised; --threads ignored");
        }
    }
    match cli.command {
        Command::Simulate {
            spec,
            steps_out,
            summary_out,
        } => simulate(&spec, cli.seed, steps_out, summary_out, out),
        Command::Session { state_dir, action } => session(&state_dir, action, cli.seed, out),
        Command::Serve {
            bind,
            state_dir,
            ui_dir,
        } => {
            let manager = Arc::new(SessionManager::new(SessionStore::open(&state_dir)?));
            if let Some(dir) = &ui_dir {
                if !dir.is_dir() {
                    log::warn!("ui dir {} does not exist; static files will 404", dir.display());
                }
            }
            let runtime = tokio::runtime::Runtime::new()?;
            writeln!(out, "serving on http://{bind} (state dir {})", state_dir.display())?;
            out.flush()?;
            runtime.block_on(crate::api::serve(manager, &bind, ui_dir))
        }
        Command::Validate { file } => validate(&file, out),
    }
}
