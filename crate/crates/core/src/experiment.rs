//! Replication experiments: many seeded simulated sessions per strategy,
//! with per-step and summary CSV output.
//!
//! Runs for one seed share a params cache, since every strategy starts from
//! the same prior particles. Seeds run in parallel; output order is fixed
//! by `(seed, strategy)` position, so files are byte-identical across
//! thread counts.

use crate::error::{Error, Result};
use crate::exec;
use crate::polna::ParamsCache;
use crate::rng::{stream_rng, streams, GENERATOR_ID};
use crate::smc::{run_simulated, DesignConfig, DesignContext, SessionState, SessionStatus, SimulatedRun, Strategy};
use crate::spectral::{MixtureWeights, SimulatedSource, SpectralModel};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::io::Write;
use std::sync::Arc;

pub const EXPORT_HEADER: &str = "# seqdesign-export v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TruthSpec {
    /// `eta_true` is exactly the template mixture.
    Mixture { weights: Vec<f64> },
    /// The mixture plus one GP deviation per seed, drawn from that seed's
    /// source stream.
    MixtureWithDeviation { weights: Vec<f64> },
    /// An arbitrary log-intensity on the grid; no weight error is reported.
    LogIntensity { values: Vec<f64> },
}

impl TruthSpec {
    pub fn source(&self, model: &SpectralModel, seed: u64) -> Result<SimulatedSource> {
        match self {
            TruthSpec::Mixture { weights } => {
                SimulatedSource::from_mixture(MixtureWeights::new(weights.clone())?, &model.templates)
            }
            TruthSpec::MixtureWithDeviation { weights } => SimulatedSource::with_gp_deviation(
                MixtureWeights::new(weights.clone())?,
                &model.templates,
                &model.gp,
                &mut stream_rng(seed, streams::SOURCE),
            ),
            TruthSpec::LogIntensity { values } => {
                if values.len() != model.grid.len() {
                    return Err(Error::DimensionMismatch {
                        expected: model.grid.len(),
                        got: values.len(),
                        context: "true log-intensity vs grid",
                    });
                }
                Ok(SimulatedSource::from_log_intensity(MixtureWeights::uniform(1), values.clone()))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub model: Arc<SpectralModel>,
    pub design: DesignConfig,
    pub truth: TruthSpec,
    pub strategies: Vec<Strategy>,
    pub seeds: Vec<u64>,
    pub t_max: usize,
}

impl Experiment {
    pub fn validate(&self) -> Result<()> {
        if self.strategies.is_empty() {
            return Err(Error::InvalidConfig("experiment needs at least one strategy".into()));
        }
        let mut seen = HashSet::new();
        for s in &self.strategies {
            if !seen.insert(*s) {
                return Err(Error::InvalidConfig(format!("strategy `{s}` listed twice")));
            }
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("experiment needs at least one seed".into()));
        }
        let mut seen = HashSet::new();
        for s in &self.seeds {
            if !seen.insert(*s) {
                return Err(Error::InvalidConfig(format!("seed {s} listed twice")));
            }
        }
        self.design.validate(self.model.templates.len())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub strategy: Strategy,
    pub seed: u64,
    pub run: Option<SimulatedRun>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: Strategy,
    pub runs: usize,
    pub failures: usize,
    pub stopped_by_ig: usize,
    pub mean_final_rmse: Option<f64>,
    pub sd_final_rmse: Option<f64>,
    pub mean_all_t_rmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub generator: String,
    pub records: Vec<RunRecord>,
    pub summary: Vec<StrategySummary>,
}

fn mean_sd(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.len() > 1)
        .then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (Some(mean), sd)
}

pub fn run_experiment(exp: &Experiment) -> Result<ExperimentResult> {
    exp.validate()?;
    let per_seed = exec::map_slice(exp.design.execution, &exp.seeds, |&seed| {
        let cache = Arc::new(ParamsCache::default());
        let design = DesignConfig {
            rng_seed: seed,
            ..exp.design.clone()
        };
        let setup = DesignContext::with_cache(exp.model.clone(), design, cache)
            .and_then(|ctx| exp.truth.source(&exp.model, seed).map(|src| (ctx, src)));
        exp.strategies
            .iter()
            .map(|&strategy| {
                let outcome = setup
                    .as_ref()
                    .map_err(|e| e.clone())
                    .and_then(|(ctx, src)| run_simulated(ctx, strategy, src, exp.t_max));
                if let Err(e) = &outcome {
                    log::warn!("run {strategy}/seed {seed} failed: {e}");
                }
                RunRecord {
                    strategy,
                    seed,
                    error: outcome.as_ref().err().map(|e| e.to_string()),
                    run: outcome.ok(),
                }
            })
            .collect::<Vec<_>>()
    });
    let records: Vec<RunRecord> = per_seed.into_iter().flatten().collect();
    let summary = exp
        .strategies
        .iter()
        .map(|&strategy| {
            let mine: Vec<&RunRecord> = records.iter().filter(|r| r.strategy == strategy).collect();
            let ok: Vec<&SimulatedRun> = mine.iter().filter_map(|r| r.run.as_ref()).collect();
            let finals: Vec<f64> = ok.iter().filter_map(|r| r.final_rmse()).collect();
            let all_t: Vec<f64> = ok.iter().filter_map(|r| r.mean_rmse()).collect();
            let (mean_final_rmse, sd_final_rmse) = mean_sd(&finals);
            StrategySummary {
                strategy,
                runs: mine.len(),
                failures: mine.len() - ok.len(),
                stopped_by_ig: ok.iter().filter(|r| r.session.status == SessionStatus::StoppedByIg).count(),
                mean_final_rmse,
                sd_final_rmse,
                mean_all_t_rmse: mean_sd(&all_t).0,
            }
        })
        .collect();
    Ok(ExperimentResult {
        generator: GENERATOR_ID.to_string(),
        records,
        summary,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn write_preamble<W: Write>(w: &mut W) -> Result<()> {
    writeln!(w, "{EXPORT_HEADER}")?;
    writeln!(w, "# generator {GENERATOR_ID}")?;
    Ok(())
}

/// Per-step rows of many sessions, one `t = 0` prior row each.
pub struct StepWriter<W: Write> {
    inner: csv::Writer<W>,
    filter_ids: Vec<String>,
    names: Vec<String>,
}

impl<W: Write> StepWriter<W> {
    pub fn new(mut out: W, model: &SpectralModel) -> Result<Self> {
        write_preamble(&mut out)?;
        let filter_ids: Vec<String> = model.bank.filters().iter().map(|f| f.id.clone()).collect();
        let names = model.templates.names().to_vec();
        let mut inner = csv::Writer::from_writer(out);
        let mut header: Vec<String> = [
            "strategy",
            "seed",
            "t",
            "filter_id",
            "count",
            "recommended_filter_id",
            "overridden",
            "ig",
            "ess",
            "resampled",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend(filter_ids.iter().map(|id| format!("eig_{id}")));
        for n in &names {
            header.extend([format!("mean_{n}"), format!("lower_{n}"), format!("upper_{n}")]);
        }
        header.push("rmse".into());
        inner.write_record(&header).map_err(csv_err)?;
        Ok(StepWriter { inner, filter_ids, names })
    }

    pub fn write_session(&mut self, session: &SessionState, seed: u64, rmse: &[f64]) -> Result<()> {
        let width = 10 + self.filter_ids.len() + 3 * self.names.len() + 1;
        let mut row = vec![String::new(); width];
        row[0] = session.strategy.to_string();
        row[1] = seed.to_string();
        row[2] = "0".into();
        let p0 = 10 + self.filter_ids.len();
        for (c, comp) in session.prior.components.iter().enumerate() {
            row[p0 + 3 * c] = comp.mean.to_string();
            row[p0 + 3 * c + 1] = comp.lower.to_string();
            row[p0 + 3 * c + 2] = comp.upper.to_string();
        }
        row[width - 1] = fmt_opt(rmse.first().copied());
        self.inner.write_record(&row).map_err(csv_err)?;
        for s in &session.steps {
            let mut row = vec![
                s.strategy.to_string(),
                seed.to_string(),
                s.t.to_string(),
                s.filter_id.clone(),
                s.count.to_string(),
                s.recommended_filter_id.clone(),
                s.overridden.to_string(),
                s.ig.to_string(),
                s.ess.to_string(),
                s.resampled.to_string(),
            ];
            row.extend(s.eig_scores.iter().map(|e| fmt_opt(e.eig)));
            for comp in &s.posterior.components {
                row.extend([comp.mean.to_string(), comp.lower.to_string(), comp.upper.to_string()]);
            }
            row.push(fmt_opt(rmse.get(s.t).copied()));
            self.inner.write_record(&row).map_err(csv_err)?;
        }
        Ok(())
    }

    pub fn finish(self) -> Result<W> {
        self.inner.into_inner().map_err(|e| Error::Io(e.to_string()))
    }
}

pub fn write_steps_csv<W: Write>(out: W, model: &SpectralModel, result: &ExperimentResult) -> Result<W> {
    let mut w = StepWriter::new(out, model)?;
    for r in &result.records {
        if let Some(run) = &r.run {
            w.write_session(&run.session, r.seed, &run.rmse)?;
        }
    }
    w.finish()
}

pub fn write_summary_csv<W: Write>(mut out: W, result: &ExperimentResult) -> Result<W> {
    write_preamble(&mut out)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "strategy",
        "runs",
        "failures",
        "stopped_by_ig",
        "mean_final_rmse",
        "sd_final_rmse",
        "mean_all_t_rmse",
    ])
    .map_err(csv_err)?;
    for s in &result.summary {
        w.write_record([
            s.strategy.to_string(),
            s.runs.to_string(),
            s.failures.to_string(),
            s.stopped_by_ig.to_string(),
            fmt_opt(s.mean_final_rmse),
            fmt_opt(s.sd_final_rmse),
            fmt_opt(s.mean_all_t_rmse),
        ])
        .map_err(csv_err)?;
    }
    for r in result.records.iter().filter(|r| r.error.is_some()) {
        log::info!("failed run {}/{}: {}", r.strategy, r.seed, r.error.as_deref().unwrap_or(""));
    }
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}
