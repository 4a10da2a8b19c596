//! The design loop as a resumable state machine.
//!
//! `recommend` scores and picks a filter; `observe` takes the count, updates
//! the particle weights, resamples and moves when the ESS falls below the
//! threshold, and evaluates the realized information gain. Each call works
//! on copies and commits only on success, so a failed step leaves the
//! session exactly as it was.

use super::{
    choose_filter_gs, choose_filter_smcs, choose_filter_trs, posterior_rmse, posterior_summary, DesignContext,
    ParticleSet, PosteriorSummary, Strategy,
};
use crate::error::{Error, Result};
use crate::pln::CountHistory;
use crate::rng::{stream_rng, streams, RngSnapshot, GENERATOR_ID};
use crate::spectral::{simulate_count, SimulatedSource};
use serde::{Deserialize, Serialize};

/// Interval level of the summaries stored with every step.
pub const SUMMARY_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SessionStatus {
    AwaitingRecommendation,
    AwaitingObservation,
    StoppedByIg,
    Completed,
    Failed,
}

impl SessionStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, SessionStatus::StoppedByIg | SessionStatus::Completed | SessionStatus::Failed)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SessionStatus::AwaitingRecommendation => "awaiting-recommendation",
            SessionStatus::AwaitingObservation => "awaiting-observation",
            SessionStatus::StoppedByIg => "stopped-by-ig",
            SessionStatus::Completed => "completed",
            SessionStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterScore {
    pub filter_id: String,
    /// `None` when no particle could be evaluated on this filter, or the
    /// strategy does not score.
    pub eig: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    /// Step number the recommendation is for (1-based).
    pub t: usize,
    pub filter_id: String,
    pub filter_index: usize,
    pub strategy: Strategy,
    pub eig_scores: Vec<FilterScore>,
    pub posterior: PosteriorSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub t: usize,
    pub filter_id: String,
    pub filter_index: usize,
    pub count: u64,
    pub strategy: Strategy,
    pub recommended_filter_id: String,
    /// The observed filter differs from the recommendation.
    pub overridden: bool,
    pub eig_scores: Vec<FilterScore>,
    #[serde(with = "crate::serde_float::scalar")]
    pub ig: f64,
    /// ESS right after the weight update.
    pub ess: f64,
    pub resampled: bool,
    pub acceptance_rate: Option<f64>,
    pub timestamp_ms: u64,
    pub posterior: PosteriorSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationOutcome {
    pub step: Step,
    pub stopped: bool,
    pub status: SessionStatus,
}

/// Complete resumable state of one design session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub generator: String,
    pub strategy: Strategy,
    pub t_max: Option<usize>,
    pub status: SessionStatus,
    pub particles: ParticleSet,
    pub counts: CountHistory,
    pub steps: Vec<Step>,
    pub prior: PosteriorSummary,
    pub pending: Option<Recommendation>,
    pub inference_rng: RngSnapshot,
    pub strategy_rng: RngSnapshot,
}

impl SessionState {
    pub fn new(ctx: &DesignContext, strategy: Strategy, t_max: Option<usize>) -> Result<Self> {
        if strategy == Strategy::Gs {
            super::greedy_order(&ctx.model)?;
        }
        let seed = ctx.config.rng_seed;
        let particles = ctx.init_particles(&mut stream_rng(seed, streams::PRIOR))?;
        let prior = posterior_summary(&particles, ctx.model.templates.names(), SUMMARY_LEVEL)?;
        Ok(SessionState {
            generator: GENERATOR_ID.to_string(),
            strategy,
            t_max,
            status: if t_max == Some(0) {
                SessionStatus::Completed
            } else {
                SessionStatus::AwaitingRecommendation
            },
            particles,
            counts: CountHistory::default(),
            steps: Vec::new(),
            prior,
            pending: None,
            inference_rng: RngSnapshot::capture(&stream_rng(seed, streams::INFERENCE)),
            strategy_rng: RngSnapshot::capture(&stream_rng(seed, streams::STRATEGY)),
        })
    }

    /// Number of completed observations.
    pub fn t(&self) -> usize {
        self.steps.len()
    }

    fn wrong_state(&self, wanted: &str) -> Error {
        Error::WrongState(format!("session is {}, expected {wanted}", self.status.as_str()))
    }

    /// Score and pick the next filter. Repeating the call before an
    /// observation returns the same recommendation.
    pub fn recommend(&mut self, ctx: &DesignContext) -> Result<Recommendation> {
        match self.status {
            SessionStatus::AwaitingObservation => {
                if let Some(p) = &self.pending {
                    return Ok(p.clone());
                }
            }
            SessionStatus::AwaitingRecommendation => {}
            _ => return Err(self.wrong_state("awaiting-recommendation")),
        }
        let bank = &ctx.model.bank;
        let scored = self.strategy == Strategy::Smcs || ctx.config.score_baselines;
        let scores = if scored {
            ctx.eig_scores(&self.particles, &self.counts)
        } else {
            vec![None; bank.len()]
        };
        let mut strategy_rng = self.strategy_rng.restore().ok_or_else(|| Error::Parse("bad rng snapshot".into()))?;
        let filter_index = match self.strategy {
            Strategy::Smcs => choose_filter_smcs(&ctx.model, &scores)?,
            Strategy::Trs => choose_filter_trs(bank.len(), &mut strategy_rng),
            Strategy::Gs => choose_filter_gs(&ctx.model, self.t())?,
        };
        let rec = Recommendation {
            t: self.t() + 1,
            filter_id: bank.get(filter_index).id.clone(),
            filter_index,
            strategy: self.strategy,
            eig_scores: bank
                .filters()
                .iter()
                .zip(&scores)
                .map(|(f, s)| FilterScore {
                    filter_id: f.id.clone(),
                    eig: *s,
                })
                .collect(),
            posterior: posterior_summary(&self.particles, ctx.model.templates.names(), SUMMARY_LEVEL)?,
        };
        self.strategy_rng = RngSnapshot::capture(&strategy_rng);
        self.pending = Some(rec.clone());
        self.status = SessionStatus::AwaitingObservation;
        Ok(rec)
    }

    /// Record count `y` through bank filter `filter_index`, which may differ
    /// from the recommendation.
    pub fn observe(
        &mut self,
        ctx: &DesignContext,
        filter_index: usize,
        y: u64,
        timestamp_ms: u64,
    ) -> Result<ObservationOutcome> {
        if self.status != SessionStatus::AwaitingObservation {
            return Err(self.wrong_state("awaiting-observation"));
        }
        let rec = self.pending.clone().ok_or_else(|| self.wrong_state("a pending recommendation"))?;
        if filter_index >= ctx.model.bank.len() {
            return Err(Error::UnknownFilter(filter_index.to_string()));
        }
        let prefix = self.counts.clone();
        let full = prefix.with(filter_index, y);
        let (updated, log_l_prev) = match ctx.update_weights(&self.particles, filter_index, y, &prefix) {
            Ok(v) => v,
            Err(Error::DegenerateParticles) => {
                self.status = SessionStatus::Failed;
                return Err(Error::DegenerateParticles);
            }
            Err(e) => return Err(e),
        };
        let ess = updated.effective_sample_size();
        let mut inference_rng = self.inference_rng.restore().ok_or_else(|| Error::Parse("bad rng snapshot".into()))?;
        let (after, stats) = if ess < ctx.config.ess_threshold() {
            let (p, s) = ctx.resample_and_move(&updated, &full, &mut inference_rng)?;
            (p, Some(s))
        } else {
            (updated, None)
        };
        let ig = ctx.realized_information_gain(self.particles.weights(), &log_l_prev, &after, &prefix)?;
        let posterior = posterior_summary(&after, ctx.model.templates.names(), SUMMARY_LEVEL)?;
        let t = self.t() + 1;
        let stopped = ig < ctx.config.ig_threshold;
        let status = if stopped {
            SessionStatus::StoppedByIg
        } else if self.t_max.is_some_and(|m| t >= m) {
            SessionStatus::Completed
        } else {
            SessionStatus::AwaitingRecommendation
        };
        let last_ts = self.steps.last().map_or(0, |s| s.timestamp_ms);
        let step = Step {
            t,
            filter_id: ctx.model.bank.get(filter_index).id.clone(),
            filter_index,
            count: y,
            strategy: self.strategy,
            recommended_filter_id: rec.filter_id.clone(),
            overridden: filter_index != rec.filter_index,
            eig_scores: rec.eig_scores,
            ig,
            ess,
            resampled: stats.is_some(),
            acceptance_rate: stats.map(|s| s.acceptance_rate()),
            timestamp_ms: timestamp_ms.max(last_ts),
            posterior,
        };
        self.particles = after;
        self.counts = full;
        self.steps.push(step.clone());
        self.pending = None;
        self.inference_rng = RngSnapshot::capture(&inference_rng);
        self.status = status;
        Ok(ObservationOutcome { step, stopped, status })
    }
}

/// A finished simulated session with per-step posterior errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedRun {
    pub seed: u64,
    pub session: SessionState,
    /// Posterior RMSE of the weights after `t = 0, 1, ...` observations;
    /// empty when the truth is not a mixture of the fitted templates.
    pub rmse: Vec<f64>,
}

impl SimulatedRun {
    pub fn final_rmse(&self) -> Option<f64> {
        self.rmse.last().copied()
    }

    /// Mean of the RMSE over `t = 1..=T`; the prior value when `T = 0`.
    pub fn mean_rmse(&self) -> Option<f64> {
        match self.rmse.len() {
            0 => None,
            1 => Some(self.rmse[0]),
            n => Some(self.rmse[1..].iter().sum::<f64>() / (n - 1) as f64),
        }
    }
}

/// Run a session against a simulated source until `t_max` or the IG stop.
/// Counts come from the observation stream of `ctx.config.rng_seed`.
pub fn run_simulated(
    ctx: &DesignContext,
    strategy: Strategy,
    source: &SimulatedSource,
    t_max: usize,
) -> Result<SimulatedRun> {
    let mut session = SessionState::new(ctx, strategy, Some(t_max))?;
    let mut obs_rng = stream_rng(ctx.config.rng_seed, streams::OBSERVATION);
    let truth = source.true_weights.as_slice();
    let comparable = truth.len() == ctx.model.templates.len();
    let mut rmse = Vec::new();
    if comparable {
        rmse.push(posterior_rmse(&session.particles, truth));
    }
    while session.status == SessionStatus::AwaitingRecommendation {
        let rec = session.recommend(ctx)?;
        let filter = ctx.model.bank.get(rec.filter_index);
        let y = simulate_count(source, filter, &ctx.model.grid, &mut obs_rng)?;
        session.observe(ctx, rec.filter_index, y, 0)?;
        if comparable {
            rmse.push(posterior_rmse(&session.particles, truth));
        }
    }
    Ok(SimulatedRun {
        seed: ctx.config.rng_seed,
        session,
        rmse,
    })
}
