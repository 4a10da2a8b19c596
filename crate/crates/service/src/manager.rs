//! Session lifecycle shared by the CLI and the HTTP API.
//!
//! Every mutation runs under the session's own lock, works on a copy of the
//! state, persists the copy, and only then replaces the in-memory record. A
//! failed save therefore leaves memory and disk at the previous state.

use crate::config::SessionSpec;
use crate::error::{ServiceError, ServiceResult};
use crate::store::{valid_id, SessionRecord, SessionStore, RECORD_FORMAT};
use seqdesign_core::smc::{
    posterior_summary, DesignContext, ObservationOutcome, PosteriorSummary, Recommendation, SessionState,
    SessionStatus, Step, Strategy,
};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

pub fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

struct Live {
    record: SessionRecord,
    ctx: DesignContext,
}

/// Compact description of a session for listings and status calls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub status: SessionStatus,
    pub strategy: Strategy,
    pub t: usize,
    pub t_max: Option<usize>,
    pub created_ms: u64,
    pub updated_ms: u64,
    pub generator: String,
    pub n_particles: usize,
    pub ig_threshold: f64,
    pub filter_ids: Vec<String>,
    pub template_names: Vec<String>,
    pub posterior: PosteriorSummary,
    pub pending: Option<Recommendation>,
    pub last_step: Option<Step>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryView {
    pub id: String,
    pub prior: PosteriorSummary,
    pub steps: Vec<Step>,
}

pub struct SessionManager {
    store: SessionStore,
    live: Mutex<HashMap<String, Arc<Mutex<Live>>>>,
}

fn context_for(spec: &SessionSpec) -> ServiceResult<DesignContext> {
    // Stored specs are already resolved, so no base directory is needed.
    let model = spec.model.build(Path::new("."))?;
    spec.check(&model)?;
    Ok(DesignContext::new(Arc::new(model), spec.design.clone())?)
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    // A panic inside a mutation never commits, so the data stays valid.
    m.lock().unwrap_or_else(|p| p.into_inner())
}

impl SessionManager {
    pub fn new(store: SessionStore) -> Self {
        SessionManager {
            store,
            live: Mutex::new(HashMap::new()),
        }
    }

    pub fn store(&self) -> &SessionStore {
        &self.store
    }

    fn handle(&self, id: &str) -> ServiceResult<Arc<Mutex<Live>>> {
        let mut live = lock(&self.live);
        if let Some(h) = live.get(id) {
            return Ok(h.clone());
        }
        let record = self.store.load(id)?;
        let ctx = context_for(&record.spec)?;
        let h = Arc::new(Mutex::new(Live { record, ctx }));
        live.insert(id.to_string(), h.clone());
        Ok(h)
    }

    /// Validate, initialise particles and persist a new session. Relative
    /// template paths are resolved against `base_dir`.
    pub fn create(&self, spec: SessionSpec, base_dir: &Path, id: Option<String>) -> ServiceResult<SessionRecord> {
        let id = id.unwrap_or_else(|| uuid::Uuid::new_v4().simple().to_string());
        if !valid_id(&id) {
            return Err(ServiceError::BadRequest(format!(
                "session id `{id}` may only contain ASCII letters, digits, `-` and `_`"
            )));
        }
        let spec = SessionSpec {
            model: spec.model.resolve(base_dir)?,
            ..spec
        };
        let ctx = context_for(&spec)?;
        let state = SessionState::new(&ctx, spec.strategy, spec.t_max)?;
        let now = now_ms();
        let record = SessionRecord {
            format: RECORD_FORMAT.to_string(),
            id: id.clone(),
            created_ms: now,
            updated_ms: now,
            spec,
            state,
        };
        let mut live = lock(&self.live);
        if live.contains_key(&id) || self.store.exists(&id) {
            return Err(ServiceError::BadRequest(format!("session `{id}` already exists")));
        }
        self.store.save(&record)?;
        live.insert(id, Arc::new(Mutex::new(Live { record: record.clone(), ctx })));
        Ok(record)
    }

    pub fn record(&self, id: &str) -> ServiceResult<SessionRecord> {
        let h = self.handle(id)?;
        let record = lock(&h).record.clone();
        Ok(record)
    }

    pub fn view(&self, id: &str) -> ServiceResult<SessionView> {
        let h = self.handle(id)?;
        let live = lock(&h);
        let r = &live.record;
        let model = &live.ctx.model;
        Ok(SessionView {
            id: r.id.clone(),
            status: r.state.status,
            strategy: r.state.strategy,
            t: r.state.t(),
            t_max: r.state.t_max,
            created_ms: r.created_ms,
            updated_ms: r.updated_ms,
            generator: r.state.generator.clone(),
            n_particles: r.state.particles.len(),
            ig_threshold: live.ctx.config.ig_threshold,
            filter_ids: model.bank.filters().iter().map(|f| f.id.clone()).collect(),
            template_names: model.templates.names().to_vec(),
            posterior: r.state.steps.last().map_or_else(|| r.state.prior.clone(), |s| s.posterior.clone()),
            pending: r.state.pending.clone(),
            last_step: r.state.steps.last().cloned(),
        })
    }

    pub fn list(&self) -> ServiceResult<Vec<SessionView>> {
        self.store.list()?.iter().map(|id| self.view(id)).collect()
    }

    /// Run a mutation on a copy, then persist and commit the copy if it
    /// differs. Core operations leave the state untouched on error except
    /// for the terminal `failed` transition, which is kept.
    fn mutate<T>(
        &self,
        id: &str,
        f: impl FnOnce(&DesignContext, &mut SessionState) -> seqdesign_core::Result<T>,
    ) -> ServiceResult<T> {
        let h = self.handle(id)?;
        let mut live = lock(&h);
        let mut state = live.record.state.clone();
        let result = f(&live.ctx, &mut state);
        let changed = state != live.record.state;
        if changed {
            let record = SessionRecord {
                updated_ms: now_ms().max(live.record.updated_ms),
                state,
                ..live.record.clone()
            };
            self.store.save(&record)?;
            live.record = record;
        }
        Ok(result?)
    }

    /// The pending recommendation, computing it if needed. Repeated calls
    /// before an observation return the identical recommendation.
    pub fn recommend(&self, id: &str) -> ServiceResult<Recommendation> {
        self.mutate(id, |ctx, state| state.recommend(ctx))
    }

    /// Record `count` through filter `filter_id`, which may differ from the
    /// recommendation (the step is then marked as overridden).
    pub fn observe(&self, id: &str, filter_id: &str, count: i64) -> ServiceResult<ObservationOutcome> {
        if count < 0 {
            return Err(ServiceError::NegativeCount(count));
        }
        let h = self.handle(id)?;
        let index = lock(&h)
            .ctx
            .model
            .bank
            .index_of(filter_id)
            .ok_or_else(|| seqdesign_core::Error::UnknownFilter(filter_id.to_string()))?;
        self.mutate(id, |ctx, state| state.observe(ctx, index, count as u64, now_ms()))
    }

    pub fn posterior(&self, id: &str, level: f64) -> ServiceResult<PosteriorSummary> {
        let h = self.handle(id)?;
        let live = lock(&h);
        Ok(posterior_summary(
            &live.record.state.particles,
            live.ctx.model.templates.names(),
            level,
        )?)
    }

    pub fn history(&self, id: &str) -> ServiceResult<HistoryView> {
        let h = self.handle(id)?;
        let live = lock(&h);
        Ok(HistoryView {
            id: id.to_string(),
            prior: live.record.state.prior.clone(),
            steps: live.record.state.steps.clone(),
        })
    }

    /// Per-step CSV in the experiment export schema (seed = the session's).
    pub fn export_csv(&self, id: &str) -> ServiceResult<Vec<u8>> {
        let h = self.handle(id)?;
        let live = lock(&h);
        let mut w = seqdesign_core::experiment::StepWriter::new(Vec::new(), &live.ctx.model)?;
        w.write_session(&live.record.state, live.ctx.config.rng_seed, &[])?;
        Ok(w.finish()?)
    }
}
