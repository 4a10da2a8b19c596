//! Particle approximation of the posterior over mixture weights, filter
//! scoring by expected information gain, and the baseline strategies.
//!
//! A [`ParticleSet`] carries, besides the particles and their weights, the
//! joint log pmf of the current count history under each particle. Every
//! particle's bank-wide moments come from a shared [`ParamsCache`], so a
//! particle that survives several steps is never re-linearized.

mod band;
mod session;

pub use band::{eta_band, EtaBand, BAND_PARTICLES};
pub use session::{
    run_simulated, ObservationOutcome, Recommendation, SessionState, SessionStatus, SimulatedRun, Step, SUMMARY_LEVEL,
};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::numeric::log_sum_exp;
use crate::pln::{effective_range, laplace_eval, CountHistory, LaplaceReading};
use crate::polna::{BankParams, ParamsCache, PolnaConfig};
use crate::rng::{substream, DesignRng};
use crate::spectral::{MixtureWeights, SpectralModel};
use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use std::sync::Arc;

/// Components of a Dirichlet proposal centre are clipped to at least this.
pub const PROPOSAL_FLOOR: f64 = 1e-8;
/// EIG values in `[-EIG_CLAMP, 0)` are rounding noise and reported as 0.
pub const EIG_CLAMP: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Maximize expected information gain over the particle posterior.
    Smcs,
    /// Uniformly random filter each step.
    Trs,
    /// Fixed order by template intensity gap (two templates only).
    Gs,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Smcs, Strategy::Trs, Strategy::Gs];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Smcs => "smcs",
            Strategy::Trs => "trs",
            Strategy::Gs => "gs",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "smcs" => Ok(Strategy::Smcs),
            "trs" => Ok(Strategy::Trs),
            "gs" => Ok(Strategy::Gs),
            other => Err(Error::Parse(format!("unknown strategy `{other}` (expected smcs, trs or gs)"))),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resampling {
    #[default]
    Multinomial,
    Systematic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignConfig {
    pub n_particles: usize,
    /// Dirichlet prior; `None` means all ones.
    pub alpha_prior: Option<Vec<f64>>,
    /// Resample when ESS drops below this; `None` means `N / 2`.
    pub ess_threshold: Option<f64>,
    pub ig_threshold: f64,
    /// Concentration multiplier of the Dirichlet move proposal.
    pub mh_step: f64,
    pub range_alpha: f64,
    pub rng_seed: u64,
    pub polna: PolnaConfig,
    pub resampling: Resampling,
    pub execution: Execution,
    /// Also score every filter when the strategy is not SMCS.
    pub score_baselines: bool,
}

impl Default for DesignConfig {
    fn default() -> Self {
        DesignConfig {
            n_particles: 1000,
            alpha_prior: None,
            ess_threshold: None,
            ig_threshold: 1e-4,
            mh_step: 100.0,
            range_alpha: 0.05,
            rng_seed: 0,
            polna: PolnaConfig::default(),
            resampling: Resampling::Multinomial,
            execution: Execution::Parallel,
            score_baselines: false,
        }
    }
}

impl DesignConfig {
    pub fn alpha(&self, m: usize) -> Vec<f64> {
        self.alpha_prior.clone().unwrap_or_else(|| vec![1.0; m])
    }

    pub fn ess_threshold(&self) -> f64 {
        self.ess_threshold.unwrap_or(self.n_particles as f64 / 2.0)
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        let n = self.n_particles;
        if n < 2 {
            return Err(Error::InvalidConfig(format!("n_particles must be at least 2, got {n}")));
        }
        let c = self.ess_threshold();
        if !(c > 1.0 && c <= n as f64) {
            return Err(Error::InvalidConfig(format!("ess_threshold must lie in (1, {n}], got {c}")));
        }
        if !(self.mh_step > 0.0) {
            return Err(Error::InvalidConfig(format!("mh_step must be positive, got {}", self.mh_step)));
        }
        if !(self.ig_threshold >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "ig_threshold must be nonnegative, got {}",
                self.ig_threshold
            )));
        }
        if !(self.range_alpha > 0.0 && self.range_alpha < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "range_alpha must lie in (0, 1), got {}",
                self.range_alpha
            )));
        }
        let alpha = self.alpha(m);
        if alpha.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: alpha.len(),
                context: "alpha_prior vs template count",
            });
        }
        if alpha.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(Error::InvalidConfig("alpha_prior entries must be positive".into()));
        }
        if self.polna.mc_samples < crate::polna::mc::MIN_SAMPLES {
            return Err(Error::InvalidConfig(format!(
                "polna.mc_samples must be at least {}",
                crate::polna::mc::MIN_SAMPLES
            )));
        }
        Ok(())
    }
}

/// Weighted particles over the simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleSet {
    particles: Vec<MixtureWeights>,
    weights: Vec<f64>,
    /// `ln p(history | omega_i)`; `-inf` for zero-weight particles that were
    /// not re-evaluated.
    #[serde(with = "crate::serde_float::vec")]
    log_likelihood: Vec<f64>,
}

impl ParticleSet {
    pub fn new(particles: Vec<MixtureWeights>, weights: Vec<f64>, log_likelihood: Vec<f64>) -> Result<Self> {
        let n = particles.len();
        if n == 0 {
            return Err(Error::InvalidConfig("particle set is empty".into()));
        }
        for (len, context) in [(weights.len(), "particle weights"), (log_likelihood.len(), "particle log likelihoods")] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: len,
                    context,
                });
            }
        }
        let m = particles[0].len();
        if let Some(p) = particles.iter().find(|p| p.len() != m) {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: p.len(),
                context: "particle dimension",
            });
        }
        if weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::InvalidConfig("particle weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig(format!("particle weights sum to {total}, not 1")));
        }
        Ok(ParticleSet {
            particles,
            weights,
            log_likelihood,
        })
    }

    /// Equally weighted particles with an empty history.
    pub fn uniform(particles: Vec<MixtureWeights>) -> Result<Self> {
        let n = particles.len();
        ParticleSet::new(particles, vec![1.0 / n as f64; n], vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.particles[0].len()
    }

    pub fn particles(&self) -> &[MixtureWeights] {
        &self.particles
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn log_likelihood(&self) -> &[f64] {
        &self.log_likelihood
    }

    pub fn effective_sample_size(&self) -> f64 {
        effective_sample_size(&self.weights)
    }

    /// Weighted mean of every component.
    pub fn mean(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dimension()];
        for (p, &w) in self.particles.iter().zip(&self.weights) {
            for (o, v) in out.iter_mut().zip(p.as_slice()) {
                *o += w * v;
            }
        }
        out
    }
}

/// `(sum psi^2)^-1`.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

/// Probabilities proportional to `exp(log_w)`.
fn normalize_log_weights(log_w: &[f64]) -> Result<Vec<f64>> {
    let total = log_sum_exp(log_w.iter().copied());
    if !total.is_finite() {
        return Err(Error::DegenerateParticles);
    }
    let mut w: Vec<f64> = log_w.iter().map(|&l| (l - total).exp()).collect();
    // Exact renormalization keeps the sum within one ulp per particle.
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    Ok(w)
}

/// One draw from `Dir(alpha)`, generated in log space so tiny
/// concentrations do not underflow to exact zeros.
pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if alpha.len() == 1 {
        return Ok(vec![1.0]);
    }
    let mut log_g = Vec::with_capacity(alpha.len());
    for &a in alpha {
        // G(a) = G(a + 1) U^{1/a}.
        let g = Gamma::new(a + 1.0, 1.0).map_err(|e| Error::InvalidConfig(format!("gamma shape {a}: {e}")))?;
        let u: f64 = rng.random::<f64>();
        let x: f64 = g.sample(rng);
        log_g.push(x.ln() + u.ln() / a);
    }
    let total = log_sum_exp(log_g.iter().copied());
    Ok(log_g.iter().map(|l| (l - total).exp()).collect())
}

/// `ln Dir(x | alpha)`; `-inf` or `+inf` on the simplex boundary.
pub fn dirichlet_log_density(x: &[f64], alpha: &[f64]) -> f64 {
    if x.len() == 1 {
        return 0.0;
    }
    let norm = ln_gamma(alpha.iter().sum()) - alpha.iter().map(|&a| ln_gamma(a)).sum::<f64>();
    norm + x.iter().zip(alpha).map(|(&xi, &a)| (a - 1.0) * xi.ln()).sum::<f64>()
}

/// Proposal concentration `tau * omega` after flooring and renormalizing.
fn proposal_alpha(omega: &[f64], tau: f64) -> Vec<f64> {
    let floored: Vec<f64> = omega.iter().map(|&v| v.max(PROPOSAL_FLOOR)).collect();
    let s: f64 = floored.iter().sum();
    floored.iter().map(|v| tau * v / s).collect()
}

/// Per-filter count ranges and per-particle predictive curves, as used by
/// the EIG sums.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveTable {
    /// Inclusive `(M_L, M_U)` per filter, or `None` if no particle could be
    /// evaluated.
    pub ranges: Vec<Option<(u64, u64)>>,
    /// `log_p[i][f][y - M_L]`; `None` where the evaluation failed.
    pub log_p: Vec<Vec<Option<Vec<f64>>>>,
}

/// `sum_i psi_i sum_y p_i(y) ln(p_i(y) / pbar(y))` with
/// `pbar = sum_i psi_i p_i`. `log_p[i]` are the log predictives of particle
/// `i` over one common set of outcomes.
pub fn eig_from_log_predictives(weights: &[f64], log_p: &[&[f64]]) -> f64 {
    let n_y = log_p.first().map_or(0, |c| c.len());
    let mut eig = 0.0;
    for y in 0..n_y {
        let log_bar = log_sum_exp(
            weights
                .iter()
                .zip(log_p)
                .filter(|(&w, _)| w > 0.0)
                .map(|(&w, c)| w.ln() + c[y]),
        );
        if !log_bar.is_finite() {
            continue;
        }
        for (&w, c) in weights.iter().zip(log_p) {
            let lp = c[y];
            if w > 0.0 && lp > f64::NEG_INFINITY {
                eig += w * lp.exp() * (lp - log_bar);
            }
        }
    }
    if (-EIG_CLAMP..0.0).contains(&eig) {
        0.0
    } else {
        eig
    }
}

/// Shared inputs of every design operation.
#[derive(Debug, Clone)]
pub struct DesignContext {
    pub model: Arc<SpectralModel>,
    pub config: DesignConfig,
    pub cache: Arc<ParamsCache>,
}

impl DesignContext {
    pub fn new(model: Arc<SpectralModel>, config: DesignConfig) -> Result<Self> {
        DesignContext::with_cache(model, config, Arc::new(ParamsCache::default()))
    }

    pub fn with_cache(model: Arc<SpectralModel>, config: DesignConfig, cache: Arc<ParamsCache>) -> Result<Self> {
        config.validate(model.templates.len())?;
        Ok(DesignContext { model, config, cache })
    }

    fn exec(&self) -> Execution {
        self.config.execution
    }

    /// `N` i.i.d. `Dir(alpha)` particles with weights `1/N`.
    pub fn init_particles(&self, rng: &mut DesignRng) -> Result<ParticleSet> {
        let alpha = self.config.alpha(self.model.templates.len());
        let particles = (0..self.config.n_particles)
            .map(|_| sample_dirichlet(&alpha, rng).and_then(MixtureWeights::normalized))
            .collect::<Result<Vec<_>>>()?;
        ParticleSet::uniform(particles)
    }

    pub fn bank_params(&self, omega: &MixtureWeights) -> Result<Arc<BankParams>> {
        self.cache.get_or_compute(&self.model, omega, &self.config.polna)
    }

    /// Bank params of every particle with positive weight.
    fn particle_banks(&self, pset: &ParticleSet) -> Vec<Option<Result<Arc<BankParams>>>> {
        exec::map_indexed(self.exec(), pset.len(), |i| {
            (pset.weights[i] > 0.0).then(|| self.bank_params(&pset.particles[i]))
        })
    }

    /// Joint log pmf of `counts` under one particle.
    pub fn history_log_likelihood(&self, omega: &MixtureWeights, counts: &CountHistory) -> Result<f64> {
        if counts.is_empty() {
            return Ok(0.0);
        }
        let bank = self.bank_params(omega)?;
        crate::pln::history_log_pmf(&bank, counts)
    }

    /// `ln p(y | history, omega)` on `y = lo..=hi` for bank filter `filter`.
    fn predictive_curve(
        bank: &BankParams,
        counts: &CountHistory,
        base: f64,
        filter: usize,
        (lo, hi): (u64, u64),
    ) -> Result<Vec<f64>> {
        let agg = counts.with(filter, 0).aggregate();
        let slot = agg.uniques.iter().position(|&u| u == filter).expect("candidate is in the history");
        let params = agg.params(bank);
        let mut sums = agg.sums.clone();
        let base_sum = sums[slot];
        let mut warm: Option<Vec<f64>> = None;
        let mut out = Vec::with_capacity((hi - lo + 1) as usize);
        for y in lo..=hi {
            sums[slot] = base_sum + y;
            let ln_fact = agg.ln_factorials + crate::numeric::ln_factorial(y);
            let eval = laplace_eval(&params, &sums, ln_fact, LaplaceReading::FullLinear, warm.as_deref())?;
            out.push(eval.log_pmf - base);
            warm = Some(eval.lambert.w);
        }
        Ok(out)
    }

    /// Union effective ranges and predictive curves for every filter.
    pub fn predictive_table(&self, pset: &ParticleSet, counts: &CountHistory) -> PredictiveTable {
        let n_filters = self.model.bank.len();
        let banks = self.particle_banks(pset);
        let mut ranges: Vec<Option<(u64, u64)>> = vec![None; n_filters];
        for (i, b) in banks.iter().enumerate() {
            match b {
                Some(Ok(bank)) => {
                    for (f, slot) in ranges.iter_mut().enumerate() {
                        match effective_range(bank.mu[f], bank.sigma[(f, f)], self.config.range_alpha) {
                            Ok((l, u)) => {
                                *slot = Some(slot.map_or((l, u), |(sl, su)| (sl.min(l), su.max(u))));
                            }
                            Err(e) => log::warn!("particle {i}: no effective range on filter {f}: {e}"),
                        }
                    }
                }
                Some(Err(e)) => log::warn!("particle {i} excluded from scoring: {e}"),
                None => {}
            }
        }
        let log_p = exec::map_indexed(self.exec(), pset.len(), |i| match &banks[i] {
            Some(Ok(bank)) => (0..n_filters)
                .map(|f| {
                    let range = ranges[f]?;
                    match Self::predictive_curve(bank, counts, pset.log_likelihood[i], f, range) {
                        Ok(c) => Some(c),
                        Err(e) => {
                            log::warn!("particle {i} excluded on filter {f}: {e}");
                            None
                        }
                    }
                })
                .collect(),
            _ => vec![None; n_filters],
        });
        PredictiveTable { ranges, log_p }
    }

    /// EIG of every bank filter; `None` where no particle could be scored.
    pub fn eig_scores(&self, pset: &ParticleSet, counts: &CountHistory) -> Vec<Option<f64>> {
        let table = self.predictive_table(pset, counts);
        (0..self.model.bank.len())
            .map(|f| {
                let mut w = Vec::new();
                let mut curves = Vec::new();
                for (i, row) in table.log_p.iter().enumerate() {
                    if let Some(c) = &row[f] {
                        w.push(pset.weights[i]);
                        curves.push(c.as_slice());
                    }
                }
                let total: f64 = w.iter().sum();
                if curves.is_empty() || !(total > 0.0) {
                    return None;
                }
                if w.len() < pset.len() {
                    log::debug!("filter {f}: scored {} of {} particles", w.len(), pset.len());
                }
                w.iter_mut().for_each(|v| *v /= total);
                Some(eig_from_log_predictives(&w, &curves))
            })
            .collect()
    }

    /// EIG for a single candidate filter.
    pub fn expected_information_gain(&self, pset: &ParticleSet, candidate: usize, counts: &CountHistory) -> Result<f64> {
        self.eig_scores(pset, counts)
            .get(candidate)
            .copied()
            .ok_or_else(|| Error::UnknownFilter(candidate.to_string()))?
            .ok_or_else(|| Error::NoScorableFilter(self.model.bank.get(candidate).id.clone()))
    }

    /// `psi_i <- psi_i p(y | history, omega_i)`, renormalized in log space.
    /// `counts` is the history before `y`. Returns the new set and
    /// `ln L_{t-1}^(i)` (`-inf` for particles that carry no weight).
    pub fn update_weights(
        &self,
        pset: &ParticleSet,
        filter: usize,
        y: u64,
        counts: &CountHistory,
    ) -> Result<(ParticleSet, Vec<f64>)> {
        let next = counts.with(filter, y);
        let joint: Vec<Option<f64>> = exec::map_indexed(self.exec(), pset.len(), |i| {
            if pset.weights[i] == 0.0 {
                return None;
            }
            match self.history_log_likelihood(&pset.particles[i], &next) {
                Ok(v) => Some(v),
                Err(e) => {
                    log::warn!("particle {i} dropped in weight update: {e}");
                    None
                }
            }
        });
        let log_l: Vec<f64> = joint
            .iter()
            .zip(&pset.log_likelihood)
            .map(|(j, old)| j.map_or(f64::NEG_INFINITY, |v| v - old))
            .collect();
        let log_w: Vec<f64> = pset.weights.iter().zip(&log_l).map(|(w, l)| w.ln() + l).collect();
        let weights = normalize_log_weights(&log_w)?;
        let log_likelihood = joint.iter().map(|j| j.unwrap_or(f64::NEG_INFINITY)).collect();
        Ok((
            ParticleSet {
                particles: pset.particles.clone(),
                weights,
                log_likelihood,
            },
            log_l,
        ))
    }

    /// Resample to equal weights, then one Dirichlet Metropolis-Hastings move
    /// per particle. `counts` is the full history including the newest count.
    pub fn resample_and_move(
        &self,
        pset: &ParticleSet,
        counts: &CountHistory,
        rng: &mut DesignRng,
    ) -> Result<(ParticleSet, MoveStats)> {
        let n = pset.len();
        let picks = resample_indices(&pset.weights, n, self.config.resampling, rng)?;
        let m = pset.dimension();
        let uniform = vec![1.0 / n as f64; n];
        if m == 1 {
            return Ok((
                ParticleSet {
                    particles: picks.iter().map(|&k| pset.particles[k].clone()).collect(),
                    weights: uniform,
                    log_likelihood: picks.iter().map(|&k| pset.log_likelihood[k]).collect(),
                },
                MoveStats { accepted: 0, proposed: 0 },
            ));
        }
        let alpha = self.config.alpha(m);
        let tau = self.config.mh_step;
        let child = substream(rng);
        let moved: Vec<(MixtureWeights, f64, bool)> = exec::map_indexed(self.exec(), n, |slot| {
            let k = picks[slot];
            let current = &pset.particles[k];
            let ll = pset.log_likelihood[k];
            let mut prng = child(slot);
            match self.mh_move(current, ll, counts, &alpha, tau, &mut prng) {
                Ok(Some((proposal, ll_new))) => (proposal, ll_new, true),
                Ok(None) => (current.clone(), ll, false),
                Err(e) => {
                    log::warn!("move rejected for particle {slot}: {e}");
                    (current.clone(), ll, false)
                }
            }
        });
        let accepted = moved.iter().filter(|m| m.2).count();
        let mut particles = Vec::with_capacity(n);
        let mut log_likelihood = Vec::with_capacity(n);
        for (p, ll, _) in moved {
            particles.push(p);
            log_likelihood.push(ll);
        }
        Ok((
            ParticleSet {
                particles,
                weights: uniform,
                log_likelihood,
            },
            MoveStats { accepted, proposed: n },
        ))
    }

    /// One MH step; `Some` with the proposal and its log likelihood if
    /// accepted.
    fn mh_move(
        &self,
        current: &MixtureWeights,
        ll: f64,
        counts: &CountHistory,
        alpha: &[f64],
        tau: f64,
        rng: &mut DesignRng,
    ) -> Result<Option<(MixtureWeights, f64)>> {
        let omega = current.as_slice();
        let forward = proposal_alpha(omega, tau);
        let star = sample_dirichlet(&forward, rng)?;
        let u: f64 = rng.random();
        if star.iter().any(|&v| !(v > 0.0)) {
            return Ok(None);
        }
        let star = MixtureWeights::normalized(star)?;
        let backward = proposal_alpha(star.as_slice(), tau);
        let ll_star = self.history_log_likelihood(&star, counts)?;
        let log_a = ll_star + dirichlet_log_density(star.as_slice(), alpha) + dirichlet_log_density(omega, &backward)
            - ll
            - dirichlet_log_density(omega, alpha)
            - dirichlet_log_density(star.as_slice(), &forward);
        if log_a.is_nan() {
            return Ok(None);
        }
        Ok((u.ln() < log_a).then_some((star, ll_star)))
    }

    /// `IG_t = sum_i psi_t^(i) ln(L_t^(i) / sum_i' psi_{t-1}^(i') L_{t-1}^(i'))`.
    ///
    /// `prior` and `log_l_prev` are the weights and log predictives before
    /// the update; `after` is the set after update and any move, and `prefix`
    /// the history without the newest count.
    pub fn realized_information_gain(
        &self,
        prior: &[f64],
        log_l_prev: &[f64],
        after: &ParticleSet,
        prefix: &CountHistory,
    ) -> Result<f64> {
        let log_denominator = log_sum_exp(
            prior
                .iter()
                .zip(log_l_prev)
                .filter(|(&w, _)| w > 0.0)
                .map(|(&w, &l)| w.ln() + l),
        );
        let mut ig = 0.0;
        for (i, p) in after.particles.iter().enumerate() {
            let w = after.weights[i];
            if w == 0.0 {
                continue;
            }
            let log_l = after.log_likelihood[i] - self.history_log_likelihood(p, prefix)?;
            ig += w * (log_l - log_denominator);
        }
        Ok(ig)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveStats {
    pub accepted: usize,
    pub proposed: usize,
}

impl MoveStats {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// `count` ancestor indices drawn from `weights`.
pub fn resample_indices<R: Rng + ?Sized>(
    weights: &[f64],
    count: usize,
    scheme: Resampling,
    rng: &mut R,
) -> Result<Vec<usize>> {
    match scheme {
        Resampling::Multinomial => {
            let dist = WeightedIndex::new(weights).map_err(|_| Error::DegenerateParticles)?;
            Ok((0..count).map(|_| dist.sample(rng)).collect())
        }
        Resampling::Systematic => {
            let u0: f64 = rng.random::<f64>() / count as f64;
            let mut out = Vec::with_capacity(count);
            let mut cum = weights[0];
            let mut k = 0;
            for j in 0..count {
                let u = u0 + j as f64 / count as f64;
                while u > cum && k + 1 < weights.len() {
                    k += 1;
                    cum += weights[k];
                }
                out.push(k);
            }
            Ok(out)
        }
    }
}

/// Scores closer than this (nats) count as tied. Mixing identical templates
/// with different weights perturbs `eta` by rounding only, which leaves EIG
/// noise near 1e-17 that must not decide the choice.
pub const EIG_TIE_TOL: f64 = 1e-12;

/// Argmax of the scores; ties (within [`EIG_TIE_TOL`]) and unscored filters
/// resolve to the lowest id.
pub fn choose_filter_smcs(model: &SpectralModel, scores: &[Option<f64>]) -> Result<usize> {
    let bank = &model.bank;
    let best = scores
        .iter()
        .filter_map(|s| *s)
        .fold(f64::NEG_INFINITY, f64::max);
    scores
        .iter()
        .enumerate()
        .filter(|(_, s)| s.is_some_and(|s| s >= best - EIG_TIE_TOL))
        .map(|(f, _)| f)
        .min_by(|&a, &b| bank.get(a).id.cmp(&bank.get(b).id))
        .ok_or_else(|| Error::NoScorableFilter("every filter failed evaluation".into()))
}

/// Uniform over the bank.
pub fn choose_filter_trs<R: Rng + ?Sized>(bank_len: usize, rng: &mut R) -> usize {
    rng.random_range(0..bank_len)
}

/// Filters by decreasing `|Lambda(B, mu_1) - Lambda(B, mu_2)|`, ties by id.
pub fn greedy_order(model: &SpectralModel) -> Result<Vec<usize>> {
    let m = model.templates.len();
    if m != 2 {
        return Err(Error::GreedyNeedsTwoTemplates(m));
    }
    let gap: Vec<f64> = (0..model.bank.len())
        .map(|f| (model.intensity(model.templates.row(0), f) - model.intensity(model.templates.row(1), f)).abs())
        .collect();
    let mut order: Vec<usize> = (0..model.bank.len()).collect();
    order.sort_by(|&a, &b| {
        gap[b]
            .total_cmp(&gap[a])
            .then_with(|| model.bank.get(a).id.cmp(&model.bank.get(b).id))
    });
    Ok(order)
}

/// The `step_index`-th greedy filter, wrapping modulo the bank size.
pub fn choose_filter_gs(model: &SpectralModel, step_index: usize) -> Result<usize> {
    let order = greedy_order(model)?;
    Ok(order[step_index % order.len()])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub level: f64,
    pub ess: f64,
    pub components: Vec<ComponentSummary>,
}

/// Weighted-CDF inversion with linear interpolation between the cumulative
/// midpoints of the sorted atoms. Uniform weights give Hazen quantiles.
pub fn weighted_quantile(values: &[f64], weights: &[f64], p: f64) -> f64 {
    let mut idx: Vec<usize> = (0..values.len()).filter(|&i| weights[i] > 0.0).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let total: f64 = idx.iter().map(|&i| weights[i]).sum();
    let mut cum = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for &i in &idx {
        let mid = (cum + weights[i] / 2.0) / total;
        cum += weights[i];
        if mid >= p {
            return match prev {
                None => values[i],
                Some((pm, pv)) => pv + (values[i] - pv) * (p - pm) / (mid - pm),
            };
        }
        prev = Some((mid, values[i]));
    }
    prev.map_or(f64::NAN, |(_, v)| v)
}

pub fn posterior_summary(pset: &ParticleSet, names: &[String], level: f64) -> Result<PosteriorSummary> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfig(format!("level must lie in (0, 1), got {level}")));
    }
    let m = pset.dimension();
    let mean = pset.mean();
    let components = (0..m)
        .map(|c| {
            let values: Vec<f64> = pset.particles.iter().map(|p| p.as_slice()[c]).collect();
            let var: f64 = values
                .iter()
                .zip(&pset.weights)
                .map(|(v, w)| w * (v - mean[c]).powi(2))
                .sum();
            ComponentSummary {
                name: names.get(c).cloned().unwrap_or_else(|| format!("w{}", c + 1)),
                mean: mean[c],
                sd: var.sqrt(),
                lower: weighted_quantile(&values, &pset.weights, (1.0 - level) / 2.0),
                upper: weighted_quantile(&values, &pset.weights, (1.0 + level) / 2.0),
            }
        })
        .collect();
    Ok(PosteriorSummary {
        level,
        ess: pset.effective_sample_size(),
        components,
    })
}

/// `sqrt(sum_i psi_i |omega_i - truth|^2 / m)`; for two components this is
/// the posterior root mean square error of either weight.
pub fn posterior_rmse(pset: &ParticleSet, truth: &[f64]) -> f64 {
    let m = truth.len() as f64;
    pset.particles
        .iter()
        .zip(&pset.weights)
        .map(|(p, w)| w * p.as_slice().iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / m)
        .sum::<f64>()
        .sqrt()
}
