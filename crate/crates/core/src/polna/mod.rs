//! Log-normal approximation of the joint law of filter intensities.
//!
//! For mixture weights `omega`, `log Lambda(B)` across a set of filters is
//! approximated by a multivariate normal. Bank-wide moments are computed
//! once per `omega`; every filter history restricts them, since the
//! recursion for a pair of filters never looks at a third.

pub mod g_functions;
pub mod mc;
pub mod safak;

use crate::error::{Error, Result};
use crate::rng::{stream_rng, streams};
use crate::spectral::{MixtureWeights, SpectralModel};
use dashmap::DashMap;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

pub use g_functions::{g_functions, GValues};
pub use safak::{CrossSchedule, SafakAccumulator, SafakOptions};

/// `(mu, Sigma)` of the unique filters of a history, plus how often each
/// was observed.
#[derive(Debug, Clone, PartialEq)]
pub struct PlnParams {
    pub mu: Vec<f64>,
    pub sigma: DMatrix<f64>,
    pub multiplicities: Vec<u64>,
}

impl PlnParams {
    pub fn new(mu: Vec<f64>, sigma: DMatrix<f64>, multiplicities: Vec<u64>) -> Result<Self> {
        let u = mu.len();
        if sigma.nrows() != u || sigma.ncols() != u || multiplicities.len() != u {
            return Err(Error::DimensionMismatch {
                expected: u,
                got: sigma.nrows(),
                context: "PLN parameter shapes",
            });
        }
        if multiplicities.contains(&0) {
            return Err(Error::InvalidConfig("multiplicities must be positive".into()));
        }
        Ok(PlnParams {
            mu,
            sigma,
            multiplicities,
        })
    }

    /// One observation of a single filter.
    pub fn univariate(mu: f64, variance: f64) -> Self {
        PlnParams {
            mu: vec![mu],
            sigma: DMatrix::from_element(1, 1, variance),
            multiplicities: vec![1],
        }
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn total_observations(&self) -> u64 {
        self.multiplicities.iter().sum()
    }

    /// Reorder the unique filters by `perm` (new position `a` takes old
    /// position `perm[a]`).
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let u = self.len();
        PlnParams {
            mu: perm.iter().map(|&p| self.mu[p]).collect(),
            sigma: DMatrix::from_fn(u, u, |a, b| self.sigma[(perm[a], perm[b])]),
            multiplicities: perm.iter().map(|&p| self.multiplicities[p]).collect(),
        }
    }
}

/// Result of stable-order deduplication.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Dedup<T> {
    pub uniques: Vec<T>,
    pub multiplicities: Vec<u64>,
    /// `index_map[t]` is the unique index of history entry `t`.
    pub index_map: Vec<usize>,
}

pub fn dedupe_filters<T: PartialEq + Clone>(history: &[T]) -> Dedup<T> {
    let mut out = Dedup {
        uniques: Vec::new(),
        multiplicities: Vec::new(),
        index_map: Vec::with_capacity(history.len()),
    };
    for item in history {
        match out.uniques.iter().position(|u| u == item) {
            Some(i) => {
                out.multiplicities[i] += 1;
                out.index_map.push(i);
            }
            None => {
                out.index_map.push(out.uniques.len());
                out.uniques.push(item.clone());
                out.multiplicities.push(1);
            }
        }
    }
    out
}

/// Moments of `log Lambda` for every filter of the bank.
#[derive(Debug, Clone, PartialEq)]
pub struct BankParams {
    pub mu: Vec<f64>,
    pub sigma: DMatrix<f64>,
    /// True when the deterministic recursion failed and Monte Carlo was used.
    pub from_fallback: bool,
}

impl BankParams {
    /// Restrict to the unique bank indices `uniques` with observation counts
    /// `multiplicities`.
    pub fn restrict(&self, uniques: &[usize], multiplicities: &[u64]) -> PlnParams {
        let u = uniques.len();
        PlnParams {
            mu: uniques.iter().map(|&i| self.mu[i]).collect(),
            sigma: DMatrix::from_fn(u, u, |a, b| self.sigma[(uniques[a], uniques[b])]),
            multiplicities: multiplicities.to_vec(),
        }
    }

    /// Params for a history of bank indices.
    pub fn for_history(&self, history: &[usize]) -> PlnParams {
        let d = dedupe_filters(history);
        self.restrict(&d.uniques, &d.multiplicities)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolnaMode {
    #[default]
    Safak,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolnaConfig {
    pub mode: PolnaMode,
    pub cross: CrossSchedule,
    /// Samples for Monte Carlo mode and for the fallback.
    pub mc_samples: usize,
    /// Seed for Monte Carlo draws; each `omega` gets its own stream.
    pub mc_seed: u64,
}

impl Default for PolnaConfig {
    fn default() -> Self {
        PolnaConfig {
            mode: PolnaMode::Safak,
            cross: CrossSchedule::Sequential,
            mc_samples: 10_000,
            mc_seed: 0,
        }
    }
}

/// Weights rounded to `1e-10`, the cache identity of `omega`.
fn quantize(weights: &MixtureWeights) -> Vec<i64> {
    weights.as_slice().iter().map(|w| (w * 1e10).round() as i64).collect()
}

fn mc_stream_seed(base: u64, key: &[i64]) -> u64 {
    // FNV-1a over the quantized weights keeps Monte Carlo draws a pure
    // function of omega.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ base;
    for v in key {
        for byte in v.to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

/// Bank-wide moments for `weights`.
pub fn bank_params(model: &SpectralModel, weights: &MixtureWeights, config: &PolnaConfig) -> Result<BankParams> {
    let eta = model.mean_log_intensity(weights)?;
    let ranges: Vec<_> = (0..model.bank.len()).map(|i| model.filter_points(i)).collect();
    let key = quantize(weights);
    let mc = || {
        let mut rng = stream_rng(mc_stream_seed(config.mc_seed, &key), streams::POLNA_MC);
        mc::mc_moments(model, &eta, &ranges, config.mc_samples, &mut rng)
    };
    match config.mode {
        PolnaMode::MonteCarlo => {
            let (mu, sigma) = mc()?;
            Ok(BankParams {
                mu,
                sigma,
                from_fallback: false,
            })
        }
        PolnaMode::Safak => match safak::safak_moments(model, &eta, &ranges, SafakOptions { cross: config.cross }) {
            Ok((mu, sigma)) => Ok(BankParams {
                mu,
                sigma,
                from_fallback: false,
            }),
            Err(e @ (Error::SeriesNonConvergence { .. } | Error::CorrelationOutOfRange { .. })) => {
                log::warn!("moment recursion failed ({e}); using Monte Carlo moments");
                let (mu, sigma) = mc()?;
                Ok(BankParams {
                    mu,
                    sigma,
                    from_fallback: true,
                })
            }
            Err(e) => Err(e),
        },
    }
}

/// Deterministic params for a history of bank indices.
pub fn polna_params_safak(model: &SpectralModel, weights: &MixtureWeights, history: &[usize]) -> Result<PlnParams> {
    let d = dedupe_filters(history);
    let eta = model.mean_log_intensity(weights)?;
    let ranges: Vec<_> = d.uniques.iter().map(|&i| model.filter_points(i)).collect();
    let (mu, sigma) = safak::safak_moments(model, &eta, &ranges, SafakOptions::default())?;
    PlnParams::new(mu, sigma, d.multiplicities)
}

/// Monte Carlo params for a history of bank indices.
pub fn polna_params_mc<R: rand::Rng + ?Sized>(
    model: &SpectralModel,
    weights: &MixtureWeights,
    history: &[usize],
    n_samples: usize,
    rng: &mut R,
) -> Result<PlnParams> {
    let d = dedupe_filters(history);
    let eta = model.mean_log_intensity(weights)?;
    let ranges: Vec<_> = d.uniques.iter().map(|&i| model.filter_points(i)).collect();
    let (mu, sigma) = mc::mc_moments(model, &eta, &ranges, n_samples, rng)?;
    PlnParams::new(mu, sigma, d.multiplicities)
}

/// Concurrent memo of bank-wide params keyed by quantized `omega`.
///
/// Values are a pure function of the key, so concurrent fills of the same
/// entry are harmless. The map is cleared once it exceeds `capacity`.
#[derive(Debug)]
pub struct ParamsCache {
    map: DashMap<Vec<i64>, Arc<BankParams>>,
    capacity: usize,
}

impl Default for ParamsCache {
    fn default() -> Self {
        ParamsCache::new(200_000)
    }
}

impl ParamsCache {
    pub fn new(capacity: usize) -> Self {
        ParamsCache {
            map: DashMap::new(),
            capacity,
        }
    }

    pub fn get_or_compute(
        &self,
        model: &SpectralModel,
        weights: &MixtureWeights,
        config: &PolnaConfig,
    ) -> Result<Arc<BankParams>> {
        let key = quantize(weights);
        if let Some(hit) = self.map.get(&key) {
            return Ok(hit.clone());
        }
        let value = Arc::new(bank_params(model, weights, config)?);
        if self.map.len() >= self.capacity {
            self.map.clear();
        }
        self.map.insert(key, value.clone());
        Ok(value)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn clear(&self) {
        self.map.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use crate::spectral::KernelConfig;

    #[test]
    fn dedupe_examples() {
        let d = dedupe_filters(&["A", "B", "A"]);
        assert_eq!(d.uniques, ["A", "B"]);
        assert_eq!(d.multiplicities, [2, 1]);
        assert_eq!(d.index_map, [0, 1, 0]);
        let d = dedupe_filters(&[3, 1, 2]);
        assert_eq!(d.multiplicities, [1, 1, 1]);
        let d = dedupe_filters::<u8>(&[]);
        assert!(d.uniques.is_empty() && d.index_map.is_empty());
    }

    #[test]
    fn restriction_matches_direct_computation() {
        let model = SpectralModel::trigonometric_example(200, KernelConfig::squared_exponential(0.2, 0.02)).unwrap();
        let w = MixtureWeights::new(vec![0.3, 0.7]).unwrap();
        let bank = bank_params(&model, &w, &PolnaConfig::default()).unwrap();
        let direct = polna_params_safak(&model, &w, &[4, 2, 4]).unwrap();
        let restricted = bank.for_history(&[4, 2, 4]);
        assert_eq!(restricted.multiplicities, [2, 1]);
        for a in 0..2 {
            assert!((direct.mu[a] - restricted.mu[a]).abs() < 1e-14);
            for b in 0..2 {
                assert!((direct.sigma[(a, b)] - restricted.sigma[(a, b)]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn monte_carlo_is_deterministic_per_seed() {
        let model = SpectralModel::trigonometric_example(200, KernelConfig::squared_exponential(0.2, 0.02)).unwrap();
        let w = MixtureWeights::new(vec![0.8, 0.2]).unwrap();
        let a = polna_params_mc(&model, &w, &[0, 1], 500, &mut stream_rng(3, 0)).unwrap();
        let b = polna_params_mc(&model, &w, &[0, 1], 500, &mut stream_rng(3, 0)).unwrap();
        assert_eq!(a, b);
        assert!(polna_params_mc(&model, &w, &[0], 50, &mut stream_rng(3, 0)).is_err());
    }

    #[test]
    fn degenerate_kernel_in_both_modes() {
        let model = SpectralModel::trigonometric_example(200, KernelConfig::squared_exponential(0.0, 0.02)).unwrap();
        let w = MixtureWeights::new(vec![0.8, 0.2]).unwrap();
        let eta = model.mean_log_intensity(&w).unwrap();
        let s = polna_params_safak(&model, &w, &[0, 5]).unwrap();
        let m = polna_params_mc(&model, &w, &[0, 5], 200, &mut stream_rng(1, 0)).unwrap();
        for (a, &f) in [0usize, 5].iter().enumerate() {
            let exact = model.intensity(&eta, f).ln();
            assert!((s.mu[a] - exact).abs() < 1e-12);
            assert!((m.mu[a] - exact).abs() < 1e-12);
        }
        assert!(s.sigma.iter().chain(m.sigma.iter()).all(|&v| v == 0.0));
    }

    #[test]
    fn cache_returns_same_entry() {
        let model = SpectralModel::trigonometric_example(100, KernelConfig::squared_exponential(0.2, 0.05)).unwrap();
        let cache = ParamsCache::new(4);
        let w = MixtureWeights::new(vec![0.5, 0.5]).unwrap();
        let a = cache.get_or_compute(&model, &w, &PolnaConfig::default()).unwrap();
        let b = cache.get_or_compute(&model, &w, &PolnaConfig::default()).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(cache.len(), 1);
    }
}
