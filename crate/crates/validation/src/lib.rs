//! Reference computations that do not share code paths with the SMC engine.
//!
//! Everything here is brute force on purpose: dense grids, plain sample
//! moments, exact binomial tails.

use rand::Rng;
use seqdesign_core::pln::CountHistory;
use seqdesign_core::spectral::{MixtureWeights, SpectralModel};

/// Posterior of `omega_1` for a two-template model without GP variation,
/// tabulated at cell midpoints of `[0, 1]`.
#[derive(Debug, Clone)]
pub struct GridPosterior {
    pub nodes: Vec<f64>,
    pub probs: Vec<f64>,
}

impl GridPosterior {
    /// `prod_s Poisson(y_s | Lambda(B_s, omega)) * Dir(omega | alpha)` on
    /// `cells` midpoints. Only exact when the model's kernel is degenerate.
    pub fn exact_poisson(model: &SpectralModel, counts: &CountHistory, alpha: [f64; 2], cells: usize) -> Self {
        assert_eq!(model.templates.len(), 2, "grid oracle is for two templates");
        let nodes: Vec<f64> = (0..cells).map(|k| (k as f64 + 0.5) / cells as f64).collect();
        let log_post: Vec<f64> = nodes
            .iter()
            .map(|&w| {
                let omega = MixtureWeights::new(vec![w, 1.0 - w]).expect("interior point");
                let eta = model.mean_log_intensity(&omega).expect("valid model");
                let mut lp = (alpha[0] - 1.0) * w.ln() + (alpha[1] - 1.0) * (1.0 - w).ln();
                for (&f, &y) in counts.filters.iter().zip(&counts.counts) {
                    let rate = model.intensity(&eta, f);
                    lp += y as f64 * rate.ln() - rate;
                }
                lp
            })
            .collect();
        let top = log_post.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut probs: Vec<f64> = log_post.iter().map(|v| (v - top).exp()).collect();
        let z: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= z);
        GridPosterior { nodes, probs }
    }

    pub fn mean(&self) -> f64 {
        self.nodes.iter().zip(&self.probs).map(|(x, p)| x * p).sum()
    }

    pub fn sd(&self) -> f64 {
        let m = self.mean();
        self.nodes
            .iter()
            .zip(&self.probs)
            .map(|(x, p)| p * (x - m).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Inverse-CDF draws, uniform within the chosen cell.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        let h = 1.0 / self.nodes.len() as f64;
        let mut cdf = Vec::with_capacity(self.probs.len());
        let mut acc = 0.0;
        for p in &self.probs {
            acc += p;
            cdf.push(acc);
        }
        (0..n)
            .map(|_| {
                let u: f64 = rng.random::<f64>() * acc;
                let k = cdf.partition_point(|&c| c < u).min(cdf.len() - 1);
                self.nodes[k] + (rng.random::<f64>() - 0.5) * h
            })
            .collect()
    }
}

/// Sample skewness and excess kurtosis (plain moment estimators).
pub fn skewness_kurtosis(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m3 = xs.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
}

/// One-sided sign test: `P(X >= plus)` for `X ~ Bin(plus + minus, 1/2)`.
/// Ties are dropped before calling.
pub fn sign_test_p(plus: u64, minus: u64) -> f64 {
    let n = plus + minus;
    if n == 0 {
        return 1.0;
    }
    let ln_choose = |k: u64| -> f64 { (1..=k).map(|i| ((n - k + i) as f64 / i as f64).ln()).sum() };
    (plus..=n)
        .map(|k| (ln_choose(k) - n as f64 * std::f64::consts::LN_2).exp())
        .sum::<f64>()
        .min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_test_tails() {
        assert!((sign_test_p(1, 0) - 0.5).abs() < 1e-15);
        assert!((sign_test_p(5, 0) - 1.0 / 32.0).abs() < 1e-15);
        assert!((sign_test_p(0, 3) - 1.0).abs() < 1e-15);
        // P(X >= 8 | n = 10) = 56 / 1024.
        assert!((sign_test_p(8, 2) - 56.0 / 1024.0).abs() < 1e-14);
        assert_eq!(sign_test_p(0, 0), 1.0);
    }

    #[test]
    fn moments_of_symmetric_two_point_set() {
        let (s, k) = skewness_kurtosis(&[-1.0, 1.0, -1.0, 1.0]);
        assert!(s.abs() < 1e-15);
        assert!((k + 2.0).abs() < 1e-12);
    }
}
