//! Pointwise posterior band of the log-SED `eta`.
//!
//! Given a particle `omega`, the history's log integrated intensities `x`
//! are approximated by `N(x_hat, (Sigma^{-1} + D)^{-1})` around the Laplace
//! mode, with `D = diag(n e^{x_hat})`. The deviation at grid point `j` is
//! linked to `x` through the delta-method cross covariance
//! `c_b(j) = sum_{k in b} pi_k K(j, k)`, `pi_k` the share of point `k` in
//! the filter's intensity. Conditioning gives a Gaussian with
//!
//! `mean_j = eta_j + c(j)'(S - n e^{x_hat})`,
//! `var_j  = K(j, j) - c(j)'(Sigma + D^{-1})^{-1} c(j)`,
//!
//! and the band is cut from the equal-weight mixture of these Gaussians over
//! a stratified draw of particles.

use super::{DesignContext, ParticleSet};
use crate::error::{Error, Result};
use crate::exec;
use crate::numeric::normal;
use crate::pln::{laplace_eval, CountHistory, LaplaceReading};
use crate::spectral::MixtureWeights;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Particles drawn (stratified, deterministic) for the band mixture.
pub const BAND_PARTICLES: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaBand {
    pub level: f64,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl EtaBand {
    /// Fraction of grid points with `lower <= truth <= upper`.
    pub fn coverage(&self, truth: &[f64]) -> f64 {
        let hit = truth
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .filter(|(t, (l, u))| *l <= *t && *t <= *u)
            .count();
        hit as f64 / truth.len() as f64
    }
}

/// Indices at cumulative positions `(k + 1/2) / count`.
fn stratified_picks(weights: &[f64], count: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(count);
    let mut cum = weights[0];
    let mut i = 0;
    for k in 0..count {
        let u = (k as f64 + 0.5) / count as f64;
        while u > cum && i + 1 < weights.len() {
            i += 1;
            cum += weights[i];
        }
        out.push(i);
    }
    out
}

/// Conditional mean and variance of `eta` on the grid for one particle.
fn particle_gaussian(
    ctx: &DesignContext,
    omega: &MixtureWeights,
    counts: &CountHistory,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let model = &ctx.model;
    let eta = model.mean_log_intensity(omega)?;
    let d = eta.len();
    if model.gp.is_degenerate() {
        return Ok((eta, vec![0.0; d]));
    }
    let prior_var: Vec<f64> = (0..d).map(|j| model.gp.cov(j, j)).collect();
    if counts.is_empty() {
        return Ok((eta, prior_var));
    }
    let bank = ctx.bank_params(omega)?;
    let agg = counts.aggregate();
    let params = agg.params(&bank);
    let eval = laplace_eval(&params, &agg.sums, agg.ln_factorials, LaplaceReading::FullLinear, None)?;
    let u = agg.uniques.len();
    let widths = model.grid.widths();

    // c[b] over the grid.
    let mut cross = DMatrix::zeros(u, d);
    for (b, &f) in agg.uniques.iter().enumerate() {
        let pts = model.filter_points(f);
        let lam: f64 = pts.clone().map(|k| eta[k].exp() * widths[k]).sum();
        for k in pts {
            let pi = eta[k].exp() * widths[k] / lam;
            for (j, &c) in model.gp.cov_column(k).iter().enumerate() {
                cross[(b, j)] += pi * c;
            }
        }
    }
    let resid: Vec<f64> = (0..u)
        .map(|b| agg.sums[b] as f64 - agg.multiplicities[b] as f64 * eval.mode[b].exp())
        .collect();
    let mut m = params.sigma.clone();
    for b in 0..u {
        m[(b, b)] += 1.0 / (agg.multiplicities[b] as f64 * eval.mode[b].exp());
    }
    let chol = m.cholesky().ok_or(Error::Cholesky { jitter: 0.0 })?;
    let solved = chol.solve(&cross);
    let mut mean = eta;
    let mut var = prior_var;
    for j in 0..d {
        let cj = cross.column(j);
        mean[j] += cj.iter().zip(&resid).map(|(c, r)| c * r).sum::<f64>();
        var[j] = (var[j] - cj.dot(&solved.column(j))).max(0.0);
    }
    Ok((mean, var))
}

/// Quantile `p` of an equal-weight Gaussian mixture (zero variances allowed).
fn mixture_quantile(means: &[f64], sds: &[f64], p: f64) -> f64 {
    let cdf = |x: f64| {
        means
            .iter()
            .zip(sds)
            .map(|(&m, &s)| {
                if s > 0.0 {
                    normal::cdf((x - m) / s)
                } else if x >= m {
                    1.0
                } else {
                    0.0
                }
            })
            .sum::<f64>()
            / means.len() as f64
    };
    let mut lo = means.iter().zip(sds).map(|(m, s)| m - 10.0 * s).fold(f64::INFINITY, f64::min);
    let mut hi = means.iter().zip(sds).map(|(m, s)| m + 10.0 * s).fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Pointwise `level` band of `eta` under the particle posterior.
pub fn eta_band(ctx: &DesignContext, pset: &ParticleSet, counts: &CountHistory, level: f64) -> Result<EtaBand> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfig(format!("level must lie in (0, 1), got {level}")));
    }
    let picks = stratified_picks(pset.weights(), BAND_PARTICLES);
    let mut unique = picks.clone();
    unique.dedup();
    let fits = exec::map_slice(ctx.config.execution, &unique, |&i| {
        particle_gaussian(ctx, &pset.particles()[i], counts)
    });
    let mut by_pick = Vec::with_capacity(picks.len());
    for &i in &picks {
        let slot = unique.binary_search(&i).expect("picks are sorted");
        match &fits[slot] {
            Ok(fit) => by_pick.push(fit),
            Err(e) => log::warn!("particle {i} left out of the eta band: {e}"),
        }
    }
    if by_pick.is_empty() {
        return Err(Error::DegenerateParticles);
    }
    let d = ctx.model.grid.len();
    let k = by_pick.len() as f64;
    let out = exec::map_indexed(ctx.config.execution, d, |j| {
        let means: Vec<f64> = by_pick.iter().map(|(m, _)| m[j]).collect();
        let sds: Vec<f64> = by_pick.iter().map(|(_, v)| v[j].sqrt()).collect();
        (
            means.iter().sum::<f64>() / k,
            mixture_quantile(&means, &sds, (1.0 - level) / 2.0),
            mixture_quantile(&means, &sds, (1.0 + level) / 2.0),
        )
    });
    Ok(EtaBand {
        level,
        mean: out.iter().map(|o| o.0).collect(),
        lower: out.iter().map(|o| o.1).collect(),
        upper: out.iter().map(|o| o.2).collect(),
    })
}
