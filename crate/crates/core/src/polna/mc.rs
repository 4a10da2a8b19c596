//! Monte Carlo moments of `log Lambda` from sampled GP paths.

use crate::error::{Error, Result};
use crate::numeric::linalg::cholesky_with_jitter;
use crate::spectral::SpectralModel;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use std::ops::Range;

pub const MIN_SAMPLES: usize = 100;
const BATCH: usize = 512;

/// Sample mean and unbiased sample covariance of `log Lambda` over the
/// filters whose grid indices are `ranges`.
///
/// Only the points inside some filter are sampled, from the marginal of the
/// GP prior on those points.
pub fn mc_moments<R: Rng + ?Sized>(
    model: &SpectralModel,
    mean_eta: &[f64],
    ranges: &[Range<usize>],
    n_samples: usize,
    rng: &mut R,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if n_samples < MIN_SAMPLES {
        return Err(Error::InvalidConfig(format!(
            "Monte Carlo moments need at least {MIN_SAMPLES} samples, got {n_samples}"
        )));
    }
    let u = ranges.len();
    let widths = model.grid.widths();
    let mut points: Vec<usize> = ranges.iter().flat_map(|r| r.clone()).collect();
    points.sort_unstable();
    points.dedup();
    let local: Vec<Vec<usize>> = ranges
        .iter()
        .map(|r| r.clone().map(|j| points.binary_search(&j).expect("point collected")).collect())
        .collect();
    let log_w: Vec<f64> = points.iter().map(|&j| mean_eta[j] + widths[j].ln()).collect();

    let log_lambda = |eta_dev: &[f64], f: usize| -> f64 {
        let idx = &local[f];
        let max = idx.iter().map(|&p| log_w[p] + eta_dev[p]).fold(f64::NEG_INFINITY, f64::max);
        max + idx.iter().map(|&p| (log_w[p] + eta_dev[p] - max).exp()).sum::<f64>().ln()
    };

    if model.gp.is_degenerate() {
        let zeros = vec![0.0; points.len()];
        let mu = (0..u).map(|f| log_lambda(&zeros, f)).collect();
        return Ok((mu, DMatrix::zeros(u, u)));
    }

    let d = points.len();
    let sub = DMatrix::from_fn(d, d, |a, b| model.gp.cov(points[a], points[b]));
    let (chol, _) = cholesky_with_jitter(&sub, model.kernel().variance())?;
    let l = chol.l();

    let mut samples = DMatrix::zeros(u, n_samples);
    let mut done = 0;
    let mut column = vec![0.0; d];
    while done < n_samples {
        let bs = BATCH.min(n_samples - done);
        let mut z = DMatrix::zeros(d, bs);
        for c in 0..bs {
            for r in 0..d {
                z[(r, c)] = rng.sample(StandardNormal);
            }
        }
        let x = &l * z;
        for c in 0..bs {
            column.copy_from_slice(x.column(c).as_slice());
            for f in 0..u {
                samples[(f, done + c)] = log_lambda(&column, f);
            }
        }
        done += bs;
    }

    let n = n_samples as f64;
    let mu: Vec<f64> = (0..u).map(|f| samples.row(f).sum() / n).collect();
    let mut sigma = DMatrix::zeros(u, u);
    for a in 0..u {
        for b in 0..=a {
            let c = (0..n_samples)
                .map(|k| (samples[(a, k)] - mu[a]) * (samples[(b, k)] - mu[b]))
                .sum::<f64>()
                / (n - 1.0);
            sigma[(a, b)] = c;
            sigma[(b, a)] = c;
        }
    }
    Ok((mu, sigma))
}

/// Draws of `log Lambda` for a single filter, for distribution checks.
pub fn mc_log_intensity_draws<R: Rng + ?Sized>(
    model: &SpectralModel,
    mean_eta: &[f64],
    range: Range<usize>,
    n_samples: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let widths = model.grid.widths();
    let points: Vec<usize> = range.collect();
    let d = points.len();
    let log_w: Vec<f64> = points.iter().map(|&j| mean_eta[j] + widths[j].ln()).collect();
    if model.gp.is_degenerate() {
        let v = crate::numeric::log_sum_exp(log_w.iter().copied());
        return Ok(vec![v; n_samples]);
    }
    let sub = DMatrix::from_fn(d, d, |a, b| model.gp.cov(points[a], points[b]));
    let (chol, _) = cholesky_with_jitter(&sub, model.kernel().variance())?;
    let l = chol.l();
    let mut out = Vec::with_capacity(n_samples);
    while out.len() < n_samples {
        let bs = BATCH.min(n_samples - out.len());
        let z = DMatrix::from_fn(d, bs, |_, _| 0.0);
        let mut z = z;
        for c in 0..bs {
            for r in 0..d {
                z[(r, c)] = rng.sample(StandardNormal);
            }
        }
        let x = &l * z;
        for c in 0..bs {
            let col = x.column(c);
            out.push(crate::numeric::log_sum_exp((0..d).map(|p| log_w[p] + col[p])));
        }
    }
    Ok(out)
}
