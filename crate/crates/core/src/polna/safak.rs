//! Deterministic moment matching of `log sum_j e^{y_j}` for jointly
//! Gaussian `y`, one point at a time.
//!
//! Within a filter the running log-sum `s_k = s_{k-1} + g(y_k - s_{k-1})`
//! is kept Gaussian by matching its mean and variance. For any other
//! Gaussian `X`, Stein's lemma gives
//! `Cov(g(w), X) = Cov(w, X) E[g'(w)]`, hence one linear update
//! `rho(s_k, X) = a_k rho(s_{k-1}, X) + b_k rho(y_k, X)` whose coefficients
//! depend only on the filter's own recursion. Cross-filter correlations
//! reuse those coefficients against the finished sum of the other filter.

use super::g_functions::{g_functions, GValues};
use crate::error::{Error, Result};
use crate::numeric::gauss_hermite::GaussHermite;
use crate::numeric::softplus;
use crate::spectral::SpectralModel;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::ops::Range;

/// Correlations may overshoot `[-1, 1]` by this much before it is an error.
pub const CORRELATION_TOL: f64 = 1e-8;

/// Nodes per axis for the bivariate cross moment in the joint schedule.
pub const JOINT_NODES: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CrossSchedule {
    /// Advance one sum against the other's finished value, both ways, and
    /// average.
    #[default]
    Sequential,
    /// For equally sized filters, step both sums together and evaluate the
    /// cross moment of the two increments by quadrature.
    JointStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SafakOptions {
    pub cross: CrossSchedule,
}

#[derive(Debug, Clone, Copy)]
struct Step {
    sd_before: f64,
    sd_after: f64,
    sd_y: f64,
    mu_w: f64,
    sd_w: f64,
    g1: f64,
    slope: f64,
    a: f64,
    b: f64,
}

/// Recursion state for one filter.
#[derive(Debug, Clone)]
pub struct SafakAccumulator {
    range: Range<usize>,
    track: Range<usize>,
    mu: f64,
    sd: f64,
    /// `rho(s_k, y_l)` for `l` in `track`.
    rho: Vec<f64>,
    steps: Vec<Step>,
    history: Option<Vec<Vec<f64>>>,
}

impl SafakAccumulator {
    fn start(model: &SpectralModel, mean_y: &[f64], range: Range<usize>, track: Range<usize>, keep_history: bool) -> Self {
        let gp = &model.gp;
        let first = range.start;
        let sd_first = gp.sd()[first];
        let col = gp.cov_column(first);
        let rho = track.clone().map(|l| col[l] / (sd_first * gp.sd()[l])).collect::<Vec<_>>();
        let history = keep_history.then(|| vec![rho.clone()]);
        SafakAccumulator {
            range,
            track,
            mu: mean_y[first],
            sd: sd_first,
            rho,
            steps: Vec::new(),
            history,
        }
    }

    fn rho_with(&self, l: usize) -> f64 {
        if self.track.contains(&l) {
            self.rho[l - self.track.start]
        } else {
            0.0
        }
    }

    fn run(mut self, model: &SpectralModel, mean_y: &[f64]) -> Result<Self> {
        let gp = &model.gp;
        let sd = gp.sd();
        for p in self.range.start + 1..self.range.end {
            let sd_y = sd[p];
            let rho_sy = self.rho_with(p);
            let mu_w = mean_y[p] - self.mu;
            let var_w = (sd_y * sd_y + self.sd * self.sd - 2.0 * rho_sy * sd_y * self.sd).max(0.0);
            let sd_w = var_w.sqrt();
            let GValues { g1, g2, slope, .. } = g_functions(sd_w, mu_w)?;
            let var = self.sd * self.sd + (g2 - g1 * g1) + 2.0 * self.sd * (rho_sy * sd_y - self.sd) * slope;
            let sd_after = var.max(0.0).sqrt();
            let (a, b) = if sd_after > 0.0 {
                (self.sd / sd_after * (1.0 - slope), sd_y * slope / sd_after)
            } else {
                (0.0, 0.0)
            };
            let col = gp.cov_column(p);
            let inv = 1.0 / sd_y;
            for (offset, r) in self.rho.iter_mut().enumerate() {
                let l = self.track.start + offset;
                let rho_yl = col[l] * inv / sd[l];
                let updated = a * *r + b * rho_yl;
                *r = clamp_correlation(updated)?;
            }
            self.steps.push(Step {
                sd_before: self.sd,
                sd_after,
                sd_y,
                mu_w,
                sd_w,
                g1,
                slope,
                a,
                b,
            });
            self.mu += g1;
            self.sd = sd_after;
            if let Some(h) = self.history.as_mut() {
                h.push(self.rho.clone());
            }
        }
        Ok(self)
    }

    pub fn mean(&self) -> f64 {
        self.mu
    }

    pub fn sd(&self) -> f64 {
        self.sd
    }

    /// `rho(s, y_l)` for the finished sum.
    pub fn correlation_with_point(&self, l: usize) -> f64 {
        self.rho_with(l)
    }

    /// `rho(s_self, s_other)` by advancing this sum against the finished
    /// `other`.
    fn advance_against(&self, other: &SafakAccumulator) -> Result<f64> {
        let mut c = other.rho_with(self.range.start);
        for (step, p) in self.steps.iter().zip(self.range.start + 1..self.range.end) {
            c = clamp_correlation(step.a * c + step.b * other.rho_with(p))?;
        }
        Ok(c)
    }
}

fn clamp_correlation(r: f64) -> Result<f64> {
    if !r.is_finite() || r.abs() > 1.0 + CORRELATION_TOL {
        return Err(Error::CorrelationOutOfRange { value: r });
    }
    Ok(r.clamp(-1.0, 1.0))
}

/// Joint recursion for two filters with the same number of points.
fn joint_correlation(model: &SpectralModel, i: &SafakAccumulator, j: &SafakAccumulator) -> Result<f64> {
    let gp = &model.gp;
    let (hi, hj) = (i.history.as_ref().expect("history kept"), j.history.as_ref().expect("history kept"));
    let gh = GaussHermite::cached(JOINT_NODES);
    let row = |h: &Vec<f64>, acc: &SafakAccumulator, l: usize| {
        if acc.track.contains(&l) {
            h[l - acc.track.start]
        } else {
            0.0
        }
    };
    let (pi0, pj0) = (i.range.start, j.range.start);
    let mut c = gp.cov(pi0, pj0) / (gp.sd()[pi0] * gp.sd()[pj0]);
    for t in 0..i.steps.len() {
        let (si, sj) = (&i.steps[t], &j.steps[t]);
        let (pi, pj) = (pi0 + t + 1, pj0 + t + 1);
        let c_ss = c * si.sd_before * sj.sd_before;
        let c_yi_sj = row(&hj[t], j, pi) * si.sd_y * sj.sd_before;
        let c_yj_si = row(&hi[t], i, pj) * sj.sd_y * si.sd_before;
        let c_wi_sj = c_yi_sj - c_ss;
        let c_wj_si = c_yj_si - c_ss;
        let c_ww = gp.cov(pi, pj) - c_yi_sj - c_yj_si + c_ss;
        let cov_gg = if si.sd_w > 0.0 && sj.sd_w > 0.0 {
            let r = (c_ww / (si.sd_w * sj.sd_w)).clamp(-1.0, 1.0);
            let q = (1.0 - r * r).sqrt();
            let mut e = 0.0;
            for (x1, w1) in gh.nodes.iter().zip(&gh.weights) {
                let z1 = std::f64::consts::SQRT_2 * x1;
                let gi = softplus(si.mu_w + si.sd_w * z1);
                for (x2, w2) in gh.nodes.iter().zip(&gh.weights) {
                    let z2 = std::f64::consts::SQRT_2 * x2;
                    e += w1 * w2 * gi * softplus(sj.mu_w + sj.sd_w * (r * z1 + q * z2));
                }
            }
            e / std::f64::consts::PI - si.g1 * sj.g1
        } else {
            0.0
        };
        let cov = c_ss + c_wj_si * sj.slope + c_wi_sj * si.slope + cov_gg;
        let denom = si.sd_after * sj.sd_after;
        c = if denom > 0.0 { clamp_correlation(cov / denom)? } else { 0.0 };
    }
    Ok(c)
}

/// Range of grid indices whose kernel correlation with `range` is not
/// negligible.
fn tracking_window(model: &SpectralModel, range: &Range<usize>) -> Range<usize> {
    let p = model.grid.points();
    let reach = model.kernel().negligible_distance();
    let lo = p[range.start] - reach;
    let hi = p[range.end - 1] + reach;
    let start = p.partition_point(|&v| v < lo);
    let end = p.partition_point(|&v| v <= hi);
    start..end
}

/// Mean vector and covariance of `log Lambda` over the filters covering the
/// grid index `ranges`, for log-intensity mean `mean_eta`.
pub fn safak_moments(
    model: &SpectralModel,
    mean_eta: &[f64],
    ranges: &[Range<usize>],
    options: SafakOptions,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let u = ranges.len();
    let widths = model.grid.widths();
    let mean_y: Vec<f64> = mean_eta.iter().zip(widths).map(|(m, w)| m + w.ln()).collect();
    if model.gp.is_degenerate() {
        let mu = ranges
            .iter()
            .map(|r| crate::numeric::log_sum_exp(r.clone().map(|j| mean_y[j])))
            .collect();
        return Ok((mu, DMatrix::zeros(u, u)));
    }
    let joint = options.cross == CrossSchedule::JointStep;
    let sums = ranges
        .iter()
        .map(|r| {
            let track = tracking_window(model, r);
            SafakAccumulator::start(model, &mean_y, r.clone(), track, joint).run(model, &mean_y)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut sigma = DMatrix::zeros(u, u);
    for a in 0..u {
        sigma[(a, a)] = sums[a].sd * sums[a].sd;
        for b in 0..a {
            let (sa, sb) = (&sums[a], &sums[b]);
            let rho = if joint && sa.range.len() == sb.range.len() {
                joint_correlation(model, sa, sb)?
            } else {
                0.5 * (sa.advance_against(sb)? + sb.advance_against(sa)?)
            };
            let c = rho * sa.sd * sb.sd;
            sigma[(a, b)] = c;
            sigma[(b, a)] = c;
        }
    }
    let mu = sums.iter().map(|s| s.mu).collect();
    Ok((mu, project_psd(sigma)))
}

/// Clip negative eigenvalues; leaves PSD input untouched.
pub fn project_psd(sigma: DMatrix<f64>) -> DMatrix<f64> {
    let u = sigma.nrows();
    if u <= 1 {
        return sigma;
    }
    let eig = sigma.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|&v| v >= 0.0) {
        return sigma;
    }
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    let v = &eig.eigenvectors;
    let mut out = v * DMatrix::from_diagonal(&clipped) * v.transpose();
    for a in 0..u {
        for b in 0..a {
            let s = 0.5 * (out[(a, b)] + out[(b, a)]);
            out[(a, b)] = s;
            out[(b, a)] = s;
        }
    }
    out
}
