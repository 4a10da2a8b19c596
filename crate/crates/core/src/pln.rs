//! Multivariate Poisson log-normal pmf.
//!
//! For unique filters with log-intensity `x ~ N(mu, Sigma)`, multiplicities
//! `n` and count sums `S`, the history pmf is
//! `E[exp(S'x - n'e^x)] / prod y!`. Tilting by `e^{S'x}` moves the
//! Gaussian to mean `b = mu + Sigma S` and leaves a log-normal Laplace
//! transform, approximated at the mode `x = b - W`, where `W` solves the
//! multivariate Lambert equation `W = Sigma diag(n) e^{b - W}`:
//!
//! `ln pmf = S'Sigma S/2 + mu'S - sum ln y! - W'Sigma^{-1}W/2
//!           - 1'Sigma^{-1}W - ln det(I + Sigma diag(n e^{b-W}))/2`.
//!
//! `Sigma^{-1} W = n e^{b - W}` by the fixed-point equation, so `Sigma` is
//! never inverted, and a zero `Sigma` yields the exact Poisson pmf.

use crate::error::{Error, Result};
use crate::numeric::gauss_hermite::GaussHermite;
use crate::numeric::linalg::{cholesky_with_jitter, lu_solve};
use crate::numeric::{ln_factorial, log_sum_exp, normal};
use crate::polna::{dedupe_filters, BankParams, PlnParams};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub const LAMBERT_TOL: f64 = 1e-10;
pub const LAMBERT_MAX_ITER: usize = 200;
/// Newton keeps polishing below `LAMBERT_TOL` while steps still help, so
/// reported residuals sit well inside the tolerance.
const LAMBERT_POLISH: f64 = 1e-13;
/// Tensor-grid quadrature is refused above this many unique filters.
pub const MAX_QUADRATURE_DIM: usize = 4;

/// Counts aligned with a history of bank filter indices.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CountHistory {
    pub filters: Vec<usize>,
    pub counts: Vec<u64>,
}

impl CountHistory {
    pub fn new(filters: Vec<usize>, counts: Vec<u64>) -> Result<Self> {
        if filters.len() != counts.len() {
            return Err(Error::DimensionMismatch {
                expected: filters.len(),
                got: counts.len(),
                context: "counts vs filter history",
            });
        }
        Ok(CountHistory { filters, counts })
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }

    pub fn push(&mut self, filter: usize, count: u64) {
        self.filters.push(filter);
        self.counts.push(count);
    }

    pub fn with(&self, filter: usize, count: u64) -> Self {
        let mut next = self.clone();
        next.push(filter, count);
        next
    }

    /// Grouped view of the history.
    pub fn aggregate(&self) -> Aggregated {
        let d = dedupe_filters(&self.filters);
        let mut sums = vec![0u64; d.uniques.len()];
        for (&u, &y) in d.index_map.iter().zip(&self.counts) {
            sums[u] += y;
        }
        Aggregated {
            uniques: d.uniques,
            multiplicities: d.multiplicities,
            sums,
            ln_factorials: self.counts.iter().map(|&y| ln_factorial(y)).sum(),
        }
    }
}

/// Unique filters, their multiplicities, count sums `S` and `sum ln y!`.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregated {
    pub uniques: Vec<usize>,
    pub multiplicities: Vec<u64>,
    pub sums: Vec<u64>,
    pub ln_factorials: f64,
}

impl Aggregated {
    pub fn params(&self, bank: &BankParams) -> PlnParams {
        bank.restrict(&self.uniques, &self.multiplicities)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambertSolution {
    pub w: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    /// `ln |det(I + M diag(e^{-w}))|` at the solution.
    pub log_det: f64,
    pub det_sign: f64,
}

/// Solve `w = M e^{-w}` for entrywise nonnegative `M`.
pub fn lambert_w_multi(m: &DMatrix<f64>) -> Result<LambertSolution> {
    let u = m.nrows();
    let a: Vec<f64> = (0..u * u).map(|k| m[(k / u, k % u)]).collect();
    lambert_scaled(&a, &vec![0.0; u], u, None)
}

/// Solve `w = A diag(e^{b}) e^{-w}` with row-major `A`, without forming
/// `e^{b}` (which may overflow for large counts).
pub fn lambert_scaled(a: &[f64], b: &[f64], u: usize, warm: Option<&[f64]>) -> Result<LambertSolution> {
    let residual_of = |w: &[f64], r: &mut [f64]| -> f64 {
        let e: Vec<f64> = (0..u).map(|j| (b[j] - w[j]).exp()).collect();
        let mut worst: f64 = 0.0;
        for i in 0..u {
            let mut acc = 0.0;
            for j in 0..u {
                acc += a[i * u + j] * e[j];
            }
            r[i] = w[i] - acc;
            worst = worst.max(r[i].abs());
        }
        if worst.is_finite() {
            worst
        } else {
            f64::INFINITY
        }
    };
    let mut w: Vec<f64> = match warm {
        Some(w0) if w0.len() == u => w0.to_vec(),
        _ => (0..u)
            .map(|i| {
                let aii = a[i * u + i];
                if aii > 0.0 {
                    crate::numeric::softplus(aii.ln() + b[i])
                } else {
                    0.0
                }
            })
            .collect(),
    };
    let mut r = vec![0.0; u];
    let mut res = residual_of(&w, &mut r);
    if !res.is_finite() {
        // A warm start far from the root can overflow; restart cold.
        if warm.is_some() {
            return lambert_scaled(a, b, u, None);
        }
    }
    let mut jac = vec![0.0; u * u];
    let mut delta = vec![0.0; u];
    let mut trial = vec![0.0; u];
    let mut trial_r = vec![0.0; u];
    let mut iterations = 0;
    let factor = |w: &[f64], jac: &mut [f64]| {
        for j in 0..u {
            let e = (b[j] - w[j]).exp();
            for i in 0..u {
                jac[i * u + j] = a[i * u + j] * e + if i == j { 1.0 } else { 0.0 };
            }
        }
    };
    while res >= LAMBERT_POLISH {
        if iterations >= LAMBERT_MAX_ITER {
            if res < LAMBERT_TOL {
                break;
            }
            return Err(Error::LambertNonConvergence { iterations, residual: res });
        }
        iterations += 1;
        factor(&w, &mut jac);
        delta.copy_from_slice(&r);
        if lu_solve(&mut jac, u, &mut delta).is_none() {
            if res < LAMBERT_TOL {
                break;
            }
            return Err(Error::LambertNonConvergence { iterations, residual: res });
        }
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            for i in 0..u {
                trial[i] = w[i] - step * delta[i];
            }
            let tr = residual_of(&trial, &mut trial_r);
            if tr < res {
                w.copy_from_slice(&trial);
                r.copy_from_slice(&trial_r);
                res = tr;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // Rounding floor reached: accept if the residual is tiny
            // relative to the solution itself.
            let scale = w.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            if res < LAMBERT_TOL * scale || res < LAMBERT_TOL {
                break;
            }
            return Err(Error::LambertNonConvergence { iterations, residual: res });
        }
    }
    factor(&w, &mut jac);
    let mut dummy = vec![0.0; u];
    let (log_det, det_sign) = if u == 0 {
        (0.0, 1.0)
    } else {
        lu_solve(&mut jac, u, &mut dummy).ok_or(Error::NonPositiveDeterminant)?
    };
    Ok(LambertSolution {
        w,
        residual: res,
        iterations,
        log_det,
        det_sign,
    })
}

/// How the linear term of the Laplace exponent is weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LaplaceReading {
    /// `-(W'Sigma^{-1}W)/2 - 1'Sigma^{-1}W`, the Laplace-method value.
    #[default]
    FullLinear,
    /// `-(W'Sigma^{-1}W + 1'Sigma^{-1}W)/2`.
    HalfLinear,
}

/// Laplace evaluation together with the mode it was taken at.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplaceEval {
    pub log_pmf: f64,
    pub lambert: LambertSolution,
    /// `x = mu + Sigma S - W`, the mode of the tilted integrand.
    pub mode: Vec<f64>,
}

/// Log pmf of aggregated counts `sums` with `sum ln y! = ln_factorials`.
pub fn laplace_eval(
    params: &PlnParams,
    sums: &[u64],
    ln_factorials: f64,
    reading: LaplaceReading,
    warm: Option<&[f64]>,
) -> Result<LaplaceEval> {
    let u = params.len();
    if sums.len() != u {
        return Err(Error::DimensionMismatch {
            expected: u,
            got: sums.len(),
            context: "count sums vs PLN params",
        });
    }
    let s: Vec<f64> = sums.iter().map(|&v| v as f64).collect();
    let sigma = &params.sigma;
    let n: Vec<f64> = params.multiplicities.iter().map(|&v| v as f64).collect();
    let mut b = params.mu.clone();
    let mut quad = 0.0;
    for i in 0..u {
        let mut row = 0.0;
        for j in 0..u {
            row += sigma[(i, j)] * s[j];
        }
        b[i] += row;
        quad += s[i] * row;
    }
    let a: Vec<f64> = (0..u * u).map(|k| sigma[(k / u, k % u)] * n[k % u]).collect();
    let lambert = lambert_scaled(&a, &b, u, warm)?;
    if lambert.det_sign <= 0.0 {
        return Err(Error::NonPositiveDeterminant);
    }
    let w = &lambert.w;
    let mut wq = 0.0;
    let mut lin = 0.0;
    for i in 0..u {
        // (Sigma^{-1} W)_i = n_i e^{b_i - W_i}.
        let v = n[i] * (b[i] - w[i]).exp();
        wq += w[i] * v;
        lin += v;
    }
    let lin_weight = match reading {
        LaplaceReading::FullLinear => 1.0,
        LaplaceReading::HalfLinear => 0.5,
    };
    let mu_s: f64 = params.mu.iter().zip(&s).map(|(m, s)| m * s).sum();
    let log_pmf = 0.5 * quad + mu_s - ln_factorials - 0.5 * wq - lin_weight * lin - 0.5 * lambert.log_det;
    let mode = (0..u).map(|i| b[i] - w[i]).collect();
    Ok(LaplaceEval { log_pmf, lambert, mode })
}

pub fn pln_log_pmf_laplace(params: &PlnParams, history: &CountHistory) -> Result<f64> {
    let agg = history.aggregate();
    check_alignment(params, &agg)?;
    Ok(laplace_eval(params, &agg.sums, agg.ln_factorials, LaplaceReading::FullLinear, None)?.log_pmf)
}

pub fn pln_pmf_laplace(params: &PlnParams, history: &CountHistory) -> Result<f64> {
    pln_log_pmf_laplace(params, history).map(f64::exp)
}

fn check_alignment(params: &PlnParams, agg: &Aggregated) -> Result<()> {
    if params.multiplicities != agg.multiplicities {
        return Err(Error::DimensionMismatch {
            expected: agg.multiplicities.len(),
            got: params.multiplicities.len(),
            context: "PLN params do not match the history's unique filters",
        });
    }
    Ok(())
}

/// Where the Gauss-Hermite grid is centred.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Centering {
    /// Nodes on the prior `N(mu, Sigma)`.
    #[default]
    Prior,
    /// Nodes on the Gaussian fitted at the integrand's mode; accurate for
    /// large counts, where the prior grid misses the mass.
    Mode,
}

fn log_integrand(x: &[f64], s: &[f64], n: &[f64]) -> f64 {
    x.iter().zip(s).zip(n).map(|((x, s), n)| s * x - n * x.exp()).sum()
}

/// Tensor-grid Gauss-Hermite value of the log pmf.
pub fn pln_log_pmf_quadrature_with(
    params: &PlnParams,
    sums: &[u64],
    ln_factorials: f64,
    nodes_per_dim: usize,
    centering: Centering,
) -> Result<f64> {
    let u = params.len();
    if u > MAX_QUADRATURE_DIM {
        return Err(Error::QuadratureDimension(u));
    }
    let s: Vec<f64> = sums.iter().map(|&v| v as f64).collect();
    let n: Vec<f64> = params.multiplicities.iter().map(|&v| v as f64).collect();
    let scale = params.sigma.diagonal().iter().fold(0.0f64, |m, &v| m.max(v));
    if scale == 0.0 {
        return Ok(log_integrand(&params.mu, &s, &n) - ln_factorials);
    }
    let gh = GaussHermite::cached(nodes_per_dim);
    let (center, factor, log_prior_det, prior_inv) = match centering {
        Centering::Prior => {
            let (ch, _) = cholesky_with_jitter(&params.sigma, scale)?;
            (DVector::from_vec(params.mu.clone()), ch.l(), None, None)
        }
        Centering::Mode => {
            let lap = laplace_eval(params, sums, 0.0, LaplaceReading::FullLinear, None)?;
            let (ch, _) = cholesky_with_jitter(&params.sigma, scale)?;
            let inv = ch.inverse();
            let mut h = inv.clone();
            for i in 0..u {
                h[(i, i)] += n[i] * lap.mode[i].exp();
            }
            let post = h
                .cholesky()
                .ok_or(Error::Cholesky { jitter: 0.0 })?
                .inverse();
            let (post_ch, _) = cholesky_with_jitter(&post, scale)?;
            let log_det_prior = 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            (DVector::from_vec(lap.mode), post_ch.l(), Some(log_det_prior), Some(inv))
        }
    };
    let sqrt2 = std::f64::consts::SQRT_2;
    let log_det_factor: f64 = factor.diagonal().iter().map(|v| v.ln()).sum();
    let mut idx = vec![0usize; u];
    let mut terms = Vec::with_capacity(nodes_per_dim.pow(u as u32));
    let mu = DVector::from_vec(params.mu.clone());
    loop {
        let z = DVector::from_iterator(u, idx.iter().map(|&k| gh.nodes[k]));
        let x = &center + &factor * (&z * sqrt2);
        let log_w: f64 = idx.iter().map(|&k| gh.weights[k].ln()).sum();
        let xs = x.as_slice();
        let term = match (log_prior_det, prior_inv.as_ref()) {
            (Some(ld), Some(inv)) => {
                // Importance ratio of the prior density to the fitted
                // Gaussian, expressed per node.
                let dx = &x - &mu;
                let prior_quad = (dx.transpose() * inv * &dx)[(0, 0)];
                let zz = z.dot(&z);
                log_w + zz - 0.5 * prior_quad - 0.5 * ld + log_det_factor + 0.5 * u as f64 * 2f64.ln()
                    - 0.5 * u as f64 * (2.0 * std::f64::consts::PI).ln()
                    + log_integrand(xs, &s, &n)
            }
            _ => log_w - 0.5 * u as f64 * std::f64::consts::PI.ln() + log_integrand(xs, &s, &n),
        };
        terms.push(term);
        let mut d = 0;
        loop {
            if d == u {
                return Ok(log_sum_exp(terms) - ln_factorials);
            }
            idx[d] += 1;
            if idx[d] < nodes_per_dim {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

pub fn pln_pmf_quadrature(params: &PlnParams, history: &CountHistory, nodes_per_dim: usize) -> Result<f64> {
    let agg = history.aggregate();
    check_alignment(params, &agg)?;
    pln_log_pmf_quadrature_with(params, &agg.sums, agg.ln_factorials, nodes_per_dim, Centering::Prior).map(f64::exp)
}

/// `ln p(y | history)` for one more observation of bank filter
/// `candidate`, as a difference of joint log pmfs.
pub fn predictive_log_pmf(bank: &BankParams, history: &CountHistory, candidate: usize, y: u64) -> Result<f64> {
    let joint = history_log_pmf(bank, &history.with(candidate, y))?;
    let base = history_log_pmf(bank, history)?;
    Ok(joint - base)
}

pub fn predictive_pmf(bank: &BankParams, history: &CountHistory, candidate: usize, y: u64) -> Result<f64> {
    predictive_log_pmf(bank, history, candidate, y).map(f64::exp)
}

/// Joint log pmf of a history under bank-wide params (0 for an empty
/// history).
pub fn history_log_pmf(bank: &BankParams, history: &CountHistory) -> Result<f64> {
    if history.is_empty() {
        return Ok(0.0);
    }
    let agg = history.aggregate();
    let params = agg.params(bank);
    Ok(laplace_eval(&params, &agg.sums, agg.ln_factorials, LaplaceReading::FullLinear, None)?.log_pmf)
}

/// `[M_L, M_U]` holding the bulk of a PLN with log-mean `mu` and
/// log-variance `sigma_tt`.
pub fn effective_range(mu: f64, sigma_tt: f64, alpha: f64) -> Result<(u64, u64)> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let sd = sigma_tt.max(0.0).sqrt();
    let upper = (normal::quantile(1.0 - alpha / 2.0) * sd + mu).exp().floor();
    let lower = (normal::quantile(alpha / 2.0) * sd + mu).exp().floor();
    let clamp = |v: f64| if v.is_finite() { v.min(u64::MAX as f64 / 2.0) as u64 } else { u64::MAX / 2 };
    Ok((clamp(lower), clamp(upper) + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn univariate(mu: f64, var: f64) -> PlnParams {
        PlnParams::univariate(mu, var)
    }

    fn ln_poisson(y: u64, rate: f64) -> f64 {
        y as f64 * rate.ln() - rate - ln_factorial(y)
    }

    #[test]
    fn lambert_fixed_points() {
        let zero = lambert_w_multi(&DMatrix::zeros(3, 3)).unwrap();
        assert!(zero.w.iter().all(|&v| v == 0.0));
        let e = lambert_w_multi(&DMatrix::from_element(1, 1, std::f64::consts::E)).unwrap();
        assert!((e.w[0] - 1.0).abs() < 1e-12);
        // Omega constant by plain fixed-point iteration of x = e^{-x}.
        let mut omega = 0.5f64;
        for _ in 0..200 {
            omega = (-omega).exp();
        }
        let one = lambert_w_multi(&DMatrix::from_element(1, 1, 1.0)).unwrap();
        assert!((one.w[0] - omega).abs() < 1e-12);
        assert!((omega - 0.567_143_3).abs() < 1e-7);
    }

    #[test]
    fn lambert_multivariate_residual() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.2, 1.0, 9.0, 0.5, 0.2, 0.5, 30.0]);
        let sol = lambert_w_multi(&m).unwrap();
        let e = DVector::from_iterator(3, sol.w.iter().map(|w| (-w).exp()));
        let r = &m * e - DVector::from_vec(sol.w.clone());
        assert!(r.amax() < 1e-10);
    }

    #[test]
    fn degenerate_variance_gives_poisson() {
        let p = univariate(0.0, 1e-12);
        let h = CountHistory::new(vec![0], vec![0]).unwrap();
        assert!((pln_pmf_laplace(&p, &h).unwrap() - (-1.0f64).exp()).abs() < 1e-9);
        for (mu, y) in [(1.5, 3u64), (3.0, 40), (-1.0, 0)] {
            let p = univariate(mu, 0.0);
            let h = CountHistory::new(vec![0], vec![y]).unwrap();
            let want = ln_poisson(y, mu.exp());
            assert!((pln_log_pmf_laplace(&p, &h).unwrap() - want).abs() < 1e-12);
            let q = pln_log_pmf_quadrature_with(&p, &[y], ln_factorial(y), 20, Centering::Prior).unwrap();
            assert!((q - want).abs() < 1e-10);
        }
    }

    #[test]
    fn repeated_filter_without_variance_is_product_of_poissons() {
        let p = PlnParams::new(vec![1.0], DMatrix::zeros(1, 1), vec![3]).unwrap();
        let h = CountHistory::new(vec![7, 7, 7], vec![2, 4, 1]).unwrap();
        let want: f64 = [2, 4, 1].iter().map(|&y| ln_poisson(y, 1f64.exp())).sum();
        assert!((pln_log_pmf_laplace(&p, &h).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn quadrature_normalizes_and_has_lognormal_mean() {
        let p = univariate(0.0, 1.0);
        let (mut total, mut mean) = (0.0, 0.0);
        for y in 0..=500u64 {
            let v = pln_log_pmf_quadrature_with(&p, &[y], ln_factorial(y), 100, Centering::Mode)
                .unwrap()
                .exp();
            total += v;
            mean += y as f64 * v;
        }
        assert!((total - 1.0).abs() < 1e-6, "total {total}");
        assert!((mean / 0.5f64.exp() - 1.0).abs() < 1e-4, "mean {mean}");
    }

    #[test]
    fn centerings_agree_where_both_are_accurate() {
        let p = univariate(1.0, 0.25);
        for y in 0..12u64 {
            let a = pln_log_pmf_quadrature_with(&p, &[y], ln_factorial(y), 100, Centering::Prior).unwrap();
            let b = pln_log_pmf_quadrature_with(&p, &[y], ln_factorial(y), 100, Centering::Mode).unwrap();
            assert!((a - b).abs() < 1e-9, "y={y}: {a} vs {b}");
        }
    }

    #[test]
    fn laplace_small_variance_tracks_quadrature() {
        let p = univariate(2.0, 0.04);
        for y in 0..30u64 {
            let lap = laplace_eval(&p, &[y], ln_factorial(y), LaplaceReading::FullLinear, None).unwrap();
            let q = pln_log_pmf_quadrature_with(&p, &[y], ln_factorial(y), 100, Centering::Mode).unwrap();
            assert!(((lap.log_pmf - q).exp() - 1.0).abs() < 1e-3, "y={y}");
            assert!(lap.lambert.residual < LAMBERT_TOL);
        }
    }

    #[test]
    fn half_linear_reading_is_far_off() {
        let p = univariate(2.0, 0.04);
        let full = laplace_eval(&p, &[7], ln_factorial(7), LaplaceReading::FullLinear, None).unwrap();
        let half = laplace_eval(&p, &[7], ln_factorial(7), LaplaceReading::HalfLinear, None).unwrap();
        let q = pln_log_pmf_quadrature_with(&p, &[7], ln_factorial(7), 100, Centering::Mode).unwrap();
        assert!((full.log_pmf - q).abs() < 1e-3);
        assert!((half.log_pmf - q).abs() > 1.0);
    }

    #[test]
    fn bivariate_spot_check() {
        let sigma = DMatrix::from_row_slice(2, 2, &[0.25, 0.1, 0.1, 0.25]);
        let p = PlnParams::new(vec![0.0, 1.0], sigma, vec![1, 1]).unwrap();
        let h = CountHistory::new(vec![0, 1], vec![1, 2]).unwrap();
        let lap = pln_log_pmf_laplace(&p, &h).unwrap();
        let agg = h.aggregate();
        let q = pln_log_pmf_quadrature_with(&p, &agg.sums, agg.ln_factorials, 40, Centering::Mode).unwrap();
        assert!(((lap - q).exp() - 1.0).abs() < 5e-3, "{lap} vs {q}");
    }

    #[test]
    fn quadrature_dimension_guard() {
        let p = PlnParams::new(vec![0.0; 5], DMatrix::identity(5, 5), vec![1; 5]).unwrap();
        let err = pln_log_pmf_quadrature_with(&p, &[0; 5], 0.0, 3, Centering::Prior).unwrap_err();
        assert_eq!(err, Error::QuadratureDimension(5));
    }

    #[test]
    fn effective_range_examples() {
        assert_eq!(effective_range(1.3, 0.0, 0.05).unwrap(), (3, 4));
        assert_eq!(effective_range(0.0, 1.0, 0.05).unwrap(), (0, 8));
        assert!(effective_range(0.0, 1.0, 1.0).is_err());
    }

    fn bank(mu: Vec<f64>, sigma: DMatrix<f64>) -> BankParams {
        BankParams {
            mu,
            sigma,
            from_fallback: false,
        }
    }

    #[test]
    fn predictive_with_empty_history_is_marginal() {
        let b = bank(vec![1.0, 2.0], DMatrix::from_row_slice(2, 2, &[0.2, 0.05, 0.05, 0.3]));
        let empty = CountHistory::default();
        let p = predictive_log_pmf(&b, &empty, 1, 5).unwrap();
        let direct = laplace_eval(&univariate(2.0, 0.3), &[5], ln_factorial(5), LaplaceReading::FullLinear, None).unwrap();
        assert!((p - direct.log_pmf).abs() < 1e-14);
    }

    #[test]
    fn predictive_without_variance_is_poisson() {
        let b = bank(vec![1.0, 2.0], DMatrix::zeros(2, 2));
        let h = CountHistory::new(vec![0, 1, 0], vec![3, 8, 1]).unwrap();
        for y in 0..10 {
            let p = predictive_log_pmf(&b, &h, 1, y).unwrap();
            assert!((p - ln_poisson(y, 2f64.exp())).abs() < 1e-12);
        }
    }

    #[test]
    fn chain_rule_telescopes() {
        let b = bank(
            vec![1.0, 2.0, 0.5],
            DMatrix::from_row_slice(3, 3, &[0.2, 0.05, 0.0, 0.05, 0.3, 0.02, 0.0, 0.02, 0.1]),
        );
        let full = CountHistory::new(vec![0, 1, 0, 2, 1], vec![3, 8, 1, 0, 6]).unwrap();
        let mut h = CountHistory::default();
        let mut acc = 0.0;
        for (&f, &y) in full.filters.iter().zip(&full.counts) {
            acc += predictive_log_pmf(&b, &h, f, y).unwrap();
            h.push(f, y);
        }
        let joint = history_log_pmf(&b, &full).unwrap();
        assert!(((acc - joint).exp() - 1.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn permutation_covariance(y0 in 0u64..20, y1 in 0u64..20, y2 in 0u64..20, c in -0.05f64..0.08) {
            let sigma = DMatrix::from_row_slice(3, 3, &[0.2, c, 0.01, c, 0.3, 0.02, 0.01, 0.02, 0.1]);
            let p = PlnParams::new(vec![1.0, 2.0, 0.5], sigma, vec![1, 2, 1]).unwrap();
            let sums = [y0, y1, y2];
            let base = laplace_eval(&p, &sums, 0.0, LaplaceReading::FullLinear, None).unwrap().log_pmf;
            let perm = [2, 0, 1];
            let q = p.permuted(&perm);
            let psums: Vec<u64> = perm.iter().map(|&i| sums[i]).collect();
            let other = laplace_eval(&q, &psums, 0.0, LaplaceReading::FullLinear, None).unwrap().log_pmf;
            prop_assert!((base - other).abs() < 1e-12 * base.abs().max(1.0));
        }

        #[test]
        fn lambert_residual_small(m11 in 0.0f64..50.0, m22 in 0.0f64..50.0, m12 in 0.0f64..5.0) {
            let m = DMatrix::from_row_slice(2, 2, &[m11, m12, m12, m22]);
            let sol = lambert_w_multi(&m).unwrap();
            prop_assert!(sol.residual < LAMBERT_TOL);
        }
    }
}
