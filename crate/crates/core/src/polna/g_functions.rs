//! Moments of `g(w) = ln(1 + e^w)` for Gaussian `w ~ N(m, sigma^2)`.
//!
//! * `g1 = E[g(w)]`
//! * `g2 = E[g(w)^2]`
//! * `g3 = Cov(g(w), w) = sigma^2 E[g'(w)]`
//! * `slope = E[g'(w)]`, kept separately so callers never form `g3 / sigma^2`
//!
//! All three expand in `F(k) = E[e^{-k w}; w > 0]` and its mirror
//! `E[e^{k w}; w < 0]`, which is `F` evaluated at `-m`. Both are moment
//! sequences in `k`, so once the plain partial sums stall (terms decay only
//! like `1/k^2` near `m = 0`) the alternating tails are summed with
//! [`alternating_sum`].

use crate::error::{Error, Result};
use crate::numeric::normal::{cdf, ln_cdf, ln_pdf, pdf};
use crate::numeric::series::alternating_sum;
use crate::numeric::{sigmoid, softplus};

/// Below this `sigma` the expectations collapse onto `g(m)`.
pub const DETERMINISTIC_SIGMA: f64 = 1e-6;

const RELATIVE_TOL: f64 = 1e-12;
/// Relative size below which a whole side of the series is dropped.
const NEGLIGIBLE: f64 = 1e-17;
/// Terms summed directly before switching to acceleration.
const DIRECT_TERMS: usize = 40;
/// Accelerated estimates at these lengths must agree.
const ACCEL_TERMS: (usize, usize) = (30, 40);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GValues {
    pub g1: f64,
    pub g2: f64,
    pub g3: f64,
    pub slope: f64,
}

/// `ln F(sigma, m, k) = -k m + k^2 sigma^2 / 2 + ln Phi((m - k sigma^2) / sigma)`.
pub fn ln_f(sigma: f64, m: f64, k: f64) -> f64 {
    -k * m + 0.5 * k * k * sigma * sigma + ln_cdf(m / sigma - k * sigma)
}

/// `1 - z Q(z) / phi(z)` for `z > 0`, without cancellation.
fn mills_complement(z: f64) -> f64 {
    if z < 3.0 {
        return 1.0 - z * (ln_cdf(-z) - ln_pdf(z)).exp();
    }
    // Q(z)/phi(z) = 1/(z + 1/(z + 2/(z + 3/(z + ...)))), so the
    // complement is t/(z + t) with t the tail after the first level.
    let depth = if z < 6.0 { 90 } else { 40 };
    let mut t = 0.0;
    for n in (1..=depth).rev() {
        t = n as f64 / (z + t);
    }
    t / (z + t)
}

/// `E[w e^{-k w}; w > 0] = (m - k sigma^2) F(k) + sigma phi(m / sigma)`.
fn tilted_first_moment(sigma: f64, m: f64, k: f64) -> f64 {
    let a = m / sigma;
    let x = a - k * sigma;
    if x >= 0.0 {
        sigma * (x * ln_f(sigma, m, k).exp() + pdf(a))
    } else {
        sigma * (ln_pdf(a) + mills_complement(-x).ln()).exp()
    }
}

pub fn g_functions(sigma: f64, m: f64) -> Result<GValues> {
    if !m.is_finite() || !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::InvalidConfig(format!("g_functions needs finite m and sigma >= 0 (sigma={sigma}, m={m})")));
    }
    if sigma < DETERMINISTIC_SIGMA {
        let g = softplus(m);
        return Ok(GValues {
            g1: g,
            g2: g * g,
            g3: sigma * sigma * sigmoid(m),
            slope: sigmoid(m),
        });
    }
    let a = m / sigma;
    let (phi_a, cdf_a) = (pdf(a), cdf(a));
    let lead1 = m * cdf_a + sigma * phi_a;
    let lead2 = (m * m + sigma * sigma) * cdf_a + m * sigma * phi_a;
    let lead3 = cdf_a;

    // Magnitudes (the a_j of sum (-1)^j a_j) of each alternating series.
    let mut s1 = Vec::with_capacity(DIRECT_TERMS);
    let mut s2a = Vec::with_capacity(DIRECT_TERMS);
    let mut s2b = Vec::with_capacity(DIRECT_TERMS);
    let mut s3p = Vec::with_capacity(DIRECT_TERMS);
    let mut s3n = Vec::with_capacity(DIRECT_TERMS);
    let (mut sum1, mut sum2, mut sum3) = (0.0, 0.0, 0.0);
    let mut harmonic_prev = 0.0;
    let mut pending = None;
    // F(k) and E[w e^{-kw}; w > 0] decrease in k (and so does the mirror),
    // so a side whose k = 1 term is below 1e-17 of every total stays
    // negligible through all terms and is skipped.
    let (mut skip_p, mut skip_n) = (false, false);
    for k in 1..=DIRECT_TERMS + 1 {
        let kf = k as f64;
        let p = if skip_p { 0.0 } else { ln_f(sigma, m, kf).exp() };
        let n = if skip_n { 0.0 } else { ln_f(sigma, -m, kf).exp() };
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        let t1 = (p + n) / kf;
        let t2a = if skip_p { 0.0 } else { tilted_first_moment(sigma, m, kf) / kf };
        if k <= DIRECT_TERMS {
            s1.push(t1);
            s2a.push(t2a);
            s3p.push(p);
            s3n.push(n);
            sum1 += sign * t1;
            sum2 += sign * 2.0 * t2a;
            sum3 += sign * (n - p);
        }
        // The squared-log series starts at k = 2 with coefficient
        // 2 (-1)^k H_{k-1} / k.
        let mut t2b = 0.0;
        if k >= 2 {
            t2b = 2.0 * harmonic_prev / kf * (p + n);
            if s2b.len() < DIRECT_TERMS {
                s2b.push(t2b);
                sum2 += -sign * t2b;
            }
        }
        harmonic_prev += 1.0 / kf;

        let scale1 = (lead1 + sum1).abs().max(f64::MIN_POSITIVE);
        let scale2 = (lead2 + sum2).abs().max(f64::MIN_POSITIVE);
        let scale3 = (lead3 + sum3).abs().max(f64::MIN_POSITIVE);
        if k == 1 {
            let floor = NEGLIGIBLE * scale1.min(scale2).min(scale3);
            skip_p = p < floor && t2a.abs() < floor;
            skip_n = n < floor;
        }
        let done = k >= 2
            && t1 < RELATIVE_TOL * scale1
            && 2.0 * t2a + t2b < RELATIVE_TOL * scale2
            && p.max(n) < RELATIVE_TOL * scale3;
        if done {
            pending = Some((sum1, sum2, sum3));
            break;
        }
    }

    let (sum1, sum2, sum3) = match pending {
        Some(s) => s,
        None => accelerated(sigma, m, &s1, &s2a, &s2b, &s3p, &s3n)?,
    };
    let slope = lead3 + sum3;
    Ok(GValues {
        g1: lead1 + sum1,
        g2: lead2 + sum2,
        g3: sigma * sigma * slope,
        slope,
    })
}

fn accelerated(
    sigma: f64,
    m: f64,
    s1: &[f64],
    s2a: &[f64],
    s2b: &[f64],
    s3p: &[f64],
    s3n: &[f64],
) -> Result<(f64, f64, f64)> {
    let eval = |n: usize| {
        let n2b = n.min(s2b.len());
        (
            alternating_sum(&s1[..n]),
            2.0 * alternating_sum(&s2a[..n]) + alternating_sum(&s2b[..n2b]),
            alternating_sum(&s3n[..n]) - alternating_sum(&s3p[..n]),
        )
    };
    let lo = eval(ACCEL_TERMS.0);
    let hi = eval(ACCEL_TERMS.1);
    let parts = [
        (lo.0, hi.0, s1[0]),
        (lo.1, hi.1, s2a[0] + s2b[0]),
        (lo.2, hi.2, s3p[0] + s3n[0]),
    ];
    for (a, b, first) in parts {
        let diff = (a - b).abs();
        if !(diff <= RELATIVE_TOL * b.abs().max(first).max(f64::MIN_POSITIVE)) {
            return Err(Error::SeriesNonConvergence {
                sigma,
                m,
                last_term: diff,
            });
        }
    }
    Ok(hi)
}
