//! Convergence acceleration for alternating series.

/// `sum_{k>=0} (-1)^k a_k` using `n` terms of the Cohen, Rodriguez Villegas
/// and Zagier acceleration. For `a_k` a moment sequence of a positive measure
/// on `[0, 1]` the error is bounded by `2 a_0 / 5.828^n`.
pub fn alternating_sum(terms: &[f64]) -> f64 {
    let n = terms.len();
    if n == 0 {
        return 0.0;
    }
    let nf = n as f64;
    let mut d = (3.0 + 8f64.sqrt()).powf(nf);
    d = 0.5 * (d + 1.0 / d);
    let mut b = -1.0;
    let mut c = -d;
    let mut s = 0.0;
    for (k, &a) in terms.iter().enumerate() {
        let kf = k as f64;
        c = b - c;
        s += c * a;
        b *= (kf + nf) * (kf - nf) / ((kf + 0.5) * (kf + 1.0));
    }
    s / d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accelerates_slow_series() {
        // ln 2 = sum (-1)^k / (k + 1)
        let terms: Vec<f64> = (0..30).map(|k| 1.0 / (k as f64 + 1.0)).collect();
        assert!((alternating_sum(&terms) - std::f64::consts::LN_2).abs() < 1e-15);
        // pi^2 / 12 = sum (-1)^k / (k + 1)^2
        let terms: Vec<f64> = (0..30).map(|k| 1.0 / (k as f64 + 1.0).powi(2)).collect();
        let exact = std::f64::consts::PI.powi(2) / 12.0;
        assert!((alternating_sum(&terms) - exact).abs() < 1e-15);
    }
}
