//! Gauss-Hermite quadrature rules for the weight `exp(-x^2)`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Nodes and weights of an `n`-point Gauss-Hermite rule, nodes ascending.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

const PI_M4: f64 = 0.751_125_544_464_942_5;

/// Orthonormal Hermite values `(p_n(z), p_{n-1}(z))`.
fn recurrence(n: usize, z: f64) -> (f64, f64) {
    let mut p1 = PI_M4;
    let mut p2 = 0.0;
    for j in 0..n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
    }
    (p1, p2)
}

impl GaussHermite {
    /// Golub-Welsch eigenvalues of the Jacobi matrix as starting points,
    /// polished by Newton on the orthonormal Hermite recurrence, which also
    /// yields the weights.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "quadrature needs at least one node");
        let jacobi = nalgebra::DMatrix::from_fn(n, n, |i, j| {
            if i + 1 == j || j + 1 == i {
                (i.max(j) as f64 / 2.0).sqrt()
            } else {
                0.0
            }
        });
        let mut seeds: Vec<f64> = jacobi.symmetric_eigenvalues().iter().copied().collect();
        seeds.sort_by(f64::total_cmp);
        let nf = n as f64;
        let mut nodes: Vec<f64> = Vec::with_capacity(n);
        let mut weights: Vec<f64> = Vec::with_capacity(n);
        for (i, &seed) in seeds.iter().enumerate() {
            // Exploit symmetry so the rule is exactly symmetric.
            if i >= n.div_ceil(2) {
                let k = n - 1 - i;
                nodes.push(-nodes[k]);
                weights.push(weights[k]);
                continue;
            }
            let mut z = if n % 2 == 1 && i == n / 2 { 0.0 } else { seed };
            for _ in 0..50 {
                let (p1, p2) = recurrence(n, z);
                let step = p1 / ((2.0 * nf).sqrt() * p2);
                z -= step;
                if step.abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            let pp = (2.0 * nf).sqrt() * recurrence(n, z).1;
            nodes.push(z);
            weights.push(2.0 / (pp * pp));
        }
        GaussHermite { nodes, weights }
    }

    /// Shared rule for `n` nodes.
    pub fn cached(n: usize) -> Arc<GaussHermite> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussHermite>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("quadrature cache poisoned");
        guard
            .entry(n)
            .or_insert_with(|| Arc::new(GaussHermite::new(n)))
            .clone()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `E[f(X)]` for `X ~ N(mean, sd^2)`.
    pub fn normal_expectation(&self, mean: f64, sd: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let scale = std::f64::consts::SQRT_2 * sd;
        let total: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mean + scale * x))
            .sum();
        total / std::f64::consts::PI.sqrt()
    }
}
