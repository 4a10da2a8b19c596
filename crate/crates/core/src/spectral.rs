//! Templates, filters, the squared-exponential GP prior on the log-SED
//! deviation, and the photon-count simulator.
//!
//! The frequency axis is discretized into cells; a cell-centred point
//! `nu_j` carries quadrature width `w_j`, and a filter `(lo, hi]` collects
//! every point with `lo < nu_j <= hi`. Adjacent filters therefore partition
//! the grid without double counting.

use crate::error::{Error, Result};
use crate::numeric::linalg::cholesky_with_jitter;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use std::ops::Range;

/// Largest Poisson rate the simulator accepts.
pub const MAX_RATE: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    lo: f64,
    hi: f64,
    points: Vec<f64>,
    widths: Vec<f64>,
}

impl FrequencyGrid {
    /// `d` cell-centred points on `[lo, hi]`, each of width `(hi - lo) / d`.
    pub fn uniform(lo: f64, hi: f64, d: usize) -> Result<Self> {
        if d < 2 || !(hi > lo) {
            return Err(Error::InvalidConfig(format!(
                "uniform grid needs d >= 2 and lo < hi (got d={d}, [{lo}, {hi}])"
            )));
        }
        let h = (hi - lo) / d as f64;
        let points = (0..d).map(|j| lo + (j as f64 + 0.5) * h).collect();
        Ok(FrequencyGrid {
            lo,
            hi,
            points,
            widths: vec![h; d],
        })
    }

    pub fn new(lo: f64, hi: f64, points: Vec<f64>, widths: Vec<f64>) -> Result<Self> {
        if points.len() < 2 || points.len() != widths.len() {
            return Err(Error::InvalidConfig(
                "grid needs at least two points with matching widths".into(),
            ));
        }
        if points.windows(2).any(|p| !(p[0] < p[1])) {
            return Err(Error::InvalidConfig("grid points must be strictly increasing".into()));
        }
        if widths.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::InvalidConfig("grid widths must be positive".into()));
        }
        if points[0] < lo || points[points.len() - 1] > hi {
            return Err(Error::InvalidConfig("grid points fall outside the grid span".into()));
        }
        Ok(FrequencyGrid {
            lo,
            hi,
            points,
            widths,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn span(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// Indices of the points inside `(lo, hi]`.
    pub fn indices_in(&self, lo: f64, hi: f64) -> Range<usize> {
        let start = self.points.partition_point(|&p| p <= lo);
        let end = self.points.partition_point(|&p| p <= hi);
        start..end.max(start)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Filter {
    pub id: String,
    pub lo: f64,
    pub hi: f64,
}

impl Filter {
    pub fn new(id: impl Into<String>, lo: f64, hi: f64) -> Self {
        Filter {
            id: id.into(),
            lo,
            hi,
        }
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterBank {
    filters: Vec<Filter>,
}

impl FilterBank {
    pub fn new(filters: Vec<Filter>) -> Result<Self> {
        if filters.is_empty() {
            return Err(Error::InvalidConfig("filter bank is empty".into()));
        }
        for (i, f) in filters.iter().enumerate() {
            if !(f.lo < f.hi) {
                return Err(Error::InvalidConfig(format!(
                    "filter `{}` has lo >= hi ({} >= {})",
                    f.id, f.lo, f.hi
                )));
            }
            if filters[..i].iter().any(|g| g.id == f.id) {
                return Err(Error::InvalidConfig(format!("duplicate filter id `{}`", f.id)));
            }
        }
        Ok(FilterBank { filters })
    }

    /// `count` equal-width filters tiling `[lo, hi]`, ids `B01`, `B02`, ...
    pub fn tiling(lo: f64, hi: f64, count: usize) -> Result<Self> {
        let step = (hi - lo) / count as f64;
        let filters = (0..count)
            .map(|i| {
                let a = lo + i as f64 * step;
                let b = if i + 1 == count { hi } else { lo + (i + 1) as f64 * step };
                Filter::new(format!("B{:02}", i + 1), a, b)
            })
            .collect();
        FilterBank::new(filters)
    }

    pub fn filters(&self) -> &[Filter] {
        &self.filters
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }

    pub fn get(&self, index: usize) -> &Filter {
        &self.filters[index]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.filters.iter().position(|f| f.id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelFamily {
    #[default]
    SquaredExponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    #[serde(default)]
    pub family: KernelFamily,
    pub sigma: f64,
    pub length_scale: f64,
}

impl KernelConfig {
    pub fn squared_exponential(sigma: f64, length_scale: f64) -> Self {
        KernelConfig {
            family: KernelFamily::SquaredExponential,
            sigma,
            length_scale,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidConfig(format!("kernel sigma must be >= 0, got {}", self.sigma)));
        }
        if !(self.length_scale > 0.0) || !self.length_scale.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "kernel length_scale must be > 0, got {}",
                self.length_scale
            )));
        }
        Ok(())
    }

    pub fn eval(&self, a: f64, b: f64) -> f64 {
        match self.family {
            KernelFamily::SquaredExponential => {
                let d = a - b;
                self.sigma * self.sigma * (-(d * d) / (2.0 * self.length_scale * self.length_scale)).exp()
            }
        }
    }

    pub fn variance(&self) -> f64 {
        self.sigma * self.sigma
    }

    /// Distance beyond which the correlation is below `1e-17`.
    pub fn negligible_distance(&self) -> f64 {
        match self.family {
            KernelFamily::SquaredExponential => self.length_scale * (2.0 * 17.0 * 10f64.ln()).sqrt(),
        }
    }
}

/// Template log-SEDs on a shared grid; row `i` holds `mu_i(nu_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateSet {
    names: Vec<String>,
    values: Vec<Vec<f64>>,
}

impl TemplateSet {
    pub fn new(names: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        if names.is_empty() || names.len() != values.len() {
            return Err(Error::InvalidConfig(
                "template set needs at least one template and one name per row".into(),
            ));
        }
        let d = values[0].len();
        for (name, row) in names.iter().zip(&values) {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: row.len(),
                    context: "template row length",
                });
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "template `{name}` has a non-finite value at grid index {j}"
                )));
            }
        }
        Ok(TemplateSet { names, values })
    }

    pub fn from_fns(grid: &FrequencyGrid, templates: &[(&str, &dyn Fn(f64) -> f64)]) -> Result<Self> {
        let names = templates.iter().map(|(n, _)| n.to_string()).collect();
        let values = templates
            .iter()
            .map(|(_, f)| grid.points().iter().map(|&nu| f(nu)).collect())
            .collect();
        TemplateSet::new(names, values)
    }

    /// The two trigonometric templates `2 sin(2 pi nu) + 4`, `2 cos(2 pi nu) + 4`.
    pub fn trigonometric(grid: &FrequencyGrid) -> Result<Self> {
        use std::f64::consts::TAU;
        TemplateSet::from_fns(
            grid,
            &[
                ("sin", &|nu: f64| 2.0 * (TAU * nu).sin() + 4.0),
                ("cos", &|nu: f64| 2.0 * (TAU * nu).cos() + 4.0),
            ],
        )
    }

    /// Parse a CSV with header `nu,<name1>,<name2>,...` and linearly
    /// interpolate every column onto `grid`.
    pub fn from_csv_reader<R: std::io::Read>(reader: R, grid: &FrequencyGrid) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| Error::Parse(format!("template csv header: {e}")))?
            .clone();
        if header.len() < 2 || header.get(0) != Some("nu") {
            return Err(Error::Parse(
                "template csv header must be `nu,<name1>,...` (row 1)".into(),
            ));
        }
        let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut nu = Vec::new();
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
        for (r, record) in rdr.records().enumerate() {
            let row = r + 2;
            let record = record.map_err(|e| Error::Parse(format!("template csv row {row}: {e}")))?;
            if record.len() != header.len() {
                return Err(Error::Parse(format!(
                    "template csv row {row}: expected {} columns, found {}",
                    header.len(),
                    record.len()
                )));
            }
            for (c, field) in record.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| {
                    Error::Parse(format!(
                        "template csv row {row}, column {} (`{}`): `{field}` is not a number",
                        c + 1,
                        header.get(c).unwrap_or("?")
                    ))
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse(format!(
                        "template csv row {row}, column {}: non-finite value",
                        c + 1
                    )));
                }
                if c == 0 {
                    if let Some(&last) = nu.last() {
                        if v <= last {
                            return Err(Error::Parse(format!(
                                "template csv row {row}, column 1: nu must be strictly increasing"
                            )));
                        }
                    }
                    nu.push(v);
                } else {
                    cols[c - 1].push(v);
                }
            }
        }
        if nu.len() < 2 {
            return Err(Error::Parse("template csv needs at least two data rows".into()));
        }
        let (first, last) = (nu[0], nu[nu.len() - 1]);
        let tol = 1e-9 * (last - first).abs().max(1.0);
        let values = cols
            .iter()
            .map(|col| {
                grid.points()
                    .iter()
                    .map(|&p| {
                        if p < first - tol || p > last + tol {
                            return Err(Error::Parse(format!(
                                "template csv covers [{first}, {last}] but the grid needs nu = {p}"
                            )));
                        }
                        Ok(interpolate(&nu, col, p))
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        TemplateSet::new(names, values)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn grid_len(&self) -> usize {
        self.values[0].len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i]
    }

    /// Keep only the templates at `indices`.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        TemplateSet::new(
            indices.iter().map(|&i| self.names[i].clone()).collect(),
            indices.iter().map(|&i| self.values[i].clone()).collect(),
        )
    }
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let i = xs.partition_point(|&v| v < x);
    if i == 0 {
        return ys[0];
    }
    if i >= xs.len() {
        return ys[ys.len() - 1];
    }
    let (x0, x1) = (xs[i - 1], xs[i]);
    let t = (x - x0) / (x1 - x0);
    ys[i - 1] + t * (ys[i] - ys[i - 1])
}

/// Mixture weights on the simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MixtureWeights(Vec<f64>);

impl MixtureWeights {
    pub fn new(omega: Vec<f64>) -> Result<Self> {
        if omega.is_empty() {
            return Err(Error::InvalidConfig("mixture weights are empty".into()));
        }
        if omega.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidConfig("mixture weights must be finite and >= 0".into()));
        }
        let total: f64 = omega.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig(format!("mixture weights sum to {total}, not 1")));
        }
        Ok(MixtureWeights(omega))
    }

    /// Rescale nonnegative values onto the simplex.
    pub fn normalized(mut omega: Vec<f64>) -> Result<Self> {
        let total: f64 = omega.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidConfig("cannot normalize zero weights".into()));
        }
        omega.iter_mut().for_each(|w| *w /= total);
        MixtureWeights::new(omega)
    }

    pub fn uniform(m: usize) -> Self {
        MixtureWeights(vec![1.0 / m as f64; m])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// `sum_i omega_i mu_i(nu_j)` for every grid point.
pub fn mixture_log_intensity(weights: &MixtureWeights, templates: &TemplateSet) -> Result<Vec<f64>> {
    if weights.len() != templates.len() {
        return Err(Error::DimensionMismatch {
            expected: templates.len(),
            got: weights.len(),
            context: "mixture weights vs templates",
        });
    }
    let d = templates.grid_len();
    let mut out = vec![0.0; d];
    for (i, &w) in weights.as_slice().iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for (o, &mu) in out.iter_mut().zip(templates.row(i)) {
            *o += w * mu;
        }
    }
    Ok(out)
}

/// The `D x D` kernel matrix `k(nu_j, nu_j')`, without jitter.
pub fn gram_matrix(kernel: &KernelConfig, grid: &FrequencyGrid) -> DMatrix<f64> {
    let p = grid.points();
    DMatrix::from_fn(p.len(), p.len(), |j, k| kernel.eval(p[j], p[k]))
}

/// The discretized GP prior: the Gram matrix with the jitter needed to
/// factor it, and its Cholesky factor.
#[derive(Debug, Clone)]
pub struct GaussianProcess {
    kernel: KernelConfig,
    covariance: DMatrix<f64>,
    jitter: f64,
    chol: Option<DMatrix<f64>>,
    sd: Vec<f64>,
}

impl GaussianProcess {
    pub fn new(kernel: KernelConfig, grid: &FrequencyGrid) -> Result<Self> {
        kernel.validate()?;
        let mut covariance = gram_matrix(&kernel, grid);
        let d = grid.len();
        if kernel.sigma == 0.0 {
            return Ok(GaussianProcess {
                kernel,
                covariance,
                jitter: 0.0,
                chol: None,
                sd: vec![0.0; d],
            });
        }
        // Start the ladder at 1e-10 sigma^2 even if the bare matrix happens
        // to factor: the SE Gram matrix is numerically rank deficient.
        let scale = kernel.variance();
        let mut jitter = 1e-10 * scale;
        let chol = loop {
            let mut shifted = covariance.clone();
            for i in 0..d {
                shifted[(i, i)] += jitter;
            }
            if let Some(ch) = shifted.cholesky() {
                break ch;
            }
            jitter *= 10.0;
            if jitter > 1e-4 * scale * (1.0 + 1e-9) {
                // Last resort through the shared ladder for its error value.
                let (ch, j) = cholesky_with_jitter(&covariance, scale)?;
                jitter = j;
                break ch;
            }
        };
        for i in 0..d {
            covariance[(i, i)] += jitter;
        }
        let sd = (0..d).map(|i| covariance[(i, i)].sqrt()).collect();
        Ok(GaussianProcess {
            kernel,
            covariance,
            jitter,
            chol: Some(chol.l()),
            sd,
        })
    }

    pub fn kernel(&self) -> &KernelConfig {
        &self.kernel
    }

    pub fn is_degenerate(&self) -> bool {
        self.chol.is_none()
    }

    /// Gram matrix including jitter.
    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Per-point marginal standard deviations.
    pub fn sd(&self) -> &[f64] {
        &self.sd
    }

    pub fn cov(&self, j: usize, k: usize) -> f64 {
        self.covariance[(j, k)]
    }

    /// Column `k` of the covariance (equal to row `k`).
    pub fn cov_column(&self, k: usize) -> &[f64] {
        let d = self.covariance.nrows();
        &self.covariance.as_slice()[k * d..(k + 1) * d]
    }

    pub fn cholesky_factor(&self) -> Option<&DMatrix<f64>> {
        self.chol.as_ref()
    }

    pub fn len(&self) -> usize {
        self.sd.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sd.is_empty()
    }
}

/// One draw `mean + L z`.
pub fn sample_gp_path<R: Rng + ?Sized>(mean: &[f64], gp: &GaussianProcess, rng: &mut R) -> Result<Vec<f64>> {
    if mean.len() != gp.len() {
        return Err(Error::DimensionMismatch {
            expected: gp.len(),
            got: mean.len(),
            context: "GP mean length",
        });
    }
    let Some(l) = gp.cholesky_factor() else {
        return Ok(mean.to_vec());
    };
    let d = mean.len();
    let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let mut out = mean.to_vec();
    // Column-major lower triangle: out += sum_k L[:, k] z_k.
    let data = l.as_slice();
    for (k, &zk) in z.iter().enumerate() {
        let col = &data[k * d..(k + 1) * d];
        for j in k..d {
            out[j] += col[j] * zk;
        }
    }
    Ok(out)
}

/// `count` draws as columns of a `D x count` matrix, using one
/// matrix-matrix product.
pub fn sample_gp_paths<R: Rng + ?Sized>(
    mean: &[f64],
    gp: &GaussianProcess,
    count: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if mean.len() != gp.len() {
        return Err(Error::DimensionMismatch {
            expected: gp.len(),
            got: mean.len(),
            context: "GP mean length",
        });
    }
    let d = mean.len();
    // Draw column by column so the stream matches repeated single draws.
    let z = DMatrix::from_fn(d, count, |_, _| 0.0);
    let mut z = z;
    for c in 0..count {
        for j in 0..d {
            z[(j, c)] = rng.sample(StandardNormal);
        }
    }
    let mut out = match gp.cholesky_factor() {
        Some(l) => l * z,
        None => DMatrix::zeros(d, count),
    };
    for c in 0..count {
        for j in 0..d {
            out[(j, c)] += mean[j];
        }
    }
    Ok(out)
}

/// `sum_{lo < nu_j <= hi} e^{eta_j} w_j`.
pub fn integrated_intensity(eta: &[f64], filter: &Filter, grid: &FrequencyGrid) -> Result<f64> {
    if eta.len() != grid.len() {
        return Err(Error::DimensionMismatch {
            expected: grid.len(),
            got: eta.len(),
            context: "log-intensity length",
        });
    }
    let range = grid.indices_in(filter.lo, filter.hi);
    if range.is_empty() {
        return Err(Error::EmptyFilter(filter.id.clone()));
    }
    Ok(range.map(|j| eta[j].exp() * grid.widths()[j]).sum())
}

/// A synthetic source with fixed true log-SED.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedSource {
    pub true_weights: MixtureWeights,
    /// Frozen deviation from the template mixture, if any.
    pub deviation: Option<Vec<f64>>,
    /// `eta_true` on the grid.
    pub log_intensity: Vec<f64>,
}

impl SimulatedSource {
    /// The truth is exactly the template mixture.
    pub fn from_mixture(true_weights: MixtureWeights, templates: &TemplateSet) -> Result<Self> {
        let log_intensity = mixture_log_intensity(&true_weights, templates)?;
        Ok(SimulatedSource {
            true_weights,
            deviation: None,
            log_intensity,
        })
    }

    /// The truth is the mixture plus one GP deviation drawn now and held
    /// fixed for every later observation.
    pub fn with_gp_deviation<R: Rng + ?Sized>(
        true_weights: MixtureWeights,
        templates: &TemplateSet,
        gp: &GaussianProcess,
        rng: &mut R,
    ) -> Result<Self> {
        let mean = mixture_log_intensity(&true_weights, templates)?;
        let zeros = vec![0.0; mean.len()];
        let deviation = sample_gp_path(&zeros, gp, rng)?;
        let log_intensity = mean.iter().zip(&deviation).map(|(a, b)| a + b).collect();
        Ok(SimulatedSource {
            true_weights,
            deviation: Some(deviation),
            log_intensity,
        })
    }

    /// A truth given directly as a log-intensity (e.g. an unlisted template).
    pub fn from_log_intensity(true_weights: MixtureWeights, log_intensity: Vec<f64>) -> Self {
        SimulatedSource {
            true_weights,
            deviation: None,
            log_intensity,
        }
    }
}

/// One photon count through `filter`.
pub fn simulate_count<R: Rng + ?Sized>(
    source: &SimulatedSource,
    filter: &Filter,
    grid: &FrequencyGrid,
    rng: &mut R,
) -> Result<u64> {
    let rate = integrated_intensity(&source.log_intensity, filter, grid)?;
    if !(rate <= MAX_RATE) {
        return Err(Error::RateOverflow(rate));
    }
    if rate == 0.0 {
        return Ok(0);
    }
    let dist = Poisson::new(rate).map_err(|e| Error::InvalidConfig(format!("poisson rate {rate}: {e}")))?;
    Ok(dist.sample(rng) as u64)
}

/// Everything the likelihood computations need about the spectral setup.
#[derive(Debug, Clone)]
pub struct SpectralModel {
    pub grid: FrequencyGrid,
    pub templates: TemplateSet,
    pub bank: FilterBank,
    pub gp: GaussianProcess,
    filter_points: Vec<Range<usize>>,
}

impl SpectralModel {
    pub fn new(grid: FrequencyGrid, templates: TemplateSet, bank: FilterBank, kernel: KernelConfig) -> Result<Self> {
        if templates.grid_len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: templates.grid_len(),
                context: "template columns vs grid size",
            });
        }
        let (lo, hi) = grid.span();
        let tol = 1e-12 * (hi - lo).abs().max(1.0);
        let mut filter_points = Vec::with_capacity(bank.len());
        for f in bank.filters() {
            if f.lo < lo - tol || f.hi > hi + tol {
                return Err(Error::InvalidConfig(format!(
                    "filter `{}` [{}, {}] lies outside the grid span [{lo}, {hi}]",
                    f.id, f.lo, f.hi
                )));
            }
            let range = grid.indices_in(f.lo, f.hi);
            if range.is_empty() {
                return Err(Error::EmptyFilter(f.id.clone()));
            }
            filter_points.push(range);
        }
        let gp = GaussianProcess::new(kernel, &grid)?;
        Ok(SpectralModel {
            grid,
            templates,
            bank,
            gp,
            filter_points,
        })
    }

    /// The trigonometric two-template setup with ten width-0.1 filters.
    pub fn trigonometric_example(d: usize, kernel: KernelConfig) -> Result<Self> {
        let grid = FrequencyGrid::uniform(0.0, 1.0, d)?;
        let templates = TemplateSet::trigonometric(&grid)?;
        let bank = FilterBank::tiling(0.0, 1.0, 10)?;
        SpectralModel::new(grid, templates, bank, kernel)
    }

    pub fn with_kernel(&self, kernel: KernelConfig) -> Result<Self> {
        SpectralModel::new(self.grid.clone(), self.templates.clone(), self.bank.clone(), kernel)
    }

    pub fn kernel(&self) -> &KernelConfig {
        self.gp.kernel()
    }

    /// Grid indices covered by bank filter `index`.
    pub fn filter_points(&self, index: usize) -> Range<usize> {
        self.filter_points[index].clone()
    }

    pub fn mean_log_intensity(&self, weights: &MixtureWeights) -> Result<Vec<f64>> {
        mixture_log_intensity(weights, &self.templates)
    }

    /// Integrated intensity of a log-intensity curve through bank filter `index`.
    pub fn intensity(&self, eta: &[f64], index: usize) -> f64 {
        let w = self.grid.widths();
        self.filter_points(index).map(|j| eta[j].exp() * w[j]).sum()
    }
}
