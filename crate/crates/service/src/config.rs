//! TOML/JSON configuration for sessions and batch experiments.
//!
//! A [`ModelSpec`] may point at files (template CSVs). [`ModelSpec::resolve`]
//! turns it into a self-contained spec with inline templates and an explicit
//! filter list; that resolved form is what session records store, so a state
//! file never depends on anything outside itself.

use crate::error::{ServiceError, ServiceResult};
use seqdesign_core::experiment::{Experiment, TruthSpec};
use seqdesign_core::smc::{DesignConfig, Strategy};
use seqdesign_core::spectral::{Filter, FilterBank, FrequencyGrid, KernelConfig, SpectralModel, TemplateSet};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TemplateSpec {
    /// A template family shipped with the library (`trigonometric`).
    Builtin { name: String },
    /// CSV with header `nu,<name>,...`, interpolated onto the grid. Relative
    /// paths are taken from the config file's directory.
    Csv { path: PathBuf },
    /// Values already on the grid.
    Inline { names: Vec<String>, values: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FilterSpec {
    /// `count` equal-width filters over `[lo, hi]`, ids `B01`, `B02`, ...
    Tiling { lo: f64, hi: f64, count: usize },
    List { items: Vec<Filter> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub version: u32,
    pub grid: GridSpec,
    pub kernel: KernelConfig,
    pub templates: TemplateSpec,
    pub filters: FilterSpec,
}

fn invalid(field: &str, e: impl std::fmt::Display) -> ServiceError {
    ServiceError::InvalidConfig {
        field: field.to_string(),
        message: e.to_string(),
    }
}

impl ModelSpec {
    /// Self-contained copy: inline templates, explicit filter list.
    pub fn resolve(&self, base_dir: &Path) -> ServiceResult<ModelSpec> {
        if self.version != CONFIG_VERSION {
            return Err(invalid(
                "model.version",
                format!("unsupported version {}, expected {CONFIG_VERSION}", self.version),
            ));
        }
        let grid = self.grid()?;
        let templates = match &self.templates {
            TemplateSpec::Builtin { name } if name == "trigonometric" => {
                TemplateSet::trigonometric(&grid).map_err(|e| invalid("model.templates", e))?
            }
            TemplateSpec::Builtin { name } => {
                return Err(invalid("model.templates.name", format!("unknown builtin `{name}`")))
            }
            TemplateSpec::Csv { path } => {
                let full = if path.is_absolute() { path.clone() } else { base_dir.join(path) };
                let file = std::fs::File::open(&full)
                    .map_err(|e| invalid("model.templates.path", format!("{}: {e}", full.display())))?;
                TemplateSet::from_csv_reader(file, &grid).map_err(|e| invalid("model.templates.path", e))?
            }
            TemplateSpec::Inline { names, values } => {
                if values.iter().any(|row| row.len() != grid.len()) {
                    return Err(invalid(
                        "model.templates.values",
                        format!("every row needs {} values, one per grid point", grid.len()),
                    ));
                }
                TemplateSet::new(names.clone(), values.clone()).map_err(|e| invalid("model.templates", e))?
            }
        };
        let bank = match &self.filters {
            FilterSpec::Tiling { lo, hi, count } => {
                if *count == 0 {
                    return Err(invalid("model.filters.count", "must be positive"));
                }
                FilterBank::tiling(*lo, *hi, *count)
            }
            FilterSpec::List { items } => FilterBank::new(items.clone()),
        }
        .map_err(|e| invalid("model.filters", e))?;
        Ok(ModelSpec {
            version: self.version,
            grid: self.grid.clone(),
            kernel: self.kernel,
            templates: TemplateSpec::Inline {
                names: templates.names().to_vec(),
                values: (0..templates.len()).map(|i| templates.row(i).to_vec()).collect(),
            },
            filters: FilterSpec::List {
                items: bank.filters().to_vec(),
            },
        })
    }

    fn grid(&self) -> ServiceResult<FrequencyGrid> {
        FrequencyGrid::uniform(self.grid.lo, self.grid.hi, self.grid.points).map_err(|e| invalid("model.grid", e))
    }

    /// Resolve and assemble the model (GP factorization included).
    pub fn build(&self, base_dir: &Path) -> ServiceResult<SpectralModel> {
        let resolved = self.resolve(base_dir)?;
        let (TemplateSpec::Inline { names, values }, FilterSpec::List { items }) =
            (&resolved.templates, &resolved.filters)
        else {
            unreachable!("resolve returns inline templates and a filter list");
        };
        let grid = resolved.grid()?;
        let templates = TemplateSet::new(names.clone(), values.clone()).map_err(|e| invalid("model.templates", e))?;
        let bank = FilterBank::new(items.clone()).map_err(|e| invalid("model.filters", e))?;
        self.kernel.validate().map_err(|e| invalid("model.kernel", e))?;
        SpectralModel::new(grid, templates, bank, self.kernel).map_err(|e| invalid("model", e))
    }
}

fn default_strategy() -> Strategy {
    Strategy::Smcs
}

/// Everything needed to open a live session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionSpec {
    pub model: ModelSpec,
    #[serde(default)]
    pub design: DesignConfig,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    /// Stop after this many observations; unlimited when absent.
    #[serde(default)]
    pub t_max: Option<usize>,
}

impl SessionSpec {
    pub fn from_toml(text: &str) -> ServiceResult<Self> {
        toml::from_str(text).map_err(|e| invalid("toml", e))
    }

    pub fn check(&self, model: &SpectralModel) -> ServiceResult<()> {
        self.design
            .validate(model.templates.len())
            .map_err(|e| invalid("design", e))?;
        if self.strategy == Strategy::Gs && model.templates.len() != 2 {
            return Err(invalid(
                "strategy",
                format!("gs needs exactly two templates, found {}", model.templates.len()),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    List(Vec<u64>),
    Range { start: u64, count: u64 },
}

impl SeedSpec {
    pub fn seeds(&self) -> Vec<u64> {
        match self {
            SeedSpec::List(v) => v.clone(),
            SeedSpec::Range { start, count } => (*start..start + count).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub steps: PathBuf,
    pub summary: PathBuf,
}

/// A batch of simulated sessions across strategies and seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub model: ModelSpec,
    #[serde(default)]
    pub design: DesignConfig,
    pub truth: TruthSpec,
    pub strategies: Vec<Strategy>,
    pub seeds: SeedSpec,
    pub t_max: usize,
    pub output: OutputSpec,
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> ServiceResult<Self> {
        toml::from_str(text).map_err(|e| invalid("toml", e))
    }

    pub fn experiment(&self, base_dir: &Path) -> ServiceResult<Experiment> {
        let model = Arc::new(self.model.build(base_dir)?);
        if let TruthSpec::Mixture { weights } | TruthSpec::MixtureWithDeviation { weights } = &self.truth {
            if weights.len() != model.templates.len() {
                return Err(invalid(
                    "truth.weights",
                    format!("{} weights for {} templates", weights.len(), model.templates.len()),
                ));
            }
        }
        let exp = Experiment {
            model,
            design: self.design.clone(),
            truth: self.truth.clone(),
            strategies: self.strategies.clone(),
            seeds: self.seeds.seeds(),
            t_max: self.t_max,
        };
        exp.validate().map_err(|e| invalid("experiment", e))?;
        Ok(exp)
    }

    /// Output paths, relative ones taken from `base_dir`.
    pub fn output_paths(&self, base_dir: &Path) -> (PathBuf, PathBuf) {
        let fix = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base_dir.join(p) };
        (fix(&self.output.steps), fix(&self.output.summary))
    }
}

/// What a config file turned out to be.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyConfig {
    Session(SessionSpec),
    Experiment(ExperimentSpec),
}

/// Parse either kind; experiment files are recognised by `[truth]`.
pub fn parse_any(text: &str) -> ServiceResult<AnyConfig> {
    let value: toml::Table = toml::from_str(text).map_err(|e| invalid("toml", e))?;
    if value.contains_key("truth") {
        ExperimentSpec::from_toml(text).map(AnyConfig::Experiment)
    } else {
        SessionSpec::from_toml(text).map(AnyConfig::Session)
    }
}
