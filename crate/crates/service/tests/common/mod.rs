#![allow(dead_code)]

use seqdesign_service::config::{SessionSpec, TemplateSpec};
use seqdesign_service::manager::SessionManager;
use seqdesign_service::store::SessionStore;
use std::path::Path;

/// D = 100, four filters, 100 particles: small enough for debug-free tests.
pub const SMALL: &str = r#"
[model]
version = 1
grid = { lo = 0.0, hi = 1.0, points = 100 }
kernel = { sigma = 0.2, length_scale = 0.05 }
templates = { kind = "builtin", name = "trigonometric" }
filters = { kind = "tiling", lo = 0.0, hi = 1.0, count = 4 }

[design]
n_particles = 100
rng_seed = 7
"#;

pub fn small_spec() -> SessionSpec {
    SessionSpec::from_toml(SMALL).unwrap()
}

/// Two copies of the same template: no filter can be informative.
pub fn identical_spec() -> SessionSpec {
    let mut spec = small_spec();
    let row: Vec<f64> = (0..100).map(|i| 1.0 + (i as f64 / 99.0)).collect();
    spec.model.templates = TemplateSpec::Inline {
        names: vec!["a".into(), "b".into()],
        values: vec![row.clone(), row],
    };
    spec
}

pub fn manager(dir: &Path) -> SessionManager {
    SessionManager::new(SessionStore::open(dir).unwrap())
}
