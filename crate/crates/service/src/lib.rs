//! Live observing sessions over the design engine: configuration files,
//! atomic per-session persistence, a session manager shared by the CLI and
//! the HTTP API, and the batch experiment driver.

pub mod api;
pub mod cli;
pub mod config;
pub mod error;
pub mod manager;
pub mod store;

pub use error::{ServiceError, ServiceResult};
