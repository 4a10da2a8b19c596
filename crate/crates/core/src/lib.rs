//! Sequential experimental design for photometric filter selection.
//!
//! A source's log-SED is modelled as a mixture of templates plus a Gaussian
//! process deviation; photon counts through filters are Poisson. The crate
//! provides moment matching of filter log-intensities ([`polna`]), the
//! approximate multivariate Poisson log-normal pmf ([`pln`]), and a
//! sequential Monte Carlo design loop ([`smc`]).

pub mod error;
pub mod exec;
pub mod experiment;
pub mod numeric;
pub mod rng;
pub mod pln;
pub mod polna;
pub mod serde_float;
pub mod smc;
pub mod spectral;

pub use error::{Error, Result};
