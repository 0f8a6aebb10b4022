//! Temporal ETAS (Hawkes) models: catalogues, the exact likelihood, the
//! copula prior links and the binned log-components used for linearised
//! inference.

pub mod binning;
pub mod catalog;
pub mod error;
pub mod intensity;
pub mod link;
pub mod model;

pub use binning::{BinningConfig, Component, TimeBin};
pub use catalog::{load_catalog, split_domain, validate, Catalog, CsvFormat, Event, TimeDomain, ValidationReport};
pub use error::{Error, Result};
pub use link::{InternalParams, PriorSpec, Target};
pub use model::{EtasParams, MagnitudeModel};
