pub mod bespoke;
pub mod catalog;
pub mod engine;
pub mod error;
pub mod optimizer;
pub mod par;
pub mod query;
pub mod sqlfront;
pub mod superopt;
pub mod workbench;
pub mod workload;

pub use error::{Error, Result};
