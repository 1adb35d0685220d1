//! Bounds, closed forms and a nested-binning simulator for scalable source
//! coding with degraded side information at two (or, for Gaussian sources,
//! N) decoders.
//!
//! Information quantities are in bits throughout.

pub mod binsim;
pub mod dsbs;
pub mod error;
pub mod gaussian;
pub mod probcore;
pub mod rateloss;
pub mod rdopt;
pub mod regions;

pub use error::{Error, Result};
