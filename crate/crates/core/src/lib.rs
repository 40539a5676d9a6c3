//! Riemannian classification of EEG epochs from covariance and
//! functional-connectivity matrices.
//!
//! Trials are turned into SPD matrices ([`connectivity`]), classified by
//! minimum distance to Kärcher means after Fisher geodesic filtering
//! ([`classify`]), and stacked into a ridge ensemble. [`transfer`] reuses a
//! trained subject's model on another subject whose mean covariance is
//! closest, and [`eval`] holds scoring and cross-validation.

pub mod classify;
pub mod connectivity;
pub mod error;
pub mod eval;
pub mod manifold;
pub mod spd;
pub mod transfer;

pub use error::{Error, Result};
