//! Gradient-sampling descent combined with local scoring.
//!
//! The crate fits additive models whose objective is not smooth: additive
//! quantile regression under the pinball loss, and generalized Pareto
//! peaks-over-threshold models whose additive structure is imposed on return
//! levels (or a return level and an expected shortfall) instead of on the
//! scale and shape parameters.
//!
//! - [`minnorm`]: min-norm element of a convex hull, with an averaging fallback.
//! - [`engine`]: the generic gradient-sampling descent loop.
//! - [`smoothing`]: local-linear, linear and cell smoothers plus backfitting.
//! - [`quantile`]: additive quantile fits.
//! - [`pot`]: additive return-level fits for GPD excesses.
//! - [`io`] and [`cli`]: CSV ingestion, synthetic data, and the `gsls` command.

pub mod error;
pub mod linalg;
pub mod minnorm;
pub mod engine;
pub mod smoothing;
pub mod quantile;
pub mod pot;
pub mod io;
pub mod cli;

pub use error::{Error, Result};
