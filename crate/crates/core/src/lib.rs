//! Aggregate indemnity-payment distributions for insured portfolios under the
//! CreditRisk+ Poisson-gamma model.
//!
//! The pipeline runs [`portfolio`] (ingest, discount, sector split) into
//! [`engine`] (banding and the loss distribution, by Panjer recursion or FFT),
//! then [`analytics`] (quantiles, moments, VaR contributions). [`oracle`] is an
//! independent Monte Carlo simulator of the same model.

pub mod analytics;
pub mod engine;
mod error;
pub mod oracle;
pub mod portfolio;

pub use error::{Error, Result};
