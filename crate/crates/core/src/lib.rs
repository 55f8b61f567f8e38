//! Name-concentration risk for small credit portfolios.
//!
//! Exact granularity adjustments by Monte Carlo in the single-factor
//! default-mode and rating-migration (mark-to-market) models, analytic
//! approximations, and the estimation routines that feed them.

// `!(x > 0.0)` also rejects NaN; index loops mirror the matrix algebra.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analytic;
pub mod config;
pub mod error;
pub mod estimation;
pub mod fixtures;
pub mod irb;
pub mod mc;
pub mod mtm;
pub mod normal;
pub mod optim;
pub mod params;
pub mod portfolio;
pub mod quadrature;
pub mod ratings;
pub mod report;
mod sum;
pub mod yieldcurve;

pub use error::{Error, Result};
pub use params::{RhoMode, RiskParams};
pub use portfolio::{load_portfolio, LgdSpec, LoadOptions, LoanPosition, Portfolio};
pub use ratings::{RatingScale, ThresholdTable, TransitionMatrix};
pub use yieldcurve::NssParams;
