//! Privacy-preserving distributed computation over real and complex data.
//!
//! Secrets are hidden behind Gaussian-masked polynomials evaluated at the
//! complex roots of unity ([`sharing`]); workers evaluate functions on their
//! shares and the master recovers the result as a fixed linear combination
//! ([`runtime`]). [`privacy`] and [`accuracy`] give the closed-form leakage
//! and floating-point error bounds with numerical oracles, and [`learning`]
//! trains a logistic-regression model on secret-shared data.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accuracy;
pub mod error;
pub mod exec;
pub mod learning;
pub mod linalg;
pub mod privacy;
pub mod runtime;
pub mod sharing;

pub use error::{Error, Result};
pub use exec::Execution;
