//! Minimax signal detection in the Gaussian sequence model.
//!
//! The crate computes non-asymptotic bounds on the minimax separation radius,
//! solves the quartic extremal problem behind Ingster filters, builds and
//! calibrates spectral cut-off and Ingster tests, estimates error
//! probabilities by Monte Carlo and checks asymptotic rates numerically.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod bounds;
pub mod cli;
pub mod detection;
pub mod error;
pub mod extremal;
pub mod mc;
pub mod model;
pub mod numeric;

pub use bounds::{BoundsReport, ErrorBudget};
pub use detection::{DetectionTest, IngsterTest, SpectralTest, TestOutcome};
pub use error::{Error, Result};
pub use extremal::ExtremalSolution;
pub use mc::{Execution, PowerEstimate};
pub use model::{ProblemSpec, RngStream, SequenceFamily, Signal, SignalClass};

/// Library version embedded in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
