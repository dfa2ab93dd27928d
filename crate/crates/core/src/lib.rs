//! Bayesian Bell regression for overdispersed counts.
//!
//! The crate is layered bottom-up:
//!
//! - [`specfun`]: Lambert W, log Bell numbers, digamma/trigamma, log-gamma and
//!   the chi-square survival function.
//! - [`bell`]: the Bell distribution itself.
//! - [`model`]: datasets, Bell and Poisson regression likelihoods, the
//!   flat-normal and G-prior, and the log-posterior.
//! - [`sampler`]: random-walk Metropolis-Hastings and convergence diagnostics.
//! - [`inference`]: posterior summaries, model-selection criteria and the
//!   chi-square goodness-of-fit test.

pub mod bell;
pub mod inference;
pub mod model;
pub mod sampler;
pub mod specfun;

pub use bell::BellParam;
pub use inference::{CriteriaReport, GofReport, PosteriorReport};
pub use model::{Dataset, ModelKind, PriorSpec};
pub use sampler::{ChainSet, McmcConfig};
pub use specfun::LogBellTable;
