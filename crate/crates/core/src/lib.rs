//! Estimation of joint interventional effects `E[Y | do(X_1, .., X_K)]` from
//! observational data plus single-variable interventions, under hidden
//! confounding, for additive-Gaussian-noise structural causal models.

pub mod bootstrap;
pub mod counterexample;
pub mod data;
pub mod error;
pub mod estimator;
pub mod graph;
pub mod harness;
pub mod identify2;
pub mod linalg;
pub mod metrics;
pub mod parallel;
pub mod poly;
pub mod rng;
pub mod scm;
pub mod simgen;

pub use data::{RegimeDataset, RegimeTag};
pub use error::{Error, Result};
pub use graph::CausalGraph;
pub use poly::PolynomialEquation;
pub use scm::{Regime, Scm};
