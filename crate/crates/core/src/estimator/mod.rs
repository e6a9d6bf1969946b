//! Joint maximum-likelihood fitting over observational and single-intervention
//! regimes, and the pooled-regression baseline.

mod baseline;
mod fit;
mod likelihood;

pub use baseline::fit_reg_baseline;
pub use fit::{fit, mechanism_parameters, FitConfig, FitStatus, FittedAnm, ThetaStep};
pub use likelihood::{
    combined_log_likelihood, free_nodes, grad_theta, sigma_closed_form, Layout, NoiseCovarianceSet, Problem,
    RegimeCov, SIGMA_EIG_FLOOR, SIGMA_JITTER,
};

#[allow(unused_imports)]
pub(crate) use fit::{fit_problem, predict_with};

#[cfg(test)]
mod tests;
