//! Shared fixtures for the benchmarks.

use jointfx_core::rng::split_seed;
use jointfx_core::simgen::{build_synthetic_k2, build_synthetic_k3, generate_regime_suite, random_correlation_matrix};
use jointfx_core::{RegimeDataset, Result, Scm};

pub fn k3_scm(seed: u64, c: f64) -> Result<Scm> {
    let sigma = random_correlation_matrix(4, c, split_seed(seed, 1))?;
    build_synthetic_k3(None, &sigma, split_seed(seed, 0))
}

pub fn k2_scm(seed: u64, c: f64) -> Result<Scm> {
    let sigma = random_correlation_matrix(3, c, split_seed(seed, 1))?;
    build_synthetic_k2(&[0.0, 0.8], &[0.2, 0.5, -0.7, 0.3], &sigma)
}

/// Regime suite with `n` rows per regime.
pub fn suite(scm: &Scm, n: usize, seed: u64) -> Vec<RegimeDataset> {
    generate_regime_suite(scm, n, split_seed(seed, 2)).expect("fixture suite")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_build() {
        let scm = k3_scm(1, 0.5).unwrap();
        let data = suite(&scm, 50, 1);
        assert_eq!(data.len(), 4);
        assert!(data.iter().all(|d| d.n_rows() == 50));
        assert_eq!(suite(&k2_scm(1, 0.5).unwrap(), 20, 1).len(), 3);
    }
}
