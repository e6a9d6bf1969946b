//! Regime-stratified bootstrap.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::RegimeDataset;
use crate::error::{Error, Result};
use crate::parallel::map_indexed;
use crate::rng::{rng_from_seed, split_seed};

/// Resamples rows with replacement inside each dataset independently, so
/// every regime keeps its size.
pub fn resample_stratified(data: &[RegimeDataset], seed: u64) -> Vec<RegimeDataset> {
    data.iter()
        .enumerate()
        .map(|(i, d)| {
            let mut rng = rng_from_seed(split_seed(seed, i as u64));
            let n = d.n_rows();
            let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            d.select_rows(&rows)
        })
        .collect()
}

/// Linear-interpolation quantile of sorted data, `q` in `[0, 1]`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// Replicated statistics, one row per successful resample.
#[derive(Debug, Clone)]
pub struct BootstrapRun {
    pub replicates: Vec<Vec<f64>>,
    pub failures: usize,
}

impl BootstrapRun {
    fn column(&self, j: usize) -> Vec<f64> {
        let mut v: Vec<f64> = self.replicates.iter().map(|r| r[j]).collect();
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn dim(&self) -> usize {
        self.replicates.first().map_or(0, Vec::len)
    }

    /// Central percentile intervals at the given coverage level (0.95 gives
    /// the 2.5% and 97.5% quantiles).
    pub fn intervals(&self, level: f64) -> Vec<Interval> {
        let a = (1.0 - level) / 2.0;
        (0..self.dim())
            .map(|j| {
                let v = self.column(j);
                Interval { lower: quantile_sorted(&v, a), upper: quantile_sorted(&v, 1.0 - a) }
            })
            .collect()
    }

    pub fn std_errors(&self) -> Vec<f64> {
        let b = self.replicates.len() as f64;
        (0..self.dim())
            .map(|j| {
                let v = self.column(j);
                let m = v.iter().sum::<f64>() / b;
                (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (b - 1.0)).sqrt()
            })
            .collect()
    }
}

/// Runs `stat` on `b` stratified resamples. Failed resamples are dropped and
/// counted; more than `b / 2` failures is an error.
pub fn bootstrap<F>(data: &[RegimeDataset], b: usize, seed: u64, stat: F) -> Result<BootstrapRun>
where
    F: Fn(&[RegimeDataset]) -> Result<Vec<f64>> + Sync + Send,
{
    if b < 2 {
        return Err(Error::InvalidArgument("bootstrap needs at least 2 resamples".into()));
    }
    let results = map_indexed(b, |i| stat(&resample_stratified(data, split_seed(seed, i as u64))));
    let mut replicates = Vec::with_capacity(b);
    let mut failures = 0;
    let mut last_err = None;
    for r in results {
        match r {
            Ok(v) => replicates.push(v),
            Err(e) => {
                failures += 1;
                last_err = Some(e);
            }
        }
    }
    if failures * 2 > b {
        return Err(Error::Degenerate(format!(
            "{failures} of {b} bootstrap refits failed; last error: {}",
            last_err.map(|e| e.to_string()).unwrap_or_default()
        )));
    }
    if replicates.len() < 2 {
        return Err(Error::Degenerate("fewer than 2 successful bootstrap refits".into()));
    }
    Ok(BootstrapRun { replicates, failures })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::RegimeTag;
    use nalgebra::DMatrix;

    fn toy() -> Vec<RegimeDataset> {
        let names = vec!["X1".to_string(), "Y".to_string()];
        vec![
            RegimeDataset::new(names.clone(), RegimeTag::Observational, DMatrix::from_fn(7, 2, |i, j| (i + j) as f64))
                .unwrap(),
            RegimeDataset::new(names, RegimeTag::Do(0), DMatrix::from_fn(3, 2, |i, _| i as f64)).unwrap(),
        ]
    }

    #[test]
    fn strata_keep_their_sizes_and_rows() {
        let data = toy();
        let r = resample_stratified(&data, 4);
        assert_eq!(r[0].n_rows(), 7);
        assert_eq!(r[1].n_rows(), 3);
        assert_eq!(r[1].tag(), &RegimeTag::Do(0));
        for i in 0..7 {
            let row = r[0].row(i);
            assert_eq!(row[1] - row[0], 1.0);
        }
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
        assert!((quantile_sorted(&v, 0.5) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn constant_statistic_has_zero_width() {
        let run = bootstrap(&toy(), 20, 1, |_| Ok(vec![3.0])).unwrap();
        assert_eq!(run.intervals(0.95)[0].width(), 0.0);
        assert_eq!(run.std_errors()[0], 0.0);
    }

    #[test]
    fn too_many_failures_is_an_error() {
        let err = bootstrap(&toy(), 10, 1, |d| {
            if d[0].row(0)[0] < 5.0 {
                Err(Error::Degenerate("x".into()))
            } else {
                Ok(vec![1.0])
            }
        });
        assert!(err.is_err());
        let ok = bootstrap(&toy(), 10, 1, |_| Ok(vec![1.0])).unwrap();
        assert_eq!(ok.failures, 0);
        assert!(bootstrap(&toy(), 1, 1, |_| Ok(vec![1.0])).is_err());
    }
}
