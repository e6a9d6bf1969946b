//! Evaluation metrics, test-point generation and density ranking.

use nalgebra::DMatrix;
use rand::Rng as _;

use crate::data::RegimeDataset;
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Arity { expected: truth.len(), got: pred.len() });
    }
    if pred.is_empty() {
        return Err(Error::InsufficientData("mae of empty vectors".into()));
    }
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

/// 1-based ranks, ties sharing their average rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rank correlation. Undefined, and an error, when either input is
/// constant.
pub fn spearman(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Arity { expected: truth.len(), got: pred.len() });
    }
    if pred.len() < 2 {
        return Err(Error::InsufficientData("spearman needs at least 2 points".into()));
    }
    pearson(&average_ranks(pred), &average_ranks(truth))
        .ok_or_else(|| Error::Degenerate("spearman of a constant vector".into()))
}

/// Per-column `[min, max]` of the treatment columns of observational data.
pub fn treatment_box(obs: &RegimeDataset) -> Vec<(f64, f64)> {
    let k = obs.n_cols() - 1;
    (0..k)
        .map(|j| {
            obs.values()
                .column(j)
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
        })
        .collect()
}

/// `count` joint intervention points drawn uniformly from the box spanned by
/// each treatment's observational range.
pub fn uniform_test_points(obs: &RegimeDataset, count: usize, seed: u64) -> DMatrix<f64> {
    let bounds = treatment_box(obs);
    let mut rng = rng_from_seed(seed);
    let mut m = DMatrix::zeros(count, bounds.len());
    for i in 0..count {
        for (j, &(lo, hi)) in bounds.iter().enumerate() {
            m[(i, j)] = lo + (hi - lo) * rng.random::<f64>();
        }
    }
    m
}

/// Product-Gaussian kernel density estimate with Scott's bandwidth
/// `n^(-1/(d+4)) * std_j` per dimension.
#[derive(Debug, Clone)]
pub struct Kde {
    points: DMatrix<f64>,
    bandwidth: Vec<f64>,
}

impl Kde {
    pub fn new(points: DMatrix<f64>) -> Result<Self> {
        let (n, d) = points.shape();
        if n < 2 || d == 0 {
            return Err(Error::InsufficientData(format!("kde on {n}x{d} sample")));
        }
        let factor = (n as f64).powf(-1.0 / (d as f64 + 4.0));
        let bandwidth = (0..d)
            .map(|j| {
                let c = points.column(j);
                let m = c.mean();
                let sd = (c.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
                if sd > 0.0 {
                    Ok(factor * sd)
                } else {
                    Err(Error::Degenerate(format!("kde column {j} has zero variance")))
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self { points, bandwidth })
    }

    pub fn bandwidth(&self) -> &[f64] {
        &self.bandwidth
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let (n, d) = self.points.shape();
        let norm: f64 = self.bandwidth.iter().map(|h| (h * (2.0 * std::f64::consts::PI).sqrt()).ln()).sum();
        let mut terms = Vec::with_capacity(n);
        for i in 0..n {
            let mut q = 0.0;
            for j in 0..d {
                let z = (x[j] - self.points[(i, j)]) / self.bandwidth[j];
                q += z * z;
            }
            terms.push(-0.5 * q);
        }
        let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
        max + sum.ln() - (n as f64).ln() - norm
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        self.log_density(x).exp()
    }
}

/// Ranks test points (rows) by KDE density fitted on `train`; rank 1 is the
/// most probable point. Ties keep row order.
pub fn kde_rank(train: &DMatrix<f64>, test_points: &DMatrix<f64>) -> Result<Vec<usize>> {
    if train.ncols() != test_points.ncols() {
        return Err(Error::Arity { expected: train.ncols(), got: test_points.ncols() });
    }
    let kde = Kde::new(train.clone())?;
    let dens: Vec<f64> = (0..test_points.nrows())
        .map(|i| kde.log_density(test_points.row(i).transpose().as_slice()))
        .collect();
    let mut idx: Vec<usize> = (0..dens.len()).collect();
    idx.sort_by(|&a, &b| dens[b].total_cmp(&dens[a]));
    let mut ranks = vec![0; dens.len()];
    for (r, &i) in idx.iter().enumerate() {
        ranks[i] = r + 1;
    }
    Ok(ranks)
}

/// [`kde_rank`] using the treatment columns of an observational dataset.
pub fn kde_rank_treatments(train_obs: &RegimeDataset, test_points: &DMatrix<f64>) -> Result<Vec<usize>> {
    let k = train_obs.n_cols() - 1;
    kde_rank(&train_obs.values().columns(0, k).into_owned(), test_points)
}
