//! Constructive identification of `E[Y | do(X1, X2)]` for two treatments.
//!
//! With `X1 = U1`, `X2 = f2(X1) + U2`, `Y = fY(X1, X2) + UY` and jointly
//! Gaussian zero-mean noise,
//!
//! ```text
//! E[Y | X1 = x1, X2 = x2] = fY(x1, x2) + Σ_uy Σ_ux⁻¹ [x1, x2 - f2(x1)]ᵀ
//! ```
//!
//! Every quantity on the right except `fY` is recovered from the three
//! regimes, so `fY` follows from the observational regression. This gives an
//! estimator that shares no code path with the likelihood fit.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::bootstrap::{bootstrap, BootstrapRun};
use crate::data::{RegimeDataset, RegimeTag};
use crate::error::{Error, Result};
use crate::linalg::{least_squares, PD_TOL};
use crate::poly::{expand, PolynomialEquation};

/// Grid size for the cross-regime contrasts.
pub const DEFAULT_GRID_POINTS: usize = 50;

/// Estimated noise structure. `sigma_ux` is the covariance of `(U1, U2)`,
/// `sigma_uy` holds `(Cov(UY, U1), Cov(UY, U2))`, and `u2_samples` is the
/// observational residual sample standing in for `p(U2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseGeometry {
    pub sigma_ux: [[f64; 2]; 2],
    pub sigma_uy: [f64; 2],
    #[serde(skip)]
    pub u2_samples: Vec<f64>,
    pub degenerate: bool,
}

impl NoiseGeometry {
    fn ux(&self) -> Matrix2<f64> {
        Matrix2::new(self.sigma_ux[0][0], self.sigma_ux[0][1], self.sigma_ux[1][0], self.sigma_ux[1][1])
    }

    /// `Σ_ux⁻¹ Σ_uyᵀ`, the coefficients of `E[UY | U1, U2]`.
    pub fn weights(&self) -> Result<[f64; 2]> {
        let ux = self.ux();
        let chol = ux
            .cholesky()
            .filter(|c| c.l_dirty().diagonal().iter().all(|d| d * d > PD_TOL))
            .ok_or_else(|| Error::NotPositiveDefinite("sigma_ux".into()))?;
        let w = chol.solve(&Vector2::new(self.sigma_uy[0], self.sigma_uy[1]));
        Ok([w[0], w[1]])
    }

    /// `E[UY | U1 = u1, U2 = u2]`.
    pub fn conditional_mean_u(&self, u1: f64, u2: f64) -> Result<f64> {
        let w = self.weights()?;
        Ok(w[0] * u1 + w[1] * u2)
    }
}

fn check_k2(d: &RegimeDataset, tag: RegimeTag, what: &str) -> Result<()> {
    if d.n_cols() != 3 {
        return Err(Error::ColumnMismatch(format!("{what}: expected columns X1, X2, Y, got {}", d.n_cols())));
    }
    if d.tag() != &tag {
        return Err(Error::InvalidRegime(format!("{what}: expected {}, got {}", tag.label(d.names()), d.tag().label(d.names()))));
    }
    Ok(())
}

fn regress<I>(rows: I, n: usize, p: usize) -> Result<DVector<f64>>
where
    I: Iterator<Item = (Vec<f64>, f64)>,
{
    let mut design = DMatrix::zeros(n, p);
    let mut target = DVector::zeros(n);
    for (i, (features, y)) in rows.enumerate() {
        for (j, f) in features.iter().enumerate() {
            design[(i, j)] = *f;
        }
        target[i] = y;
    }
    least_squares(&design, &target)
}

/// Least-squares fit of `Y` on the two-argument basis `(1, x1, x2, x1·x2)`.
fn regress_pair(d: &RegimeDataset) -> Result<PolynomialEquation> {
    let v = d.values();
    let rows = (0..d.n_rows()).map(|i| (expand(&[v[(i, 0)], v[(i, 1)]]), v[(i, 2)]));
    let beta = regress(rows, d.n_rows(), 4)?;
    PolynomialEquation::new(d.names()[2].clone(), vec![d.names()[0].clone(), d.names()[1].clone()], beta.as_slice().to_vec())
}

/// Fits `X2` on the basis of `X1` over `do(X1)` data, where
/// `E[X2 | do(X1 = x1)] = f2(x1)`.
pub fn estimate_f2(d1: &RegimeDataset) -> Result<PolynomialEquation> {
    check_k2(d1, RegimeTag::Do(0), "estimate_f2")?;
    let v = d1.values();
    let rows = (0..d1.n_rows()).map(|i| (expand(&[v[(i, 0)]]), v[(i, 1)]));
    let beta = regress(rows, d1.n_rows(), 2)?;
    PolynomialEquation::new(d1.names()[1].clone(), vec![d1.names()[0].clone()], beta.as_slice().to_vec())
}

fn residuals_u2(d: &RegimeDataset, f2: &PolynomialEquation) -> Result<Vec<f64>> {
    let v = d.values();
    (0..d.n_rows()).map(|i| Ok(v[(i, 1)] - f2.eval(&[v[(i, 0)]])?)).collect()
}

/// Sample covariance of `U1 := X1` and `U2 := X2 - f2(X1)` on observational
/// data. A near-singular result is flagged as degenerate; `sigma_uy` is left
/// at zero for [`cross_regime_sigma`] to fill in.
pub fn residual_noise_cov(d_obs: &RegimeDataset, f2: &PolynomialEquation) -> Result<NoiseGeometry> {
    check_k2(d_obs, RegimeTag::Observational, "residual_noise_cov")?;
    let n = d_obs.n_rows();
    if n < 3 {
        return Err(Error::InsufficientData(format!("{n} observational rows")));
    }
    let u1 = d_obs.column(0);
    let u2 = residuals_u2(d_obs, f2)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n as f64;
    let (m1, m2) = (mean(&u1), mean(&u2));
    let cov = |a: &[f64], ma: f64, b: &[f64], mb: f64| {
        a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1) as f64
    };
    let s11 = cov(&u1, m1, &u1, m1);
    let s12 = cov(&u1, m1, &u2, m2);
    let s22 = cov(&u2, m2, &u2, m2);
    if !(s11.is_finite() && s12.is_finite() && s22.is_finite()) {
        return Err(Error::Degenerate("non-finite residual covariance".into()));
    }
    if s11 <= 0.0 {
        return Err(Error::NotPositiveDefinite("sigma_ux: X1 has zero variance".into()));
    }
    let m = Matrix2::new(s11, s12, s12, s22);
    let min_eig = m.symmetric_eigenvalues().min();
    let degenerate = min_eig <= PD_TOL * s11.max(s22).max(1.0);
    Ok(NoiseGeometry { sigma_ux: [[s11, s12], [s12, s22]], sigma_uy: [0.0, 0.0], u2_samples: u2, degenerate })
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

fn range(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// `points` equispaced values between the 5th and 95th percentiles of `v`.
fn percentile_grid(v: &[f64], points: usize) -> Vec<f64> {
    let s = sorted(v.to_vec());
    let lo = crate::bootstrap::quantile_sorted(&s, 0.05);
    let hi = crate::bootstrap::quantile_sorted(&s, 0.95);
    if points == 1 {
        return vec![(lo + hi) / 2.0];
    }
    (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect()
}

fn check_overlap(grid: &[f64], supports: &[(f64, f64)]) -> Result<()> {
    let uncovered: Vec<f64> = grid
        .iter()
        .copied()
        .filter(|&g| supports.iter().any(|&(lo, hi)| g < lo || g > hi))
        .collect();
    if uncovered.is_empty() {
        Ok(())
    } else {
        Err(Error::InsufficientOverlap(uncovered))
    }
}

fn slope(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let rows = x.iter().zip(y).map(|(&a, &b)| (vec![1.0, a], b));
    let beta = regress(rows, x.len(), 2)?;
    Ok((beta[0], beta[1]))
}

/// The two contrast curves behind [`cross_regime_sigma`], kept for
/// diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossRegimeContrast {
    /// Grid over `x1` and `m1(x1) ≈ E[UY | U1 = x1]`.
    pub grid_u1: Vec<f64>,
    pub m1: Vec<f64>,
    /// Grid over `u2` and `m2(u2) ≈ E[UY | U2 = u2]` up to a constant.
    pub grid_u2: Vec<f64>,
    pub m2: Vec<f64>,
    pub sigma_y1: f64,
    pub sigma_y2: f64,
}

/// Recovers `(σ_Y1, σ_Y2)` by contrasting the regimes.
///
/// For `σ_Y1`: `g1(x1) = E[Y | do(X1 = x1)]` is fit on `d1` with the basis
/// `(1, x1, x1²)` (exact here because `fY` has an `x1·x2` term and `f2` is
/// affine), `h(x1, x2) = E[Y | X1 = x1, do(X2 = x2)]` is fit on `d2`, and
/// `m1(x1) = mean_u2 h(x1, f2(x1) + u2) - g1(x1) = E[UY | U1 = x1]`. Its slope
/// times `σ11` is `σ_Y1`.
///
/// For `σ_Y2` the roles swap: `k(x1, x2) = E[Y | do(X1 = x1), X2 = x2]` from
/// `d1` carries `E[UY | U2 = x2 - f2(x1)]` while `h` carries `E[UY | U1 = x1]`,
/// so `m2(u2) = mean_u1 [k - h](u1, f2(u1) + u2)` has slope `σ_Y2 / σ22`.
pub fn cross_regime_contrast(
    d_obs: &RegimeDataset,
    d1: &RegimeDataset,
    d2: &RegimeDataset,
    f2: &PolynomialEquation,
    u2_samples: &[f64],
    grid_points: usize,
) -> Result<CrossRegimeContrast> {
    check_k2(d_obs, RegimeTag::Observational, "cross_regime_sigma")?;
    check_k2(d1, RegimeTag::Do(0), "cross_regime_sigma")?;
    check_k2(d2, RegimeTag::Do(1), "cross_regime_sigma")?;
    if grid_points < 2 {
        return Err(Error::InvalidArgument("contrast grid needs at least 2 points".into()));
    }
    if u2_samples.len() < 2 {
        return Err(Error::InsufficientData("u2 sample".into()));
    }
    let u1_samples = d_obs.column(0);
    let n1 = u1_samples.len() as f64;
    let n2 = u2_samples.len() as f64;
    let var = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
    };
    let (s11, s22) = (var(&u1_samples), var(u2_samples));

    let v1 = d1.values();
    let g1 = regress((0..d1.n_rows()).map(|i| (vec![1.0, v1[(i, 0)], v1[(i, 0)].powi(2)], v1[(i, 2)])), d1.n_rows(), 3)?;
    let h = regress_pair(d2)?;
    let k = regress_pair(d1)?;

    let grid_u1 = percentile_grid(&u1_samples, grid_points);
    check_overlap(&grid_u1, &[range(&d1.column(0)), range(&d2.column(0))])?;
    let mut m1 = Vec::with_capacity(grid_points);
    for &x1 in &grid_u1 {
        let base = f2.eval(&[x1])?;
        let avg = u2_samples.iter().map(|u2| h.eval_unchecked(&[x1, base + u2])).sum::<f64>() / n2;
        m1.push(avg - (g1[0] + g1[1] * x1 + g1[2] * x1 * x1));
    }
    let (_, b1) = slope(&grid_u1, &m1)?;

    let grid_u2 = percentile_grid(u2_samples, grid_points);
    check_overlap(&grid_u2, &[range(&residuals_u2(d1, f2)?)])?;
    let f2_u1: Vec<f64> = u1_samples.iter().map(|&u1| f2.eval_unchecked(&[u1])).collect();
    let mut m2 = Vec::with_capacity(grid_points);
    for &u2 in &grid_u2 {
        let avg = u1_samples
            .iter()
            .zip(&f2_u1)
            .map(|(&u1, &b)| {
                let x = [u1, b + u2];
                k.eval_unchecked(&x) - h.eval_unchecked(&x)
            })
            .sum::<f64>()
            / n1;
        m2.push(avg);
    }
    let (_, b2) = slope(&grid_u2, &m2)?;

    Ok(CrossRegimeContrast { grid_u1, m1, grid_u2, m2, sigma_y1: b1 * s11, sigma_y2: b2 * s22 })
}

/// `(σ_Y1, σ_Y2)` on the default grid.
pub fn cross_regime_sigma(
    d_obs: &RegimeDataset,
    d1: &RegimeDataset,
    d2: &RegimeDataset,
    f2: &PolynomialEquation,
    u2_samples: &[f64],
) -> Result<(f64, f64)> {
    let c = cross_regime_contrast(d_obs, d1, d2, f2, u2_samples, DEFAULT_GRID_POINTS)?;
    Ok((c.sigma_y1, c.sigma_y2))
}

/// `E[UY | X1 = x1, X2 = x2] = Σ_uy Σ_ux⁻¹ [x1, x2 - f2(x1)]ᵀ`.
pub fn conditional_noise_mean(geom: &NoiseGeometry, x1: f64, x2: f64, f2: &PolynomialEquation) -> Result<f64> {
    geom.conditional_mean_u(x1, x2 - f2.eval(&[x1])?)
}

/// The deconfounded surface `fY(x1, x2) = E[Y | x1, x2] - E[UY | x1, x2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstructiveSurface {
    /// Observational regression `Ê[Y | X1, X2]`.
    pub observational: PolynomialEquation,
    pub f2: PolynomialEquation,
    pub weights: [f64; 2],
}

impl ConstructiveSurface {
    pub fn eval(&self, x1: f64, x2: f64) -> f64 {
        let u2 = x2 - self.f2.eval_unchecked(&[x1]);
        self.observational.eval_unchecked(&[x1, x2]) - self.weights[0] * x1 - self.weights[1] * u2
    }

    /// The surface written in the `(1, x1, x2, x1·x2)` basis. Exact because
    /// `f2` is affine.
    pub fn coefficients(&self) -> Vec<f64> {
        let (a, b) = (self.f2.coefficients[0], self.f2.coefficients[1]);
        let [w1, w2] = self.weights;
        let c = &self.observational.coefficients;
        vec![c[0] + w2 * a, c[1] - w1 + w2 * b, c[2] - w2, c[3]]
    }
}

#[allow(non_snake_case)]
pub fn constructive_fY(d_obs: &RegimeDataset, geom: &NoiseGeometry, f2: &PolynomialEquation) -> Result<ConstructiveSurface> {
    check_k2(d_obs, RegimeTag::Observational, "constructive_fY")?;
    let observational = regress_pair(d_obs)?;
    Ok(ConstructiveSurface { observational, f2: f2.clone(), weights: geom.weights()? })
}

/// Everything the constructive procedure estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Identification {
    pub f2: PolynomialEquation,
    pub geometry: NoiseGeometry,
    pub surface: ConstructiveSurface,
}

fn pick<'a>(data: &'a [RegimeDataset], tag: RegimeTag) -> Result<&'a RegimeDataset> {
    data.iter()
        .find(|d| d.tag() == &tag)
        .ok_or_else(|| Error::InvalidRegime(format!("missing regime {tag:?}")))
}

/// Runs the full pipeline on an observational, a `do(X1)` and a `do(X2)`
/// dataset, given in any order.
pub fn identify(data: &[RegimeDataset], grid_points: usize) -> Result<Identification> {
    let d_obs = pick(data, RegimeTag::Observational)?;
    let d1 = pick(data, RegimeTag::Do(0))?;
    let d2 = pick(data, RegimeTag::Do(1))?;
    let f2 = estimate_f2(d1)?;
    let mut geometry = residual_noise_cov(d_obs, &f2)?;
    let c = cross_regime_contrast(d_obs, d1, d2, &f2, &geometry.u2_samples, grid_points)?;
    geometry.sigma_uy = [c.sigma_y1, c.sigma_y2];
    let surface = constructive_fY(d_obs, &geometry, &f2)?;
    Ok(Identification { f2, geometry, surface })
}

/// Bootstrap of `(σ_Y1, σ_Y2, f̂Y(points)...)`, stratified by regime.
pub fn bootstrap_identify(data: &[RegimeDataset], points: &[[f64; 2]], b: usize, seed: u64) -> Result<BootstrapRun> {
    bootstrap(data, b, seed, |d| {
        let id = identify(d, DEFAULT_GRID_POINTS)?;
        let mut out = vec![id.geometry.sigma_uy[0], id.geometry.sigma_uy[1]];
        out.extend(points.iter().map(|p| id.surface.eval(p[0], p[1])));
        Ok(out)
    })
}
