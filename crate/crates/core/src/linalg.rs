//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Pivot tolerance used for positive-definiteness checks.
pub const PD_TOL: f64 = 1e-10;

/// Cholesky factor with every diagonal pivot above [`PD_TOL`].
pub fn checked_cholesky(m: &DMatrix<f64>, what: &str) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    if !m.is_square() {
        return Err(Error::NotPositiveDefinite(format!("{what}: not square")));
    }
    if !is_symmetric(m, 1e-9) {
        return Err(Error::NotPositiveDefinite(format!("{what}: not symmetric")));
    }
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))?;
    let l = chol.l_dirty();
    for i in 0..m.nrows() {
        if l[(i, i)] * l[(i, i)] <= PD_TOL {
            return Err(Error::NotPositiveDefinite(format!("{what}: pivot {i} below tolerance")));
        }
    }
    Ok(chol)
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    let scale = m.amax().max(1.0);
    (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol * scale))
}

/// Least-squares solution of `design * beta ≈ target` via thin QR.
pub fn least_squares(design: &DMatrix<f64>, target: &DVector<f64>) -> Result<DVector<f64>> {
    let (n, p) = design.shape();
    if n < p {
        return Err(Error::InsufficientData(format!("{n} rows for {p} unknowns")));
    }
    if target.len() != n {
        return Err(Error::Arity { expected: n, got: target.len() });
    }
    // Column scaling keeps the rank test meaningful for mixed-magnitude features.
    let scales: Vec<f64> = (0..p)
        .map(|j| {
            let norm = design.column(j).norm();
            if norm > 0.0 {
                norm
            } else {
                1.0
            }
        })
        .collect();
    let mut scaled = design.clone();
    for (j, s) in scales.iter().enumerate() {
        scaled.column_mut(j).unscale_mut(*s);
    }
    let qr = scaled.qr();
    let r = qr.r();
    let rmax = (0..p).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    for i in 0..p {
        if r[(i, i)].abs() <= 1e-10 * rmax.max(f64::MIN_POSITIVE) || rmax == 0.0 {
            return Err(Error::RankDeficient(format!("column {i} of {p} is collinear")));
        }
    }
    let qt_b = qr.q().transpose() * target;
    let mut beta = r
        .solve_upper_triangular(&qt_b)
        .ok_or_else(|| Error::RankDeficient("triangular solve failed".into()))?;
    for (j, s) in scales.iter().enumerate() {
        beta[j] /= s;
    }
    Ok(beta)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.min()
}

/// Symmetrises in place: `(m + mᵀ) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}


/// Serde adapter storing a matrix as row-major nested arrays.
pub mod rows_serde {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(serde::de::Error::custom("ragged matrix"));
        }
        Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn least_squares_recovers_exact_line() {
        let x = DMatrix::from_fn(5, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        let y = DVector::from_fn(5, |i, _| 3.0 - 2.0 * i as f64);
        let b = least_squares(&x, &y).unwrap();
        assert!((b[0] - 3.0).abs() < 1e-12 && (b[1] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn least_squares_flags_collinear_columns() {
        let x = DMatrix::from_fn(5, 2, |_, _| 1.0);
        let y = DVector::zeros(5);
        assert!(matches!(least_squares(&x, &y), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(checked_cholesky(&m, "m").is_err());
        assert!(checked_cholesky(&DMatrix::identity(3, 3), "i").is_ok());
    }
}
