//! The pooled-regression (REG) baseline: regress `Y` on the basis of its
//! parents over every row of every regime.

use nalgebra::{DMatrix, DVector};

use crate::data::RegimeDataset;
use crate::error::{Error, Result};
use crate::linalg::least_squares;
use crate::poly::{expand_into, n_terms, PolynomialEquation};

pub fn fit_reg_baseline(data: &[RegimeDataset], outcome_parents: &[String]) -> Result<PolynomialEquation> {
    let first = data.first().ok_or_else(|| Error::InsufficientData("no datasets".into()))?;
    let names = first.names();
    let y = names.len() - 1;
    let idx: Vec<usize> = outcome_parents
        .iter()
        .map(|p| {
            names
                .iter()
                .position(|n| n == p)
                .filter(|&i| i != y)
                .ok_or_else(|| Error::UnknownVariable(p.clone()))
        })
        .collect::<Result<_>>()?;
    let values = RegimeDataset::concat_values(data)?;
    let n = values.nrows();
    let m = n_terms(idx.len());
    let mut design = DMatrix::zeros(n, m);
    let mut buf = Vec::with_capacity(m);
    let mut pv = Vec::with_capacity(idx.len());
    for i in 0..n {
        pv.clear();
        pv.extend(idx.iter().map(|&p| values[(i, p)]));
        expand_into(&pv, &mut buf);
        for (t, v) in buf.iter().enumerate() {
            design[(i, t)] = *v;
        }
    }
    let target = DVector::from_iterator(n, values.column(y).iter().copied());
    let beta = least_squares(&design, &target)?;
    PolynomialEquation::new(names[y].clone(), outcome_parents.to_vec(), beta.iter().copied().collect())
}
