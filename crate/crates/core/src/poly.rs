//! Polynomial structural equations with pairwise interactions.
//!
//! Term order is canonical and fixed so that coefficient vectors from different
//! runs line up entry by entry:
//!
//! 1. intercept,
//! 2. one main effect per parent, in parent order,
//! 3. one product term per unordered parent pair `(i, j)` with `i < j`, in
//!    lexicographic pair order.
//!
//! Pure powers (`x²`) are not part of the basis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of basis terms for `parents` inputs: `1 + p + p(p-1)/2`.
pub fn n_terms(parents: usize) -> usize {
    1 + parents + parents * parents.saturating_sub(1) / 2
}

/// Writes the canonical basis expansion of `values` into `out`.
pub fn expand_into(values: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    out.extend_from_slice(values);
    for i in 0..values.len() {
        for j in (i + 1)..values.len() {
            out.push(values[i] * values[j]);
        }
    }
}

pub fn expand(values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_terms(values.len()));
    expand_into(values, &mut out);
    out
}

/// Human-readable names of the basis terms, e.g. `1`, `X1`, `X1*X2`.
pub fn term_names(parents: &[String]) -> Vec<String> {
    let mut names = vec!["1".to_string()];
    names.extend(parents.iter().cloned());
    for i in 0..parents.len() {
        for j in (i + 1)..parents.len() {
            names.push(format!("{}*{}", parents[i], parents[j]));
        }
    }
    names
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialEquation {
    pub child: String,
    pub parents: Vec<String>,
    pub coefficients: Vec<f64>,
}

impl PolynomialEquation {
    pub fn new(child: impl Into<String>, parents: Vec<String>, coefficients: Vec<f64>) -> Result<Self> {
        let expected = n_terms(parents.len());
        if coefficients.len() != expected {
            return Err(Error::Arity { expected, got: coefficients.len() });
        }
        Ok(Self { child: child.into(), parents, coefficients })
    }

    pub fn zeros(child: impl Into<String>, parents: Vec<String>) -> Self {
        let n = n_terms(parents.len());
        Self { child: child.into(), parents, coefficients: vec![0.0; n] }
    }

    /// Intercept-only equation for a root node.
    pub fn constant(child: impl Into<String>, value: f64) -> Self {
        Self { child: child.into(), parents: Vec::new(), coefficients: vec![value] }
    }

    pub fn n_terms(&self) -> usize {
        self.coefficients.len()
    }

    pub fn eval(&self, parent_values: &[f64]) -> Result<f64> {
        if parent_values.len() != self.parents.len() {
            return Err(Error::Arity { expected: self.parents.len(), got: parent_values.len() });
        }
        Ok(self.eval_unchecked(parent_values))
    }

    /// Evaluation without the arity check; callers guarantee the length.
    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> f64 {
        let c = &self.coefficients;
        let p = x.len();
        let mut acc = c[0];
        for i in 0..p {
            acc += c[1 + i] * x[i];
        }
        let mut t = 1 + p;
        for i in 0..p {
            for j in (i + 1)..p {
                acc += c[t] * x[i] * x[j];
                t += 1;
            }
        }
        acc
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let expected = n_terms(self.parents.len());
        if self.coefficients.len() != expected {
            return Err(Error::Arity { expected, got: self.coefficients.len() });
        }
        if self.coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite coefficient in equation for {}", self.child)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn zero_coefficients_evaluate_to_zero() {
        let eq = PolynomialEquation::zeros("Y", names(&["A", "B", "C"]));
        assert_eq!(eq.eval(&[3.0, -1.0, 7.5]).unwrap(), 0.0);
    }

    #[test]
    fn hand_expanded_two_parent_equation() {
        // 1 + 2*1 + 3*2 + 0.5*(1*2) = 10
        let eq = PolynomialEquation::new("Y", names(&["A", "B"]), vec![1.0, 2.0, 3.0, 0.5]).unwrap();
        assert_eq!(eq.eval(&[1.0, 2.0]).unwrap(), 10.0);
    }

    #[test]
    fn single_parent_identity() {
        let eq = PolynomialEquation::new("Y", names(&["A"]), vec![0.0, 1.0]).unwrap();
        assert_eq!(eq.eval(&[-4.25]).unwrap(), -4.25);
    }

    #[test]
    fn arity_errors() {
        assert!(PolynomialEquation::new("Y", names(&["A", "B"]), vec![0.0; 3]).is_err());
        let eq = PolynomialEquation::zeros("Y", names(&["A", "B"]));
        assert!(matches!(eq.eval(&[1.0]), Err(Error::Arity { expected: 2, got: 1 })));
    }

    #[test]
    fn term_order_is_lexicographic() {
        assert_eq!(
            term_names(&names(&["A", "B", "C"])),
            names(&["1", "A", "B", "C", "A*B", "A*C", "B*C"])
        );
        assert_eq!(expand(&[2.0, 3.0, 5.0]), vec![1.0, 2.0, 3.0, 5.0, 6.0, 10.0, 15.0]);
    }

    proptest! {
        #[test]
        fn eval_is_dot_product_with_basis(
            x in prop::collection::vec(-3.0f64..3.0, 0..5),
            seed in 0u64..1000,
        ) {
            let p = x.len();
            let coeffs: Vec<f64> = (0..n_terms(p)).map(|i| ((seed + i as u64) % 7) as f64 - 3.0).collect();
            let eq = PolynomialEquation::new("Y", (0..p).map(|i| format!("P{i}")).collect(), coeffs.clone()).unwrap();
            let dot: f64 = expand(&x).iter().zip(&coeffs).map(|(a, b)| a * b).sum();
            prop_assert!((eq.eval(&x).unwrap() - dot).abs() < 1e-9);
        }
    }
}
