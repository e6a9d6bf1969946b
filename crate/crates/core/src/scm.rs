//! Additive-Gaussian-noise structural causal models.
//!
//! Every node `j` follows `X_j = f_j(PA_j) + U_j` with `f_j` a
//! [`PolynomialEquation`] and `(U_1, .., U_K, U_Y) ~ N(0, Σ)`. Noise
//! coordinates are in node order.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{RegimeDataset, RegimeTag};
use crate::error::{Error, Result};
use crate::graph::{CausalGraph, GraphDoc};
use crate::linalg::checked_cholesky;
use crate::poly::PolynomialEquation;
use crate::rng::rng_from_seed;

/// A data-generating regime with its intervention levels.
#[derive(Debug, Clone, PartialEq)]
pub enum Regime {
    Observational,
    /// `do(X_target = level)`.
    Single { target: usize, level: f64 },
    /// `do(X_1 = x_1, .., X_K = x_K)`.
    Joint { levels: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct Scm {
    graph: CausalGraph,
    equations: Vec<PolynomialEquation>,
    noise_cov: DMatrix<f64>,
    chol: DMatrix<f64>,
    fixed: BTreeMap<usize, f64>,
    parents: Vec<Vec<usize>>,
    order: Vec<usize>,
}

impl PartialEq for Scm {
    fn eq(&self, other: &Self) -> bool {
        self.graph == other.graph
            && self.equations == other.equations
            && self.noise_cov == other.noise_cov
            && self.fixed == other.fixed
    }
}

/// SCM JSON document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScmDoc {
    pub nodes: Vec<String>,
    pub directed_edges: Vec<[String; 2]>,
    pub bidirected_edges: Vec<[String; 2]>,
    pub equations: BTreeMap<String, EquationDoc>,
    pub noise_cov: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub interventions: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquationDoc {
    pub parents: Vec<String>,
    pub coefficients: Vec<f64>,
}

impl Scm {
    /// `equations` holds one entry per node in node order; roots carry an
    /// intercept-only equation.
    pub fn new(graph: CausalGraph, equations: Vec<PolynomialEquation>, noise_cov: DMatrix<f64>) -> Result<Self> {
        Self::build(graph, equations, noise_cov, BTreeMap::new())
    }

    fn build(
        graph: CausalGraph,
        equations: Vec<PolynomialEquation>,
        noise_cov: DMatrix<f64>,
        fixed: BTreeMap<usize, f64>,
    ) -> Result<Self> {
        let n = graph.n_nodes();
        if equations.len() != n {
            return Err(Error::Arity { expected: n, got: equations.len() });
        }
        for (j, eq) in equations.iter().enumerate() {
            eq.validate()?;
            if eq.child != graph.nodes()[j] {
                return Err(Error::InvalidGraph(format!(
                    "equation {j} is for `{}`, expected `{}`",
                    eq.child,
                    graph.nodes()[j]
                )));
            }
            if eq.parents != graph.parent_names(j) {
                return Err(Error::InvalidGraph(format!(
                    "parents of `{}` are {:?} in the equation but {:?} in the graph",
                    eq.child,
                    eq.parents,
                    graph.parent_names(j)
                )));
            }
        }
        if noise_cov.shape() != (n, n) {
            return Err(Error::NotPositiveDefinite(format!(
                "noise covariance is {:?}, expected {n}x{n}",
                noise_cov.shape()
            )));
        }
        let chol = checked_cholesky(&noise_cov, "noise covariance")?.l();
        let parents = (0..n).map(|j| graph.parents(j)).collect();
        let order = graph.topological_order()?;
        Ok(Self { graph, equations, noise_cov, chol, fixed, parents, order })
    }

    pub fn graph(&self) -> &CausalGraph {
        &self.graph
    }

    pub fn equations(&self) -> &[PolynomialEquation] {
        &self.equations
    }

    pub fn equation(&self, j: usize) -> &PolynomialEquation {
        &self.equations[j]
    }

    pub fn outcome_equation(&self) -> &PolynomialEquation {
        &self.equations[self.graph.outcome()]
    }

    pub fn noise_cov(&self) -> &DMatrix<f64> {
        &self.noise_cov
    }

    pub fn n_treatments(&self) -> usize {
        self.graph.n_treatments()
    }

    pub fn names(&self) -> &[String] {
        self.graph.nodes()
    }

    /// Nodes fixed by earlier `apply_do` calls.
    pub fn interventions(&self) -> &BTreeMap<usize, f64> {
        &self.fixed
    }

    /// Replaces the equations of the intervened nodes with constants and cuts
    /// their incoming directed and bidirected edges.
    pub fn apply_do(&self, interventions: &BTreeMap<String, f64>) -> Result<Self> {
        let mut targets = BTreeMap::new();
        for (name, &v) in interventions {
            let j = self.graph.index_of(name)?;
            if j == self.graph.outcome() {
                return Err(Error::InterveneOnOutcome(name.clone()));
            }
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!("non-finite level for {name}")));
            }
            targets.insert(j, v);
        }
        self.apply_do_indexed(&targets)
    }

    pub(crate) fn apply_do_indexed(&self, targets: &BTreeMap<usize, f64>) -> Result<Self> {
        if targets.is_empty() {
            return Ok(self.clone());
        }
        let idx: Vec<usize> = targets.keys().copied().collect();
        let graph = self.graph.intervened(&idx);
        let mut equations = self.equations.clone();
        let mut fixed = self.fixed.clone();
        for (&j, &v) in targets {
            equations[j] = PolynomialEquation::constant(self.graph.nodes()[j].clone(), v);
            fixed.insert(j, v);
        }
        // Children keep their parent lists; only the intervened node loses parents.
        Self::build(graph, equations, self.noise_cov.clone(), fixed)
    }

    /// `E[Y | do(X = x)]`, i.e. `f_Y` at `x` since the noise has zero mean.
    pub fn joint_effect_oracle(&self, x: &[f64]) -> Result<f64> {
        let k = self.n_treatments();
        if x.len() != k {
            return Err(Error::Arity { expected: k, got: x.len() });
        }
        let y = self.graph.outcome();
        let vals: Vec<f64> = self.parents[y].iter().map(|&p| x[p]).collect();
        Ok(self.equations[y].eval_unchecked(&vals))
    }

    /// Draws `n` rows under `regime`. The full noise vector is drawn for each
    /// row and the coordinates of intervened nodes are discarded.
    pub fn sample(&self, regime: &Regime, n: usize, seed: u64) -> Result<RegimeDataset> {
        let (tag, per_row): (RegimeTag, BTreeMap<usize, f64>) = match regime {
            Regime::Observational => (RegimeTag::Observational, BTreeMap::new()),
            Regime::Single { target, level } => {
                self.check_target(*target)?;
                (RegimeTag::Do(*target), BTreeMap::from([(*target, *level)]))
            }
            Regime::Joint { levels } => {
                let k = self.n_treatments();
                if levels.len() != k {
                    return Err(Error::Arity { expected: k, got: levels.len() });
                }
                (RegimeTag::Joint, levels.iter().copied().enumerate().collect())
            }
        };
        self.sample_rows(tag, n, seed, |_, fixed| {
            for (&j, &v) in &per_row {
                fixed[j] = Some(v);
            }
        })
    }

    /// Draws one row per entry of `levels` under `do(X_target = levels[i])`.
    pub fn sample_with_levels(&self, target: usize, levels: &[f64], seed: u64) -> Result<RegimeDataset> {
        self.check_target(target)?;
        self.sample_rows(RegimeTag::Do(target), levels.len(), seed, |i, fixed| {
            fixed[target] = Some(levels[i]);
        })
    }

    fn check_target(&self, target: usize) -> Result<()> {
        if target >= self.graph.n_nodes() {
            return Err(Error::InvalidRegime(format!("target index {target} out of range")));
        }
        if target == self.graph.outcome() {
            return Err(Error::InterveneOnOutcome(self.graph.nodes()[target].clone()));
        }
        Ok(())
    }

    fn sample_rows<F>(&self, tag: RegimeTag, n: usize, seed: u64, mut levels_for_row: F) -> Result<RegimeDataset>
    where
        F: FnMut(usize, &mut [Option<f64>]),
    {
        if n == 0 {
            return Err(Error::InvalidArgument("sample size must be at least 1".into()));
        }
        let dim = self.graph.n_nodes();
        let mut rng = rng_from_seed(seed);
        let mut out = DMatrix::zeros(n, dim);
        let mut z = DVector::zeros(dim);
        let mut x = vec![0.0; dim];
        let mut fixed = vec![None; dim];
        let mut pv = Vec::with_capacity(dim);
        for i in 0..n {
            for zi in z.iter_mut() {
                *zi = StandardNormal.sample(&mut rng);
            }
            let u = &self.chol * &z;
            fixed.iter_mut().for_each(|f| *f = None);
            for (&j, &v) in &self.fixed {
                fixed[j] = Some(v);
            }
            levels_for_row(i, &mut fixed);
            for &j in &self.order {
                x[j] = match fixed[j] {
                    Some(v) => v,
                    None => {
                        pv.clear();
                        pv.extend(self.parents[j].iter().map(|&p| x[p]));
                        self.equations[j].eval_unchecked(&pv) + u[j]
                    }
                };
            }
            for j in 0..dim {
                out[(i, j)] = x[j];
            }
        }
        RegimeDataset::new(self.names().to_vec(), tag, out)
    }

    /// Residuals `x_j - f_j(PA_j)` of every row, all columns.
    pub fn residuals(&self, data: &RegimeDataset) -> Result<DMatrix<f64>> {
        if data.names() != self.names() {
            return Err(Error::ColumnMismatch("dataset columns differ from model nodes".into()));
        }
        let v = data.values();
        let mut pv = Vec::new();
        Ok(DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| {
            pv.clear();
            pv.extend(self.parents[j].iter().map(|&p| v[(i, p)]));
            v[(i, j)] - self.equations[j].eval_unchecked(&pv)
        }))
    }

    pub fn to_doc(&self) -> ScmDoc {
        let GraphDoc { nodes, directed_edges, bidirected_edges } = self.graph.to_doc();
        let equations = self
            .equations
            .iter()
            .map(|e| {
                (e.child.clone(), EquationDoc { parents: e.parents.clone(), coefficients: e.coefficients.clone() })
            })
            .collect();
        let n = self.noise_cov.nrows();
        ScmDoc {
            nodes,
            directed_edges,
            bidirected_edges,
            equations,
            noise_cov: (0..n).map(|i| (0..n).map(|j| self.noise_cov[(i, j)]).collect()).collect(),
            interventions: self.fixed.iter().map(|(&j, &v)| (self.names()[j].clone(), v)).collect(),
        }
    }

    /// Roots missing from `equations` default to a zero intercept.
    pub fn from_doc(doc: &ScmDoc) -> Result<Self> {
        let graph = CausalGraph::from_doc(&GraphDoc {
            nodes: doc.nodes.clone(),
            directed_edges: doc.directed_edges.clone(),
            bidirected_edges: doc.bidirected_edges.clone(),
        })?;
        for name in doc.equations.keys() {
            graph.index_of(name)?;
        }
        let mut equations = Vec::with_capacity(graph.n_nodes());
        for (j, name) in graph.nodes().iter().enumerate() {
            let eq = match doc.equations.get(name) {
                Some(e) => PolynomialEquation::new(name.clone(), e.parents.clone(), e.coefficients.clone())?,
                None if graph.parents(j).is_empty() => PolynomialEquation::constant(name.clone(), 0.0),
                None => return Err(Error::InvalidGraph(format!("missing equation for `{name}`"))),
            };
            equations.push(eq);
        }
        let n = graph.n_nodes();
        if doc.noise_cov.len() != n || doc.noise_cov.iter().any(|r| r.len() != n) {
            return Err(Error::NotPositiveDefinite(format!("noise_cov must be {n}x{n}")));
        }
        let cov = DMatrix::from_fn(n, n, |i, j| doc.noise_cov[i][j]);
        let mut fixed = BTreeMap::new();
        for (name, &v) in &doc.interventions {
            fixed.insert(graph.index_of(name)?, v);
        }
        Self::build(graph, equations, cov, fixed)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_doc())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_doc(&serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    /// K=2: X1 -> X2, X1 -> Y, X2 -> Y, with U_1 <-> U_Y.
    fn k2(cov: DMatrix<f64>, f2: [f64; 2], fy: [f64; 4]) -> Scm {
        let g = CausalGraph::from_names(
            &["X1", "X2", "Y"],
            &[("X1", "X2"), ("X1", "Y"), ("X2", "Y")],
            &[("X1", "Y")],
        )
        .unwrap();
        Scm::new(
            g,
            vec![
                PolynomialEquation::constant("X1", 0.0),
                PolynomialEquation::new("X2", names(&["X1"]), f2.to_vec()).unwrap(),
                PolynomialEquation::new("Y", names(&["X1", "X2"]), fy.to_vec()).unwrap(),
            ],
            cov,
        )
        .unwrap()
    }

    fn sample_cov(m: &DMatrix<f64>) -> DMatrix<f64> {
        let n = m.nrows() as f64;
        let mean = m.row_mean();
        let c = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] - mean[j]);
        c.transpose() * &c / (n - 1.0)
    }

    #[test]
    fn rejects_non_pd_noise_at_construction() {
        let g = CausalGraph::from_names(&["X1", "Y"], &[("X1", "Y")], &[]).unwrap();
        let eqs = vec![
            PolynomialEquation::constant("X1", 0.0),
            PolynomialEquation::zeros("Y", names(&["X1"])),
        ];
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 1.5, 1.5, 1.0]);
        assert!(matches!(Scm::new(g, eqs, bad), Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn rejects_parent_mismatch() {
        let g = CausalGraph::from_names(&["X1", "Y"], &[("X1", "Y")], &[]).unwrap();
        let eqs = vec![PolynomialEquation::constant("X1", 0.0), PolynomialEquation::constant("Y", 0.0)];
        assert!(Scm::new(g, eqs, DMatrix::identity(2, 2)).is_err());
    }

    #[test]
    fn zero_model_passes_noise_through() {
        let cov = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, 0.0, 0.3, 2.0, -0.4, 0.0, -0.4, 0.5]);
        let scm = k2(cov.clone(), [0.0; 2], [0.0; 4]);
        let d = scm.sample(&Regime::Observational, 100_000, 3).unwrap();
        let sc = sample_cov(d.values());
        for i in 0..3 {
            for j in 0..3 {
                let se = ((cov[(i, i)] * cov[(j, j)] + cov[(i, j)].powi(2)) / 100_000.0).sqrt();
                assert!((sc[(i, j)] - cov[(i, j)]).abs() < 5.0 * se, "{i},{j}");
            }
        }
    }

    #[test]
    fn do_fixes_column() {
        let scm = k2(DMatrix::identity(3, 3), [0.5, 2.0], [0.0, 1.0, 1.0, 0.3]);
        let d = scm.sample(&Regime::Single { target: 1, level: 1.25 }, 500, 9).unwrap();
        assert!(d.column(1).iter().all(|&v| v == 1.25));
        assert!(scm.sample(&Regime::Single { target: 2, level: 0.0 }, 5, 1).is_err());
        assert!(scm.sample(&Regime::Observational, 0, 1).is_err());
    }

    #[test]
    fn confounded_residual_covariance() {
        // Cov(X1, Y - f_Y(X1, X2)) = Cov(U_1, U_Y) = 0.8
        let cov = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.8, 0.0, 1.0, 0.0, 0.8, 0.0, 1.0]);
        let scm = k2(cov, [0.0, 1.5], [0.2, 1.0, -0.7, 0.0]);
        let n = 100_000;
        let d = scm.sample(&Regime::Observational, n, 42).unwrap();
        let r = scm.residuals(&d).unwrap();
        let x1 = d.column(0);
        let uy: Vec<f64> = r.column(2).iter().copied().collect();
        let prods: Vec<f64> = x1.iter().zip(&uy).map(|(a, b)| a * b).collect();
        let mean = prods.iter().sum::<f64>() / n as f64;
        let sd = (prods.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
        assert!((mean - 0.8).abs() < 3.0 * sd / (n as f64).sqrt(), "{mean}");
    }

    #[test]
    fn residual_covariance_converges_to_noise_cov() {
        let cov = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.4, 0.5, 1.0, -0.3, 0.4, -0.3, 1.0]);
        let scm = k2(cov.clone(), [0.3, -1.0], [0.1, 0.6, 0.8, 0.5]);
        let n = 100_000;
        let d = scm.sample(&Regime::Observational, n, 5).unwrap();
        let sc = sample_cov(&scm.residuals(&d).unwrap());
        for i in 0..3 {
            for j in 0..3 {
                let scale = (cov[(i, i)] * cov[(j, j)]).sqrt();
                assert!((sc[(i, j)] - cov[(i, j)]).abs() / scale < 5.0 / (n as f64).sqrt());
            }
        }
    }

    #[test]
    fn oracle_matches_joint_intervention_mean() {
        let cov = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.7, 0.2, 1.0, 0.1, 0.7, 0.1, 1.0]);
        let scm = k2(cov, [0.0, 1.0], [0.0, 1.0, 1.0, 1.0]);
        assert_eq!(scm.joint_effect_oracle(&[1.0, 1.0]).unwrap(), 3.0);
        assert!(scm.joint_effect_oracle(&[1.0]).is_err());
        let n = 100_000;
        let d = scm.sample(&Regime::Joint { levels: vec![0.5, -1.0] }, n, 11).unwrap();
        let y = d.column(2);
        let mean = y.iter().sum::<f64>() / n as f64;
        let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
        let truth = scm.joint_effect_oracle(&[0.5, -1.0]).unwrap();
        assert!((mean - truth).abs() < 3.0 * sd / (n as f64).sqrt());
    }

    #[test]
    fn zero_outcome_equation_gives_zero_effect() {
        let scm = k2(DMatrix::identity(3, 3), [1.0, 1.0], [0.0; 4]);
        assert_eq!(scm.joint_effect_oracle(&[3.0, -2.0]).unwrap(), 0.0);
    }

    #[test]
    fn apply_do_semantics() {
        let cov = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.7, 0.2, 1.0, 0.1, 0.7, 0.1, 1.0]);
        let scm = k2(cov, [0.0, 1.0], [0.0, 1.0, 1.0, 1.0]);
        assert_eq!(scm.apply_do(&BTreeMap::new()).unwrap(), scm);

        let m1 = scm.apply_do(&BTreeMap::from([("X1".to_string(), 0.0)])).unwrap();
        assert!(m1.graph().directed_edges().iter().all(|e| e.1 != 0));
        assert!(m1.graph().bidirected_edges().is_empty());
        assert_eq!(m1.equation(0).coefficients, vec![0.0]);
        assert_eq!(m1.equation(1), scm.equation(1));
        assert_eq!(m1.noise_cov(), scm.noise_cov());
        let d = m1.sample(&Regime::Observational, 50, 2).unwrap();
        assert!(d.column(0).iter().all(|&v| v == 0.0));

        let m12 = scm
            .apply_do(&BTreeMap::from([("X1".to_string(), 0.0), ("X2".to_string(), 1.0)]))
            .unwrap();
        assert!(m12.graph().directed_edges().iter().all(|e| e.1 == 2));
        // Idempotent and commuting across disjoint targets.
        let once = BTreeMap::from([("X2".to_string(), 1.0)]);
        assert_eq!(m1.apply_do(&once).unwrap(), m12);
        assert_eq!(m12.apply_do(&once).unwrap(), m12);
        let m2 = scm.apply_do(&once).unwrap();
        assert_eq!(m2.apply_do(&BTreeMap::from([("X1".to_string(), 0.0)])).unwrap(), m12);

        assert!(matches!(
            scm.apply_do(&BTreeMap::from([("Y".to_string(), 0.0)])),
            Err(Error::InterveneOnOutcome(_))
        ));
        assert!(matches!(
            scm.apply_do(&BTreeMap::from([("Z".to_string(), 0.0)])),
            Err(Error::UnknownVariable(_))
        ));
    }

    #[test]
    fn json_round_trip_and_determinism() {
        let cov = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.7, 0.2, 1.0, 0.1, 0.7, 0.1, 1.0]);
        let scm = k2(cov, [0.1, 1.0 / 3.0], [0.0, 1.0, 1e-17, 1.0]);
        let js = scm.to_json().unwrap();
        assert!(js.contains("\"directed_edges\"") && js.contains("\"noise_cov\""));
        let back = Scm::from_json(&js).unwrap();
        assert_eq!(back, scm);
        let a = scm.sample(&Regime::Observational, 20, 7).unwrap();
        let b = back.sample(&Regime::Observational, 20, 7).unwrap();
        assert_eq!(a, b);
    }
}
