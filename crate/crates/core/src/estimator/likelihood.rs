//! Combined multi-regime Gaussian log-likelihood over residuals.
//!
//! For a dataset drawn under regime `k` the residual vector of a row is
//! `x_j - f_j(PA_j; θ_j)` for every node `j` the regime does not fix; the
//! intervened node only appears as a regressor. Each regime has its own
//! covariance: `(K+1)×(K+1)` for the observational regime and `K×K` for a
//! single intervention. Acyclicity makes the change-of-variables Jacobian 1.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{RegimeDataset, RegimeTag};
use crate::error::{Error, Result};
use crate::graph::CausalGraph;
use crate::linalg::{checked_cholesky, min_eigenvalue, symmetrize};
use crate::poly::{expand_into, n_terms, PolynomialEquation};

/// Where each equation's coefficients live in the flat parameter vector.
#[derive(Debug, Clone)]
pub struct Layout {
    pub names: Vec<String>,
    pub parents: Vec<Vec<usize>>,
    pub offsets: Vec<usize>,
    pub sizes: Vec<usize>,
}

impl Layout {
    pub fn new(graph: &CausalGraph) -> Self {
        let n = graph.n_nodes();
        let parents: Vec<Vec<usize>> = (0..n).map(|j| graph.parents(j)).collect();
        let sizes: Vec<usize> = parents.iter().map(|p| n_terms(p.len())).collect();
        let mut offsets = Vec::with_capacity(n);
        let mut acc = 0;
        for s in &sizes {
            offsets.push(acc);
            acc += s;
        }
        Self { names: graph.nodes().to_vec(), parents, offsets, sizes }
    }

    pub fn dim(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn n_nodes(&self) -> usize {
        self.names.len()
    }

    pub fn flatten(&self, equations: &[PolynomialEquation]) -> Result<DVector<f64>> {
        if equations.len() != self.n_nodes() {
            return Err(Error::Arity { expected: self.n_nodes(), got: equations.len() });
        }
        let mut theta = DVector::zeros(self.dim());
        for (j, eq) in equations.iter().enumerate() {
            let expected: Vec<String> = self.parents[j].iter().map(|&p| self.names[p].clone()).collect();
            if eq.child != self.names[j] || eq.parents != expected {
                return Err(Error::InvalidGraph(format!("equation {j} does not match the graph")));
            }
            if eq.coefficients.len() != self.sizes[j] {
                return Err(Error::Arity { expected: self.sizes[j], got: eq.coefficients.len() });
            }
            theta.rows_mut(self.offsets[j], self.sizes[j]).copy_from_slice(&eq.coefficients);
        }
        Ok(theta)
    }

    pub fn unflatten(&self, theta: &DVector<f64>) -> Vec<PolynomialEquation> {
        (0..self.n_nodes())
            .map(|j| PolynomialEquation {
                child: self.names[j].clone(),
                parents: self.parents[j].iter().map(|&p| self.names[p].clone()).collect(),
                coefficients: theta.rows(self.offsets[j], self.sizes[j]).iter().copied().collect(),
            })
            .collect()
    }

    pub(crate) fn block<'a>(&self, theta: &'a DVector<f64>, j: usize) -> nalgebra::DVectorView<'a, f64> {
        theta.rows(self.offsets[j], self.sizes[j])
    }
}

/// Covariance of the free-node residuals of one regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeCov {
    pub regime: RegimeTag,
    /// Noise coordinates (node indices) covered, ascending.
    pub nodes: Vec<usize>,
    #[serde(with = "crate::linalg::rows_serde")]
    pub cov: DMatrix<f64>,
    #[serde(default)]
    pub degenerate: bool,
}

/// `{Σ⁰, Σ¹, .., Σᴷ}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseCovarianceSet {
    pub entries: Vec<RegimeCov>,
}

impl NoiseCovarianceSet {
    /// Identity covariance for every regime present in `data`.
    pub fn identity(n_nodes: usize, tags: &[RegimeTag]) -> Self {
        let entries = tags
            .iter()
            .map(|t| {
                let nodes = free_nodes(t, n_nodes);
                let d = nodes.len();
                RegimeCov { regime: t.clone(), nodes, cov: DMatrix::identity(d, d), degenerate: false }
            })
            .collect();
        Self { entries }
    }

    pub fn get(&self, tag: &RegimeTag) -> Option<&RegimeCov> {
        self.entries.iter().find(|e| &e.regime == tag)
    }

    pub fn sigma0(&self) -> Option<&DMatrix<f64>> {
        self.get(&RegimeTag::Observational).map(|e| &e.cov)
    }

    pub fn any_degenerate(&self) -> bool {
        self.entries.iter().any(|e| e.degenerate)
    }
}

pub fn free_nodes(tag: &RegimeTag, n_nodes: usize) -> Vec<usize> {
    (0..n_nodes).filter(|&j| !tag.intervenes_on(j, n_nodes)).collect()
}

/// Rows of one regime with basis expansions precomputed.
#[derive(Debug, Clone)]
pub(crate) struct Group {
    pub tag: RegimeTag,
    pub nodes: Vec<usize>,
    pub n: usize,
    /// Observed values of each free node.
    pub targets: Vec<DVector<f64>>,
    /// Basis expansion of each free node's parents.
    pub features: Vec<DMatrix<f64>>,
}

impl Group {
    fn residuals(&self, layout: &Layout, theta: &DVector<f64>) -> DMatrix<f64> {
        let mut r = DMatrix::zeros(self.n, self.nodes.len());
        for (a, &j) in self.nodes.iter().enumerate() {
            let fitted = &self.features[a] * layout.block(theta, j);
            r.set_column(a, &(&self.targets[a] - fitted));
        }
        r
    }
}

/// Datasets grouped by regime and expanded into per-equation designs.
#[derive(Debug, Clone)]
pub struct Problem {
    pub layout: Layout,
    pub(crate) groups: Vec<Group>,
}

impl Problem {
    pub fn new(graph: &CausalGraph, data: &[RegimeDataset]) -> Result<Self> {
        let layout = Layout::new(graph);
        if data.is_empty() {
            return Err(Error::InsufficientData("no datasets".into()));
        }
        let n_nodes = layout.n_nodes();
        let mut tags: Vec<RegimeTag> = Vec::new();
        for d in data {
            if d.names() != layout.names.as_slice() {
                return Err(Error::ColumnMismatch(format!(
                    "dataset columns {:?} differ from graph nodes {:?}",
                    d.names(),
                    layout.names
                )));
            }
            if *d.tag() == RegimeTag::Joint {
                return Err(Error::InvalidRegime("joint-intervention data is not a training regime".into()));
            }
            if !tags.contains(d.tag()) {
                tags.push(d.tag().clone());
            }
        }
        let mut groups = Vec::with_capacity(tags.len());
        let mut buf = Vec::new();
        let mut pv = Vec::new();
        for tag in tags {
            let parts: Vec<RegimeDataset> = data.iter().filter(|d| *d.tag() == tag).cloned().collect();
            let values = RegimeDataset::concat_values(&parts)?;
            let n = values.nrows();
            let nodes = free_nodes(&tag, n_nodes);
            let mut targets = Vec::with_capacity(nodes.len());
            let mut features = Vec::with_capacity(nodes.len());
            for &j in &nodes {
                targets.push(DVector::from_iterator(n, values.column(j).iter().copied()));
                let m = layout.sizes[j];
                let mut f = DMatrix::zeros(n, m);
                for i in 0..n {
                    pv.clear();
                    pv.extend(layout.parents[j].iter().map(|&p| values[(i, p)]));
                    expand_into(&pv, &mut buf);
                    for (t, v) in buf.iter().enumerate() {
                        f[(i, t)] = *v;
                    }
                }
                features.push(f);
            }
            groups.push(Group { tag, nodes, n, targets, features });
        }
        Ok(Self { layout, groups })
    }

    pub fn tags(&self) -> Vec<RegimeTag> {
        self.groups.iter().map(|g| g.tag.clone()).collect()
    }

    pub fn n_total(&self) -> usize {
        self.groups.iter().map(|g| g.n).sum()
    }

    fn cov_for<'a>(&self, covs: &'a NoiseCovarianceSet, g: &Group) -> Result<&'a RegimeCov> {
        let c = covs
            .get(&g.tag)
            .ok_or_else(|| Error::ColumnMismatch(format!("no covariance for regime {:?}", g.tag)))?;
        if c.nodes != g.nodes || c.cov.nrows() != g.nodes.len() {
            return Err(Error::ColumnMismatch(format!("covariance shape mismatch for regime {:?}", g.tag)));
        }
        Ok(c)
    }

    pub fn log_likelihood(&self, theta: &DVector<f64>, covs: &NoiseCovarianceSet) -> Result<f64> {
        let mut total = 0.0;
        for g in &self.groups {
            let c = self.cov_for(covs, g)?;
            let chol = checked_cholesky(&c.cov, "regime covariance")?;
            let r = g.residuals(&self.layout, theta);
            let scatter = r.transpose() * &r;
            let quad = (chol.inverse().component_mul(&scatter)).sum();
            let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            let d = g.nodes.len() as f64;
            total += -0.5 * quad - 0.5 * g.n as f64 * (d * (2.0 * PI).ln() + logdet);
        }
        Ok(total)
    }

    /// Analytic `∂ℓ/∂θ`: for equation `j`, `Σ_rows (Σ⁻¹ r)_j φ_j`.
    pub fn gradient(&self, theta: &DVector<f64>, covs: &NoiseCovarianceSet) -> Result<DVector<f64>> {
        let mut grad = DVector::zeros(self.layout.dim());
        for g in &self.groups {
            let c = self.cov_for(covs, g)?;
            let prec = checked_cholesky(&c.cov, "regime covariance")?.inverse();
            let weighted = g.residuals(&self.layout, theta) * prec;
            for (a, &j) in g.nodes.iter().enumerate() {
                let gj = g.features[a].tr_mul(&weighted.column(a));
                let mut block = grad.rows_mut(self.layout.offsets[j], self.layout.sizes[j]);
                block += gj;
            }
        }
        Ok(grad)
    }

    /// Negated Hessian `-∂²ℓ/∂θ²`; constant in θ because residuals are linear.
    pub fn neg_hessian(&self, covs: &NoiseCovarianceSet) -> Result<DMatrix<f64>> {
        let dim = self.layout.dim();
        let mut h = DMatrix::zeros(dim, dim);
        for g in &self.groups {
            let c = self.cov_for(covs, g)?;
            let prec = checked_cholesky(&c.cov, "regime covariance")?.inverse();
            for (a, &i) in g.nodes.iter().enumerate() {
                for (b, &j) in g.nodes.iter().enumerate() {
                    if prec[(a, b)] == 0.0 {
                        continue;
                    }
                    let cross = g.features[a].tr_mul(&g.features[b]) * prec[(a, b)];
                    let mut block = h.view_mut(
                        (self.layout.offsets[i], self.layout.offsets[j]),
                        (self.layout.sizes[i], self.layout.sizes[j]),
                    );
                    block += cross;
                }
            }
        }
        symmetrize(&mut h);
        Ok(h)
    }

    /// Per-regime uncentred residual second moments, jittered when singular.
    pub fn sigma_closed_form(&self, theta: &DVector<f64>, jitter: f64, eig_floor: f64) -> Result<NoiseCovarianceSet> {
        let mut entries = Vec::with_capacity(self.groups.len());
        for g in &self.groups {
            let d = g.nodes.len();
            if g.n < d {
                return Err(Error::InsufficientData(format!(
                    "regime {:?} has {} rows for a {d}x{d} covariance; collect more data",
                    g.tag, g.n
                )));
            }
            let r = g.residuals(&self.layout, theta);
            let mut cov = r.transpose() * &r / g.n as f64;
            symmetrize(&mut cov);
            let mut degenerate = false;
            if min_eigenvalue(&cov) < eig_floor {
                for i in 0..d {
                    cov[(i, i)] += jitter;
                }
                degenerate = true;
            }
            entries.push(RegimeCov { regime: g.tag.clone(), nodes: g.nodes.clone(), cov, degenerate });
        }
        Ok(NoiseCovarianceSet { entries })
    }

    /// Independent least squares per equation over every row where the node is free.
    pub fn per_equation_least_squares(&self) -> Result<DVector<f64>> {
        let mut theta = DVector::zeros(self.layout.dim());
        for j in 0..self.layout.n_nodes() {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for g in &self.groups {
                if let Some(a) = g.nodes.iter().position(|&v| v == j) {
                    xs.push(&g.features[a]);
                    ys.push(&g.targets[a]);
                }
            }
            let rows: usize = ys.iter().map(|y| y.len()).sum();
            let m = self.layout.sizes[j];
            let mut design = DMatrix::zeros(rows, m);
            let mut target = DVector::zeros(rows);
            let mut r0 = 0;
            for (x, y) in xs.iter().zip(&ys) {
                design.rows_mut(r0, x.nrows()).copy_from(*x);
                target.rows_mut(r0, y.len()).copy_from(*y);
                r0 += y.len();
            }
            let beta = crate::linalg::least_squares(&design, &target).map_err(|e| match e {
                Error::RankDeficient(m) => Error::RankDeficient(format!("equation for {}: {m}", self.layout.names[j])),
                other => other,
            })?;
            theta.rows_mut(self.layout.offsets[j], m).copy_from(&beta);
        }
        Ok(theta)
    }
}

/// `ℓ(θ, Σ; data)` summed over all regimes and rows.
pub fn combined_log_likelihood(
    graph: &CausalGraph,
    equations: &[PolynomialEquation],
    covs: &NoiseCovarianceSet,
    data: &[RegimeDataset],
) -> Result<f64> {
    let problem = Problem::new(graph, data)?;
    let theta = problem.layout.flatten(equations)?;
    problem.log_likelihood(&theta, covs)
}

pub fn grad_theta(
    graph: &CausalGraph,
    equations: &[PolynomialEquation],
    covs: &NoiseCovarianceSet,
    data: &[RegimeDataset],
) -> Result<DVector<f64>> {
    let problem = Problem::new(graph, data)?;
    let theta = problem.layout.flatten(equations)?;
    problem.gradient(&theta, covs)
}

/// Default jitter and eigenvalue floor of the closed-form covariance step.
pub const SIGMA_JITTER: f64 = 1e-8;
pub const SIGMA_EIG_FLOOR: f64 = 1e-10;

pub fn sigma_closed_form(
    graph: &CausalGraph,
    equations: &[PolynomialEquation],
    data: &[RegimeDataset],
) -> Result<NoiseCovarianceSet> {
    let problem = Problem::new(graph, data)?;
    let theta = problem.layout.flatten(equations)?;
    problem.sigma_closed_form(&theta, SIGMA_JITTER, SIGMA_EIG_FLOOR)
}
