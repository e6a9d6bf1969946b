//! Ground-truth SCMs and multi-regime training data.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::data::RegimeDataset;
use crate::error::{Error, Result};
use crate::graph::{topological_order_of, CausalGraph};
use crate::linalg::checked_cholesky;
use crate::poly::{n_terms, PolynomialEquation};
use crate::rng::{rng_from_seed, split_seed};
use crate::scm::{Regime, Scm};

/// Random correlation matrix with every off-diagonal bounded by `c` in
/// absolute value.
///
/// Draws `dim` random unit vectors in `R^dim`, takes their Gram matrix (a
/// correlation matrix, positive definite almost surely), then shrinks it
/// toward the identity by the smallest amount that enforces the bound.
pub fn random_correlation_matrix(dim: usize, c: f64, seed: u64) -> Result<DMatrix<f64>> {
    if dim < 2 {
        return Err(Error::InvalidArgument(format!("dimension must be at least 2, got {dim}")));
    }
    if !(0.0..1.0).contains(&c) {
        return Err(Error::InvalidArgument(format!("bound c must lie in [0, 1), got {c}")));
    }
    let mut rng = rng_from_seed(seed);
    loop {
        let mut v = DMatrix::<f64>::from_fn(dim, dim, |_, _| StandardNormal.sample(&mut rng));
        for mut row in v.row_iter_mut() {
            let norm = row.norm();
            row /= norm;
        }
        let gram = &v * v.transpose();
        let max_off = (0..dim)
            .flat_map(|i| (0..dim).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| gram[(i, j)].abs())
            .fold(0.0, f64::max);
        let lambda = if max_off > c { c / max_off } else { 1.0 };
        let corr = DMatrix::from_fn(dim, dim, |i, j| if i == j { 1.0 } else { lambda * gram[(i, j)] });
        if checked_cholesky(&corr, "correlation").is_ok() {
            return Ok(corr);
        }
        // Near-singular Gram matrix with no shrinkage needed; redraw.
    }
}

/// Eades–Lin–Smyth greedy ordering; edges pointing backward in the ordering
/// are returned as the removed set. Self-loops are always removed.
pub fn feedback_arc_removal(
    n_nodes: usize,
    edges: &[(usize, usize)],
) -> (Vec<(usize, usize)>, Vec<(usize, usize)>) {
    let mut alive: BTreeSet<usize> = (0..n_nodes).collect();
    let mut out_deg = vec![0i64; n_nodes];
    let mut in_deg = vec![0i64; n_nodes];
    let mut succ = vec![Vec::new(); n_nodes];
    let mut pred = vec![Vec::new(); n_nodes];
    for &(a, b) in edges {
        if a == b {
            continue;
        }
        out_deg[a] += 1;
        in_deg[b] += 1;
        succ[a].push(b);
        pred[b].push(a);
    }
    let mut head = Vec::new();
    let mut tail = Vec::new();
    let remove = |v: usize,
                  alive: &mut BTreeSet<usize>,
                  out_deg: &mut Vec<i64>,
                  in_deg: &mut Vec<i64>| {
        alive.remove(&v);
        for &s in &succ[v] {
            if alive.contains(&s) {
                in_deg[s] -= 1;
            }
        }
        for &p in &pred[v] {
            if alive.contains(&p) {
                out_deg[p] -= 1;
            }
        }
    };
    while !alive.is_empty() {
        while let Some(&v) = alive.iter().find(|&&v| out_deg[v] == 0) {
            remove(v, &mut alive, &mut out_deg, &mut in_deg);
            tail.push(v);
        }
        while let Some(&v) = alive.iter().find(|&&v| in_deg[v] == 0) {
            remove(v, &mut alive, &mut out_deg, &mut in_deg);
            head.push(v);
        }
        if let Some(&v) = alive.iter().max_by_key(|&&v| (out_deg[v] - in_deg[v], std::cmp::Reverse(v))) {
            remove(v, &mut alive, &mut out_deg, &mut in_deg);
            head.push(v);
        }
    }
    tail.reverse();
    head.extend(tail);
    let mut pos = vec![0usize; n_nodes];
    for (i, &v) in head.iter().enumerate() {
        pos[v] = i;
    }
    edges.iter().partition(|&&(a, b)| pos[a] < pos[b])
}

/// Coefficients of the K=3 model, one vector per equation in canonical term
/// order: `f_2(X1)` (2 terms), `f_3(X1, X2)` (4 terms), `f_Y(X1, X2, X3)` (7 terms).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct K3Coefficients {
    pub f2: Vec<f64>,
    pub f3: Vec<f64>,
    pub fy: Vec<f64>,
}

impl K3Coefficients {
    pub fn zeros() -> Self {
        Self { f2: vec![0.0; 2], f3: vec![0.0; 4], fy: vec![0.0; 7] }
    }

    /// Every coefficient uniform on `[-1, 1]`.
    pub fn random(seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let u = Uniform::new_inclusive(-1.0, 1.0).expect("valid range");
        let mut draw = |n: usize| (0..n).map(|_| u.sample(&mut rng)).collect::<Vec<f64>>();
        Self { f2: draw(2), f3: draw(4), fy: draw(7) }
    }
}

pub fn k3_graph() -> CausalGraph {
    CausalGraph::from_names(
        &["X1", "X2", "X3", "Y"],
        &[("X1", "X2"), ("X1", "X3"), ("X2", "X3"), ("X1", "Y"), ("X2", "Y"), ("X3", "Y")],
        &[],
    )
    .expect("fixed K=3 graph is valid")
}

/// Bidirected edges wherever the noise covariance has a non-zero off-diagonal.
fn with_confounding(graph: &CausalGraph, sigma: &DMatrix<f64>) -> Result<CausalGraph> {
    let n = graph.n_nodes();
    let bi = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .filter(|&(i, j)| sigma[(i, j)] != 0.0)
        .collect();
    CausalGraph::new(graph.nodes().to_vec(), graph.directed_edges().to_vec(), bi)
}

/// The fully connected forward K=3 model
/// `X1 = U1, X2 = f2(X1) + U2, X3 = f3(X1, X2) + U3, Y = fY(X1, X2, X3) + UY`.
/// `coeffs = None` draws every coefficient uniformly from `[-1, 1]` using `seed`.
pub fn build_synthetic_k3(coeffs: Option<&K3Coefficients>, sigma: &DMatrix<f64>, seed: u64) -> Result<Scm> {
    let c = match coeffs {
        Some(c) => c.clone(),
        None => K3Coefficients::random(seed),
    };
    let graph = with_confounding(&k3_graph(), sigma)?;
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    let equations = vec![
        PolynomialEquation::constant("X1", 0.0),
        PolynomialEquation::new("X2", s(&["X1"]), c.f2)?,
        PolynomialEquation::new("X3", s(&["X1", "X2"]), c.f3)?,
        PolynomialEquation::new("Y", s(&["X1", "X2", "X3"]), c.fy)?,
    ];
    Scm::new(graph, equations, sigma.clone())
}

pub fn k2_graph() -> CausalGraph {
    CausalGraph::from_names(&["X1", "X2", "Y"], &[("X1", "X2"), ("X1", "Y"), ("X2", "Y")], &[])
        .expect("fixed K=2 graph is valid")
}

/// The two-treatment model `X1 = U1, X2 = f2(X1) + U2, Y = fY(X1, X2) + UY`
/// with `f2` given as 2 coefficients and `fY` as 4.
pub fn build_synthetic_k2(f2: &[f64], fy: &[f64], sigma: &DMatrix<f64>) -> Result<Scm> {
    let graph = with_confounding(&k2_graph(), sigma)?;
    let equations = vec![
        PolynomialEquation::constant("X1", 0.0),
        PolynomialEquation::new("X2", vec!["X1".into()], f2.to_vec())?,
        PolynomialEquation::new("Y", vec!["X1".into(), "X2".into()], fy.to_vec())?,
    ];
    Scm::new(graph, equations, sigma.clone())
}

pub const SEMISYNTHETIC_NODES: usize = 10;
pub const SEMISYNTHETIC_EDGES: usize = 15;
const PILOT_ROWS: usize = 20_000;

/// Random 10-node network standing in for a gene regulatory network: about 15
/// random directed edges, cycles broken by [`feedback_arc_removal`], nodes
/// renamed `X1..X9, Y` in topological order so the outcome is the last node.
/// Equations use standardized parents with coefficients uniform on `[-1, 1]`;
/// each node is then rescaled so its observational mean is 0 and variance 1.
/// Noise correlations are bounded by `c`.
pub fn build_semisynthetic_10(seed: u64, c: f64) -> Result<Scm> {
    let n = SEMISYNTHETIC_NODES;
    for attempt in 0..1000u64 {
        let s = split_seed(seed, attempt);
        let mut rng = rng_from_seed(split_seed(s, 0));
        let mut pairs = BTreeSet::new();
        let mut raw = Vec::new();
        while raw.len() < SEMISYNTHETIC_EDGES {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a != b && pairs.insert((a, b)) {
                raw.push((a, b));
            }
        }
        let (dag, _) = feedback_arc_removal(n, &raw);
        let order = topological_order_of(n, &dag)
            .map_err(|_| Error::Degenerate("cycle left after feedback arc removal".into()))?;
        let mut pos = vec![0; n];
        for (i, &v) in order.iter().enumerate() {
            pos[v] = i;
        }
        let relabelled: Vec<(usize, usize)> = dag.iter().map(|&(a, b)| (pos[a], pos[b])).collect();
        if relabelled.iter().filter(|e| e.1 == n - 1).count() < 2 {
            continue;
        }
        let mut names: Vec<String> = (1..n).map(|i| format!("X{i}")).collect();
        names.push("Y".into());
        let sigma = random_correlation_matrix(n, c, split_seed(s, 1))?;
        let graph = with_confounding(&CausalGraph::new(names.clone(), relabelled, vec![])?, &sigma)?;
        let uni = Uniform::new_inclusive(-1.0, 1.0).expect("valid range");
        let mut crng = rng_from_seed(split_seed(s, 2));
        let equations: Vec<PolynomialEquation> = (0..n)
            .map(|j| {
                let parents = graph.parent_names(j);
                if parents.is_empty() {
                    return PolynomialEquation::constant(names[j].clone(), 0.0);
                }
                let mut coeffs: Vec<f64> = (0..n_terms(parents.len())).map(|_| uni.sample(&mut crng)).collect();
                coeffs[0] = 0.0;
                PolynomialEquation { child: names[j].clone(), parents, coefficients: coeffs }
            })
            .collect();
        let scm = Scm::new(graph, equations, sigma)?;
        return standardize_scm(&scm, PILOT_ROWS, split_seed(s, 3));
    }
    Err(Error::Degenerate("could not draw a network whose outcome has two parents".into()))
}

/// Rewrites an SCM whose equations are expressed on standardized parents so
/// that every node has observational mean 0 and variance 1 (estimated from a
/// pilot sample). Nodes must be declared in topological order.
pub fn standardize_scm(scm: &Scm, pilot_rows: usize, seed: u64) -> Result<Scm> {
    let n = scm.graph().n_nodes();
    if scm.graph().topological_order()? != (0..n).collect::<Vec<_>>() {
        return Err(Error::InvalidGraph("nodes must be declared in topological order".into()));
    }
    let chol = checked_cholesky(scm.noise_cov(), "noise covariance")?.l();
    let mut rng = rng_from_seed(seed);
    let noise: Vec<DVector<f64>> = (0..pilot_rows)
        .map(|_| &chol * DVector::<f64>::from_fn(n, |_, _| StandardNormal.sample(&mut rng)))
        .collect();
    let mut values = DMatrix::zeros(pilot_rows, n);
    let mut equations = Vec::with_capacity(n);
    let mut scale = vec![1.0; n];
    let mut pv = Vec::new();
    for j in 0..n {
        let eq = scm.equation(j);
        let parents = scm.graph().parents(j);
        let raw: Vec<f64> = (0..pilot_rows)
            .map(|i| {
                pv.clear();
                pv.extend(parents.iter().map(|&p| values[(i, p)]));
                eq.eval_unchecked(&pv) + noise[i][j]
            })
            .collect();
        let mean = raw.iter().sum::<f64>() / pilot_rows as f64;
        let sd = (raw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / pilot_rows as f64).sqrt();
        if !(sd > 0.0) {
            return Err(Error::Degenerate(format!("node {} has zero variance", eq.child)));
        }
        for (i, v) in raw.iter().enumerate() {
            values[(i, j)] = (v - mean) / sd;
        }
        let mut coeffs: Vec<f64> = eq.coefficients.iter().map(|c| c / sd).collect();
        coeffs[0] = (eq.coefficients[0] - mean) / sd;
        equations.push(PolynomialEquation { child: eq.child.clone(), parents: eq.parents.clone(), coefficients: coeffs });
        scale[j] = 1.0 / sd;
    }
    let cov = DMatrix::from_fn(n, n, |i, j| scm.noise_cov()[(i, j)] * scale[i] * scale[j]);
    Scm::new(scm.graph().clone(), equations, cov)
}

/// One observational dataset of `n` rows plus, for every treatment `X_k`, a
/// `do(X_k)` dataset of `n` rows whose levels are drawn with replacement from
/// a fresh observational sample of `X_k`.
pub fn generate_regime_suite(scm: &Scm, n: usize, seed: u64) -> Result<Vec<RegimeDataset>> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be at least 1".into()));
    }
    let k = scm.n_treatments();
    let mut suite = Vec::with_capacity(k + 1);
    suite.push(scm.sample(&Regime::Observational, n, split_seed(seed, 0))?);
    for t in 0..k {
        let marginal = scm.sample(&Regime::Observational, n, split_seed(seed, 1000 + t as u64))?.column(t);
        let mut rng = rng_from_seed(split_seed(seed, 2000 + t as u64));
        let levels: Vec<f64> = (0..n).map(|_| marginal[rng.random_range(0..n)]).collect();
        suite.push(scm.sample_with_levels(t, &levels, split_seed(seed, 3000 + t as u64))?);
    }
    Ok(suite)
}

/// Per-column affine map computed on observational data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    pub fn apply(&self, d: &RegimeDataset) -> RegimeDataset {
        let v = d.values();
        d.with_values(DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| (v[(i, j)] - self.mean[j]) / self.std[j]))
    }

    pub fn invert(&self, d: &RegimeDataset) -> RegimeDataset {
        let v = d.values();
        d.with_values(DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] * self.std[j] + self.mean[j]))
    }
}

/// Standardizes every regime with the observational means and standard
/// deviations so all regimes share one coordinate system.
pub fn standardize(datasets: &[RegimeDataset]) -> Result<(Vec<RegimeDataset>, Standardization)> {
    let obs = datasets
        .iter()
        .find(|d| *d.tag() == crate::data::RegimeTag::Observational)
        .ok_or_else(|| Error::InvalidRegime("standardization needs an observational dataset".into()))?;
    let n = obs.n_rows() as f64;
    let mut mean = Vec::new();
    let mut std = Vec::new();
    for j in 0..obs.n_cols() {
        let col = obs.column(j);
        let m = col.iter().sum::<f64>() / n;
        let s = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
        if !(s > 0.0) {
            return Err(Error::Degenerate(format!("column {} has zero variance", obs.names()[j])));
        }
        mean.push(m);
        std.push(s);
    }
    let t = Standardization { mean, std };
    Ok((datasets.iter().map(|d| t.apply(d)).collect(), t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::RegimeTag;

    #[test]
    fn zero_bound_is_identity() {
        let m = random_correlation_matrix(5, 0.0, 1).unwrap();
        assert_eq!(m, DMatrix::identity(5, 5));
    }

    #[test]
    fn bounded_and_positive_definite() {
        for c in [0.1, 0.35, 0.65, 0.8] {
            for seed in 0..20 {
                let m = random_correlation_matrix(4, c, seed).unwrap();
                assert!(checked_cholesky(&m, "m").is_ok());
                for i in 0..4 {
                    assert_eq!(m[(i, i)], 1.0);
                    for j in 0..4 {
                        assert_eq!(m[(i, j)], m[(j, i)]);
                        if i != j {
                            assert!(m[(i, j)].abs() <= c + 1e-15);
                        }
                    }
                }
            }
        }
        assert!(random_correlation_matrix(1, 0.5, 0).is_err());
        assert!(random_correlation_matrix(3, 1.0, 0).is_err());
    }

    fn is_acyclic(n: usize, edges: &[(usize, usize)]) -> bool {
        topological_order_of(n, edges).is_ok()
    }

    #[test]
    fn dag_input_loses_nothing() {
        let edges = vec![(0, 1), (1, 2), (0, 2), (2, 3)];
        let (kept, removed) = feedback_arc_removal(4, &edges);
        assert!(removed.is_empty());
        assert_eq!(kept, edges);
    }

    #[test]
    fn three_cycle_loses_one_edge() {
        let (kept, removed) = feedback_arc_removal(3, &[(0, 1), (1, 2), (2, 0)]);
        assert_eq!(removed.len(), 1);
        assert!(is_acyclic(3, &kept));
    }

    #[test]
    fn petgraph_style_example() {
        let edges = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (4, 1), (1, 3)];
        let (kept, removed) = feedback_arc_removal(6, &edges);
        assert!(is_acyclic(6, &kept));
        assert!(!removed.is_empty() && removed.len() <= 2);
    }

    #[test]
    fn k3_builder() {
        let sigma = random_correlation_matrix(4, 0.65, 3).unwrap();
        let scm = build_synthetic_k3(Some(&K3Coefficients::zeros()), &sigma, 0).unwrap();
        assert_eq!(scm.joint_effect_oracle(&[1.0, -2.0, 0.5]).unwrap(), 0.0);
        let a = build_synthetic_k3(None, &sigma, 9).unwrap();
        let b = Scm::from_json(&a.to_json().unwrap()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }

    #[test]
    fn k3_residual_correlations_match_sigma() {
        let sigma = random_correlation_matrix(4, 0.65, 17).unwrap();
        let scm = build_synthetic_k3(None, &sigma, 4).unwrap();
        let d = scm.sample(&Regime::Observational, 100_000, 8).unwrap();
        let r = scm.residuals(&d).unwrap();
        let n = r.nrows() as f64;
        let m = r.row_mean();
        let c = DMatrix::from_fn(r.nrows(), 4, |i, j| r[(i, j)] - m[j]);
        let cov = c.transpose() * &c / n;
        for i in 0..4 {
            for j in 0..4 {
                let corr = cov[(i, j)] / (cov[(i, i)] * cov[(j, j)]).sqrt();
                assert!((corr - sigma[(i, j)]).abs() < 0.03);
            }
        }
    }

    #[test]
    fn semisynthetic_structure() {
        for seed in 0..5 {
            let scm = build_semisynthetic_10(seed, 0.35).unwrap();
            let g = scm.graph();
            assert_eq!(g.n_treatments(), 9);
            assert!(g.directed_edges().iter().all(|e| e.0 != g.outcome()));
            assert_eq!(g.topological_order().unwrap(), (0..10).collect::<Vec<_>>());
            assert!(g.parents(g.outcome()).len() >= 2);
        }
    }

    #[test]
    fn semisynthetic_is_standardized() {
        let scm = build_semisynthetic_10(3, 0.65).unwrap();
        let d = scm.sample(&Regime::Observational, 10_000, 1).unwrap();
        for j in 0..10 {
            let col = d.column(j);
            let m = col.iter().sum::<f64>() / 1e4;
            let v = col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 1e4;
            assert!((v - 1.0).abs() < 0.1, "column {j} variance {v}");
        }
    }

    #[test]
    fn suite_shape_and_determinism() {
        let sigma = random_correlation_matrix(4, 0.35, 2).unwrap();
        let scm = build_synthetic_k3(None, &sigma, 2).unwrap();
        let a = generate_regime_suite(&scm, 50, 77).unwrap();
        let b = generate_regime_suite(&scm, 50, 77).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
        assert!(a.iter().all(|d| d.n_rows() == 50));
        assert_eq!(*a[0].tag(), RegimeTag::Observational);
        for k in 0..3 {
            assert_eq!(*a[k + 1].tag(), RegimeTag::Do(k));
        }
        let mut buf_a = Vec::new();
        let mut buf_b = Vec::new();
        crate::data::write_regime_csv(&a, &mut buf_a).unwrap();
        crate::data::write_regime_csv(&b, &mut buf_b).unwrap();
        assert_eq!(buf_a, buf_b);
    }

    /// Two-sample Kolmogorov–Smirnov statistic.
    fn ks(a: &[f64], b: &[f64]) -> f64 {
        let mut a = a.to_vec();
        let mut b = b.to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let (mut i, mut j, mut d) = (0, 0, 0.0f64);
        while i < a.len() && j < b.len() {
            let x = a[i].min(b[j]);
            while i < a.len() && a[i] <= x {
                i += 1;
            }
            while j < b.len() && b[j] <= x {
                j += 1;
            }
            d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
        }
        d
    }

    #[test]
    fn intervention_levels_follow_the_marginal() {
        let sigma = random_correlation_matrix(4, 0.65, 5).unwrap();
        let scm = build_synthetic_k3(None, &sigma, 5).unwrap();
        let n = 2000;
        // 1% critical value of the two-sample KS test for equal sizes.
        let crit = 1.628 * (2.0 / n as f64).sqrt();
        let mut pass = 0;
        let mut total = 0;
        for seed in 0..20 {
            let suite = generate_regime_suite(&scm, n, seed).unwrap();
            let reference = scm.sample(&Regime::Observational, n, 10_000 + seed).unwrap();
            for k in 0..3 {
                total += 1;
                if ks(&suite[k + 1].column(k), &reference.column(k)) < crit {
                    pass += 1;
                }
            }
        }
        assert!(pass as f64 >= 0.95 * total as f64, "{pass}/{total}");
    }

    #[test]
    fn downstream_columns_shift_under_intervention() {
        let c = K3Coefficients { f2: vec![2.0, 0.0], f3: vec![0.0, 0.0, 1.0, 0.0], fy: vec![0.0; 7] };
        let scm = build_synthetic_k3(Some(&c), &DMatrix::identity(4, 4), 0).unwrap();
        let obs = scm.sample(&Regime::Observational, 5000, 1).unwrap();
        let d = scm.sample(&Regime::Single { target: 1, level: -2.0 }, 5000, 2).unwrap();
        let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
        // E[X3] is 2 observationally and -2 under do(X2 = -2).
        assert!((mean(obs.column(2)) - 2.0).abs() < 0.1);
        assert!((mean(d.column(2)) + 2.0).abs() < 0.1);
    }

    #[test]
    fn standardize_round_trip_and_shifts() {
        let c = K3Coefficients { f2: vec![1.0, 0.5], f3: vec![0.0, 0.3, 0.3, 0.0], fy: vec![0.5; 7] };
        let scm = build_synthetic_k3(Some(&c), &DMatrix::identity(4, 4), 0).unwrap();
        let mut suite = generate_regime_suite(&scm, 3000, 4).unwrap();
        suite.push(scm.sample(&Regime::Single { target: 0, level: 3.0 }, 3000, 5).unwrap());
        let (std_suite, t) = standardize(&suite).unwrap();
        for j in 0..4 {
            let col = std_suite[0].column(j);
            let m = col.iter().sum::<f64>() / col.len() as f64;
            let v = col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / col.len() as f64;
            assert!(m.abs() < 1e-9 && (v - 1.0).abs() < 1e-9);
        }
        for (a, b) in suite.iter().zip(&std_suite) {
            let back = t.invert(b);
            assert!((back.values() - a.values()).amax() < 1e-12);
        }
        // The shared map keeps the intervention shift: do(X1=3) in standardized units.
        let shifted = &std_suite[4];
        let expect = (3.0 - t.mean[0]) / t.std[0];
        assert!(shifted.column(0).iter().all(|&v| (v - expect).abs() < 1e-12));
        let m2 = shifted.column(1).iter().sum::<f64>() / 3000.0;
        let raw_m2 = suite[4].column(1).iter().sum::<f64>() / 3000.0;
        assert!((m2 - (raw_m2 - t.mean[1]) / t.std[1]).abs() < 1e-9);
        assert!(m2 > 1.0);
    }
}
