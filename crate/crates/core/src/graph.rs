//! Acyclic directed mixed graphs over named variables.
//!
//! The last declared node is the outcome `Y`; every other node is a treatment.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CausalGraph {
    nodes: Vec<String>,
    directed: Vec<(usize, usize)>,
    bidirected: Vec<(usize, usize)>,
    index: HashMap<String, usize>,
}

/// Name-based wire form, as stored in SCM JSON documents.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphDoc {
    pub nodes: Vec<String>,
    pub directed_edges: Vec<[String; 2]>,
    pub bidirected_edges: Vec<[String; 2]>,
}

impl CausalGraph {
    /// Builds a graph from index pairs, checking every structural invariant.
    pub fn new(
        nodes: Vec<String>,
        directed: Vec<(usize, usize)>,
        bidirected: Vec<(usize, usize)>,
    ) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidGraph("no nodes".into()));
        }
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.clone(), i).is_some() {
                return Err(Error::InvalidGraph(format!("duplicate node `{n}`")));
            }
        }
        let n = nodes.len();
        let mut seen = BTreeSet::new();
        for &(a, b) in &directed {
            if a >= n || b >= n {
                return Err(Error::InvalidGraph(format!("edge ({a}, {b}) out of range")));
            }
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop on `{}`", nodes[a])));
            }
            if !seen.insert((a, b)) {
                return Err(Error::InvalidGraph(format!("duplicate edge {} -> {}", nodes[a], nodes[b])));
            }
            if a == n - 1 {
                return Err(Error::InvalidGraph(format!("outcome `{}` has an outgoing edge", nodes[a])));
            }
        }
        let mut bi = Vec::with_capacity(bidirected.len());
        let mut seen_bi = BTreeSet::new();
        for &(a, b) in &bidirected {
            if a >= n || b >= n {
                return Err(Error::InvalidGraph(format!("bidirected edge ({a}, {b}) out of range")));
            }
            if a == b {
                return Err(Error::InvalidGraph(format!("bidirected self-loop on `{}`", nodes[a])));
            }
            let e = (a.min(b), a.max(b));
            if !seen_bi.insert(e) {
                return Err(Error::InvalidGraph(format!("duplicate bidirected edge {} <-> {}", nodes[a], nodes[b])));
            }
            bi.push(e);
        }
        let g = Self { nodes, directed, bidirected: bi, index };
        g.topological_order()?;
        Ok(g)
    }

    pub fn from_names(
        nodes: &[&str],
        directed: &[(&str, &str)],
        bidirected: &[(&str, &str)],
    ) -> Result<Self> {
        let owned: Vec<String> = nodes.iter().map(|s| s.to_string()).collect();
        let pos = |s: &str| {
            owned
                .iter()
                .position(|n| n == s)
                .ok_or_else(|| Error::UnknownVariable(s.to_string()))
        };
        let d = directed.iter().map(|(a, b)| Ok((pos(a)?, pos(b)?))).collect::<Result<Vec<_>>>()?;
        let b = bidirected.iter().map(|(a, b)| Ok((pos(a)?, pos(b)?))).collect::<Result<Vec<_>>>()?;
        Self::new(owned, d, b)
    }

    pub fn from_doc(doc: &GraphDoc) -> Result<Self> {
        let nodes: Vec<&str> = doc.nodes.iter().map(String::as_str).collect();
        let d: Vec<(&str, &str)> = doc.directed_edges.iter().map(|[a, b]| (a.as_str(), b.as_str())).collect();
        let b: Vec<(&str, &str)> = doc.bidirected_edges.iter().map(|[a, b]| (a.as_str(), b.as_str())).collect();
        Self::from_names(&nodes, &d, &b)
    }

    pub fn to_doc(&self) -> GraphDoc {
        GraphDoc {
            nodes: self.nodes.clone(),
            directed_edges: self
                .directed
                .iter()
                .map(|&(a, b)| [self.nodes[a].clone(), self.nodes[b].clone()])
                .collect(),
            bidirected_edges: self
                .bidirected
                .iter()
                .map(|&(a, b)| [self.nodes[a].clone(), self.nodes[b].clone()])
                .collect(),
        }
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Number of treatments `K` (every node but the outcome).
    pub fn n_treatments(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn outcome(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn directed_edges(&self) -> &[(usize, usize)] {
        &self.directed
    }

    pub fn bidirected_edges(&self) -> &[(usize, usize)] {
        &self.bidirected
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.index.get(name).copied().ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    /// Parents of `node` in declaration order.
    pub fn parents(&self, node: usize) -> Vec<usize> {
        let mut p: Vec<usize> = self.directed.iter().filter(|e| e.1 == node).map(|e| e.0).collect();
        p.sort_unstable();
        p
    }

    pub fn parent_names(&self, node: usize) -> Vec<String> {
        self.parents(node).into_iter().map(|p| self.nodes[p].clone()).collect()
    }

    /// Kahn's algorithm; ties broken by the smallest node index.
    pub fn topological_order(&self) -> Result<Vec<usize>> {
        topological_order_of(self.nodes.len(), &self.directed)
            .map_err(|cycle| Error::Cycle(cycle.into_iter().map(|i| self.nodes[i].clone()).collect()))
    }

    pub fn topological_names(&self) -> Result<Vec<String>> {
        Ok(self.topological_order()?.into_iter().map(|i| self.nodes[i].clone()).collect())
    }

    /// Graph of the intervened model: incoming directed and bidirected edges of
    /// every target are dropped.
    pub fn intervened(&self, targets: &[usize]) -> Self {
        let hit = |i: usize| targets.contains(&i);
        Self {
            nodes: self.nodes.clone(),
            directed: self.directed.iter().copied().filter(|e| !hit(e.1)).collect(),
            bidirected: self.bidirected.iter().copied().filter(|e| !hit(e.0) && !hit(e.1)).collect(),
            index: self.index.clone(),
        }
    }
}

/// Stable topological order of `n` nodes, or the node indices of one cycle.
pub fn topological_order_of(n: usize, edges: &[(usize, usize)]) -> std::result::Result<Vec<usize>, Vec<usize>> {
    let mut indeg = vec![0usize; n];
    let mut children = vec![Vec::new(); n];
    for &(a, b) in edges {
        indeg[b] += 1;
        children[a].push(b);
    }
    let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = ready.pop_first() {
        order.push(v);
        for &c in &children[v] {
            indeg[c] -= 1;
            if indeg[c] == 0 {
                ready.insert(c);
            }
        }
    }
    if order.len() < n {
        return Err(find_cycle(n, edges, &indeg));
    }
    Ok(order)
}

/// Walks predecessors among the nodes Kahn could not remove until one repeats.
fn find_cycle(n: usize, edges: &[(usize, usize)], residual_indeg: &[usize]) -> Vec<usize> {
    let stuck: Vec<bool> = (0..n).map(|i| residual_indeg[i] > 0).collect();
    let start = match (0..n).find(|&i| stuck[i]) {
        Some(s) => s,
        None => return Vec::new(),
    };
    let mut pos = vec![usize::MAX; n];
    let mut path = Vec::new();
    let mut v = start;
    loop {
        if pos[v] != usize::MAX {
            let mut cyc: Vec<usize> = path[pos[v]..].to_vec();
            cyc.reverse();
            return cyc;
        }
        pos[v] = path.len();
        path.push(v);
        // Every stuck node has a stuck predecessor.
        v = edges
            .iter()
            .find(|e| e.1 == v && stuck[e.0])
            .map(|e| e.0)
            .expect("stuck node without stuck predecessor");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn chain_order() {
        let g = CausalGraph::from_names(&["X1", "X2", "Y"], &[("X1", "X2"), ("X2", "Y")], &[]).unwrap();
        assert_eq!(g.topological_names().unwrap(), ["X1", "X2", "Y"]);
    }

    #[test]
    fn isolated_nodes_keep_declaration_order() {
        let g = CausalGraph::from_names(&["A", "B", "C"], &[], &[]).unwrap();
        assert_eq!(g.topological_order().unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn full_forward_k3() {
        let g = CausalGraph::from_names(
            &["X1", "X2", "X3", "Y"],
            &[("X1", "X2"), ("X1", "X3"), ("X2", "X3"), ("X1", "Y"), ("X2", "Y"), ("X3", "Y")],
            &[],
        )
        .unwrap();
        assert_eq!(g.topological_names().unwrap(), ["X1", "X2", "X3", "Y"]);
    }

    #[test]
    fn cycle_is_named() {
        let err = CausalGraph::from_names(
            &["A", "B", "C", "Y"],
            &[("A", "B"), ("B", "C"), ("C", "A"), ("C", "Y")],
            &[],
        )
        .unwrap_err();
        match err {
            Error::Cycle(c) => {
                assert_eq!(c.len(), 3);
                for n in ["A", "B", "C"] {
                    assert!(c.contains(&n.to_string()));
                }
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn structural_violations() {
        assert!(CausalGraph::from_names(&["A", "Y"], &[("A", "A")], &[]).is_err());
        assert!(CausalGraph::from_names(&["A", "Y"], &[("A", "Y"), ("A", "Y")], &[]).is_err());
        assert!(CausalGraph::from_names(&["A", "Y"], &[("Y", "A")], &[]).is_err());
        assert!(CausalGraph::from_names(&["A", "Y"], &[], &[("A", "Y"), ("Y", "A")]).is_err());
        assert!(matches!(
            CausalGraph::from_names(&["A", "Y"], &[("A", "Z")], &[]),
            Err(Error::UnknownVariable(_))
        ));
    }

    proptest! {
        #[test]
        fn order_ignores_edge_permutation(perm_seed in 0u64..500) {
            let edges = vec![(0, 2), (1, 2), (0, 3), (2, 4), (3, 4), (1, 5), (4, 5), (0, 5)];
            let nodes: Vec<String> = ["A", "B", "C", "D", "E", "Y"].iter().map(|s| s.to_string()).collect();
            let base = CausalGraph::new(nodes.clone(), edges.clone(), vec![]).unwrap().topological_order().unwrap();
            let mut shuffled = edges.clone();
            let mut s = perm_seed;
            for i in (1..shuffled.len()).rev() {
                s = crate::rng::split_seed(s, i as u64);
                shuffled.swap(i, (s % (i as u64 + 1)) as usize);
            }
            let other = CausalGraph::new(nodes, shuffled, vec![]).unwrap().topological_order().unwrap();
            prop_assert_eq!(base, other);
        }
    }
}
