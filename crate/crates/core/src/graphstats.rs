//! Counts, degrees, components and the sparsity ratio of a sampled graph.
//!
//! A self-loop is one edge and adds 2 to its vertex's degree.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::sampler::{Provenance, SampledGraph};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("sparsity ratio is undefined for a graph without vertices")]
    EmptyGraph,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DegreeHistogram {
    pub counts: BTreeMap<usize, usize>,
    pub total: usize,
    pub max_degree: usize,
}

impl DegreeHistogram {
    pub fn count(&self, k: usize) -> usize {
        self.counts.get(&k).copied().unwrap_or(0)
    }
}

/// `(v, e)`.
pub fn counts(g: &SampledGraph) -> (usize, usize) {
    (g.labels.len(), g.edges.len())
}

pub fn degrees(g: &SampledGraph) -> Vec<usize> {
    let mut d = vec![0usize; g.labels.len()];
    for e in &g.edges {
        d[e.u] += 1;
        d[e.v] += 1;
    }
    d
}

/// Degree of each vertex counting W-edges to other vertices only.
pub fn w_degrees_without_loops(g: &SampledGraph) -> Vec<usize> {
    let mut d = vec![0usize; g.labels.len()];
    for e in g.edges.iter().filter(|e| e.provenance == Provenance::W && e.u != e.v) {
        d[e.u] += 1;
        d[e.v] += 1;
    }
    d
}

pub fn degree_histogram(g: &SampledGraph) -> DegreeHistogram {
    let mut counts = BTreeMap::new();
    let d = degrees(g);
    for &k in &d {
        if k > 0 {
            *counts.entry(k).or_insert(0) += 1;
        }
    }
    DegreeHistogram {
        total: d.iter().filter(|&&k| k > 0).count(),
        max_degree: d.iter().copied().max().unwrap_or(0),
        counts,
    }
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
    }
}

/// Sizes of all connected components, largest first.
pub fn component_sizes(g: &SampledGraph) -> Vec<usize> {
    let n = g.labels.len();
    let mut uf = UnionFind::new(n);
    for e in &g.edges {
        uf.union(e.u, e.v);
    }
    let roots: Vec<usize> = (0..n).filter(|&i| uf.find(i) == i).collect();
    let mut sizes: Vec<usize> = roots.iter().map(|&i| uf.size[i]).collect();
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    sizes
}

/// `(size, size / v)` of the largest component; `(0, 0)` when empty.
pub fn largest_component(g: &SampledGraph) -> (usize, f64) {
    let n = g.labels.len();
    if n == 0 {
        return (0, 0.0);
    }
    let size = component_sizes(g).first().copied().unwrap_or(0);
    (size, size as f64 / n as f64)
}

/// `√e / v`.
pub fn sparsity_ratio(g: &SampledGraph) -> Result<f64, StatsError> {
    let (v, e) = counts(g);
    if v == 0 {
        return Err(StatsError::EmptyGraph);
    }
    Ok((e as f64).sqrt() / v as f64)
}
