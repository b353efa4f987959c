//! Mutual k-nearest-neighbor graphs over splat centers and
//! connectivity-based outlier filtering.
//!
//! Under the Mahalanobis metric the neighbor list of splat `i` ranks every
//! other center `p_j` by `d_M(p_j, G_i)`, the distance from that center to
//! splat `i`'s distribution. The distance is not symmetric; symmetry of the
//! graph comes from keeping only mutual edges.

use std::collections::VecDeque;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kdtree::KdTree;
use crate::splat_io::{covariance_of, GaussianSplat, SplatSet};
use crate::{Mat3, Vec3};

/// Below this many splats, kNN queries scan exhaustively.
pub const BRUTE_FORCE_BELOW: usize = 2000;

const REGULARIZATION_EPS: f64 = 1e-9;
const MAX_AXIS_RATIO: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Mahalanobis,
    Euclidean,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Mahalanobis => "mahalanobis",
            Metric::Euclidean => "euclidean",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mahalanobis" => Ok(Metric::Mahalanobis),
            "euclidean" => Ok(Metric::Euclidean),
            other => Err(Error::InvalidInput(format!("unknown metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KnnStrategy {
    /// Exhaustive below [`BRUTE_FORCE_BELOW`] splats, tree otherwise.
    #[default]
    Auto,
    BruteForce,
    Tree,
}

/// Lower Cholesky factor of a splat covariance, used to evaluate
/// Mahalanobis distances by triangular solves.
#[derive(Debug, Clone, Copy)]
pub struct MahalanobisFactor {
    lower: Mat3,
    /// Lower bound on `distance(v) / |v|`, i.e. `1 / sqrt(lambda_max)` of
    /// the (possibly regularized) covariance, shrunk slightly for rounding.
    min_gain: f64,
}

impl MahalanobisFactor {
    pub fn new(splat: &GaussianSplat) -> Option<Self> {
        let cov = covariance_of(splat);
        let smax = splat.scale.max();
        let smin = splat.scale.min();
        let axis_ratio = smax / smin;
        let regularized = || cov + Mat3::identity() * (REGULARIZATION_EPS * cov.trace() / 3.0);
        let first = if axis_ratio > MAX_AXIS_RATIO {
            regularized()
        } else {
            cov
        };
        let (used, chol) = match nalgebra::Cholesky::new(first) {
            Some(c) => (first, c),
            None => {
                let r = regularized();
                (r, nalgebra::Cholesky::new(r)?)
            }
        };
        let lambda_max = used.symmetric_eigenvalues().max();
        Some(Self {
            lower: chol.l(),
            min_gain: (1.0 - 1e-9) / lambda_max.sqrt(),
        })
    }

    /// `sqrt(v^T Sigma^-1 v)` via forward substitution `L y = v`.
    pub fn distance(&self, v: &Vec3) -> f64 {
        let l = &self.lower;
        let y0 = v.x / l[(0, 0)];
        let y1 = (v.y - l[(1, 0)] * y0) / l[(1, 1)];
        let y2 = (v.z - l[(2, 0)] * y0 - l[(2, 1)] * y1) / l[(2, 2)];
        (y0 * y0 + y1 * y1 + y2 * y2).sqrt()
    }

    pub fn min_gain(&self) -> f64 {
        self.min_gain
    }
}

/// Mahalanobis distance from point `p` to the distribution of `splat`.
pub fn mahalanobis_distance(p: &Vec3, splat: &GaussianSplat) -> Result<f64> {
    let f = MahalanobisFactor::new(splat).ok_or(Error::SingularCovariance(0))?;
    Ok(f.distance(&(p - splat.mean)))
}

/// Shared state for repeated kNN queries over one splat set.
pub struct KnnIndex {
    positions: Vec<Vec3>,
    metric: Metric,
    factors: Vec<MahalanobisFactor>,
    tree: Option<KdTree>,
}

impl KnnIndex {
    pub fn new(set: &SplatSet, metric: Metric, strategy: KnnStrategy) -> Result<Self> {
        let positions = set.positions();
        let factors = match metric {
            Metric::Mahalanobis => set
                .splats
                .iter()
                .enumerate()
                .map(|(i, s)| MahalanobisFactor::new(s).ok_or(Error::SingularCovariance(i)))
                .collect::<Result<Vec<_>>>()?,
            Metric::Euclidean => Vec::new(),
        };
        let use_tree = match strategy {
            KnnStrategy::Auto => positions.len() >= BRUTE_FORCE_BELOW,
            KnnStrategy::BruteForce => false,
            KnnStrategy::Tree => true,
        };
        let tree = use_tree.then(|| KdTree::new(&positions));
        Ok(Self {
            positions,
            metric,
            factors,
            tree,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Distance used to rank center `j` as a neighbor of splat `i`.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let v = self.positions[j] - self.positions[i];
        match self.metric {
            Metric::Euclidean => v.norm(),
            Metric::Mahalanobis => self.factors[i].distance(&v),
        }
    }

    /// The `k` nearest centers to splat `i` under the metric, ascending by
    /// `(distance, index)`.
    pub fn query(&self, i: usize, k: usize) -> Result<Vec<(usize, f64)>> {
        let n = self.len();
        if k >= n {
            return Err(Error::InvalidInput(format!(
                "k = {k} must be smaller than the number of splats ({n})"
            )));
        }
        if let Some(tree) = &self.tree {
            let q = &self.positions[i];
            return Ok(match self.metric {
                Metric::Euclidean => tree.knn(q, k, Some(i)),
                Metric::Mahalanobis => {
                    let scale = self.factors[i].min_gain();
                    tree.knn_by(q, k, Some(i), scale, |j| self.distance(i, j))
                }
            });
        }
        let cmp = |a: &(usize, f64), b: &(usize, f64)| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0));
        let mut scored: Vec<(usize, f64)> = (0..n).filter(|&j| j != i).map(|j| (j, self.distance(i, j))).collect();
        if scored.len() > k {
            scored.select_nth_unstable_by(k, cmp);
            scored.truncate(k);
        }
        scored.sort_by(cmp);
        Ok(scored)
    }
}

/// k nearest neighbors of splat `i`.
pub fn knn(set: &SplatSet, i: usize, k: usize, metric: Metric) -> Result<Vec<(usize, f64)>> {
    if i >= set.len() {
        return Err(Error::InvalidInput(format!("query index {i} out of range")));
    }
    KnnIndex::new(set, metric, KnnStrategy::Auto)?.query(i, k)
}

/// Mutual kNN graph with connected-component labels.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph {
    pub n: usize,
    pub k: usize,
    pub metric: Metric,
    /// Per-vertex kNN lists, ascending by distance.
    pub neighbors: Vec<Vec<(usize, f64)>>,
    /// Mutual edges `(i, j)` with `i < j`, sorted.
    pub edges: Vec<(usize, usize)>,
    /// Mean of the two directed distances of each edge.
    pub edge_distances: Vec<f64>,
    /// Dense labels; 0 is the largest component.
    pub component_label: Vec<usize>,
}

impl NeighborGraph {
    pub fn n_components(&self) -> usize {
        self.component_label.iter().map(|&c| c + 1).max().unwrap_or(0)
    }

    /// Component sizes indexed by label (non-increasing).
    pub fn component_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_components()];
        for &c in &self.component_label {
            sizes[c] += 1;
        }
        sizes
    }

    /// Undirected adjacency lists from the mutual edges, ascending.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        adj
    }

    pub fn write_edges_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |e| Error::io(path, e);
        let mut out = BufWriter::new(File::create(path).map_err(io)?);
        writeln!(out, "i,j,distance").map_err(io)?;
        for (&(i, j), d) in self.edges.iter().zip(&self.edge_distances) {
            writeln!(out, "{i},{j},{d}").map_err(io)?;
        }
        out.flush().map_err(io)
    }

    pub fn write_labels_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |e| Error::io(path, e);
        let mut out = BufWriter::new(File::create(path).map_err(io)?);
        writeln!(out, "index,component").map_err(io)?;
        for (i, c) in self.component_label.iter().enumerate() {
            writeln!(out, "{i},{c}").map_err(io)?;
        }
        out.flush().map_err(io)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphOptions {
    pub k: usize,
    pub metric: Metric,
    pub strategy: KnnStrategy,
}

impl Default for GraphOptions {
    fn default() -> Self {
        Self {
            k: 8,
            metric: Metric::Mahalanobis,
            strategy: KnnStrategy::Auto,
        }
    }
}

pub fn build_graph(set: &SplatSet, k: usize, metric: Metric) -> Result<NeighborGraph> {
    build_graph_with(
        set,
        &GraphOptions {
            k,
            metric,
            strategy: KnnStrategy::Auto,
        },
    )
}

pub fn build_graph_with(set: &SplatSet, opts: &GraphOptions) -> Result<NeighborGraph> {
    let n = set.len();
    if opts.k == 0 || n < opts.k + 1 {
        return Err(Error::InvalidInput(format!(
            "need k >= 1 and at least k + 1 splats (k = {}, n = {n})",
            opts.k
        )));
    }
    let index = KnnIndex::new(set, opts.metric, opts.strategy)?;
    let neighbors: Vec<Vec<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| index.query(i, opts.k))
        .collect::<Result<_>>()?;

    let mut edges = Vec::new();
    let mut edge_distances = Vec::new();
    for (i, list) in neighbors.iter().enumerate() {
        for &(j, dij) in list {
            if i < j {
                if let Some(&(_, dji)) = neighbors[j].iter().find(|(m, _)| *m == i) {
                    edges.push((i, j));
                    edge_distances.push(0.5 * (dij + dji));
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..edges.len()).collect();
    order.sort_by_key(|&e| edges[e]);
    let edges: Vec<_> = order.iter().map(|&e| edges[e]).collect();
    let edge_distances: Vec<_> = order.iter().map(|&e| edge_distances[e]).collect();

    let component_label = label_components(n, &edges);
    Ok(NeighborGraph {
        n,
        k: opts.k,
        metric: opts.metric,
        neighbors,
        edges,
        edge_distances,
        component_label,
    })
}

/// Breadth-first component labels, relabeled by descending size with ties
/// broken by the smallest contained vertex.
pub fn label_components(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut adj = vec![Vec::new(); n];
    for &(i, j) in edges {
        adj[i].push(j);
        adj[j].push(i);
    }
    let mut raw = vec![usize::MAX; n];
    let mut sizes = Vec::new();
    for start in 0..n {
        if raw[start] != usize::MAX {
            continue;
        }
        let c = sizes.len();
        let mut size = 0;
        raw[start] = c;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            size += 1;
            for &w in &adj[v] {
                if raw[w] == usize::MAX {
                    raw[w] = c;
                    queue.push_back(w);
                }
            }
        }
        sizes.push(size);
    }
    // raw labels are already ordered by smallest contained vertex
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(a.cmp(&b)));
    let mut relabel = vec![0; sizes.len()];
    for (new, &old) in order.iter().enumerate() {
        relabel[old] = new;
    }
    raw.into_iter().map(|c| relabel[c]).collect()
}

/// Keeps only the largest component. Returns the filtered set and the
/// old-to-new index map.
pub fn filter_largest_component(
    set: &SplatSet,
    graph: &NeighborGraph,
) -> (SplatSet, Vec<Option<usize>>) {
    prune_components_with_map(set, graph, 1)
}

/// Keeps the `keep` largest components (`keep >= 1`).
pub fn prune_components(set: &SplatSet, graph: &NeighborGraph, keep: usize) -> SplatSet {
    prune_components_with_map(set, graph, keep).0
}

pub fn prune_components_with_map(
    set: &SplatSet,
    graph: &NeighborGraph,
    keep: usize,
) -> (SplatSet, Vec<Option<usize>>) {
    assert_eq!(set.len(), graph.n, "graph was built over a different set");
    let keep = keep.max(1);
    set.select(|i| graph.component_label[i] < keep)
}
