use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{mst, squared_length, Edge, Graph};
use crate::{par, Error, Result};

/// How often each node pair appears across spanning trees of random node
/// subsamples. Stored sparsely; absent pairs have frequency zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeFrequencyMatrix {
    node_count: usize,
    resamples: usize,
    subsample_ratio: f64,
    // (i, j) with i < j -> occurrences
    counts: BTreeMap<(usize, usize), u32>,
}

/// Equal-width histogram of the non-zero edge frequencies on `(0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyHistogram {
    /// Upper bin edges; bin `b` covers `(edges[b] - width, edges[b]]`.
    pub upper_edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl EdgeFrequencyMatrix {
    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn resamples(&self) -> usize {
        self.resamples
    }

    pub fn subsample_ratio(&self) -> f64 {
        self.subsample_ratio
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        let key = (a.min(b), a.max(b));
        self.counts
            .get(&key)
            .map_or(0.0, |&c| c as f64 / self.resamples as f64)
    }

    /// Observed pairs `(i, j, frequency)` with `i < j`, in index order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let b = self.resamples as f64;
        self.counts.iter().map(move |(&(i, j), &c)| (i, j, c as f64 / b))
    }

    /// Number of distinct pairs seen at least once.
    pub fn observed_edges(&self) -> usize {
        self.counts.len()
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.node_count, self.node_count));
        for (i, j, f) in self.entries() {
            m[[i, j]] = f;
            m[[j, i]] = f;
        }
        m
    }

    pub fn histogram(&self, bins: usize) -> FrequencyHistogram {
        let bins = bins.max(1);
        let mut counts = vec![0usize; bins];
        for (_, _, f) in self.entries() {
            let b = ((f * bins as f64).ceil() as usize).clamp(1, bins) - 1;
            counts[b] += 1;
        }
        FrequencyHistogram {
            upper_edges: (1..=bins).map(|b| b as f64 / bins as f64).collect(),
            counts,
        }
    }
}

/// Subsample size `floor(ratio * K)`.
pub(crate) fn subsample_size(k: usize, ratio: f64) -> Result<usize> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Config(format!(
            "subsample ratio must lie in (0, 1], got {ratio}"
        )));
    }
    let kb = (ratio * k as f64).floor() as usize;
    if kb < 2 {
        return Err(Error::Config(format!(
            "subsample ratio {ratio} keeps {kb} of {k} nodes; at least 2 are needed"
        )));
    }
    Ok(kb)
}

/// Edge frequencies over `resamples` spanning trees, each computed on
/// `floor(ratio * K)` nodes drawn without replacement.
///
/// Replicate `b` draws from its own ChaCha stream, so the result does not
/// depend on how the replicates are scheduled.
pub fn edge_frequencies(
    positions: ArrayView2<'_, f64>,
    resamples: usize,
    ratio: f64,
    seed: u64,
) -> Result<EdgeFrequencyMatrix> {
    let k = positions.nrows();
    if resamples == 0 {
        return Err(Error::Config("at least one resample is required".into()));
    }
    let kb = subsample_size(k, ratio)?;
    if positions.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite node position".into()));
    }

    let trees: Vec<Vec<(usize, usize)>> = par::map_indexed(resamples, |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(b as u64);
        let mut nodes = rand::seq::index::sample(&mut rng, k, kb).into_vec();
        // ascending order keeps tie-breaking consistent with the full set
        nodes.sort_unstable();
        sub_tree_edges(positions, &nodes)
    });

    let mut counts = BTreeMap::new();
    for edges in trees {
        for (i, j) in edges {
            *counts.entry((i, j)).or_insert(0u32) += 1;
        }
    }
    Ok(EdgeFrequencyMatrix {
        node_count: k,
        resamples,
        subsample_ratio: ratio,
        counts,
    })
}

fn sub_tree_edges(positions: ArrayView2<'_, f64>, nodes: &[usize]) -> Vec<(usize, usize)> {
    let sub = positions.select(Axis(0), nodes);
    let tree = mst(sub.view()).expect("subsample is non-empty and finite");
    tree.edges()
        .iter()
        .map(|e| {
            let (a, b) = (nodes[e.i], nodes[e.j]);
            (a.min(b), a.max(b))
        })
        .collect()
}

/// Spanning tree of `positions` united with every pair whose frequency
/// exceeds `threshold`.
pub fn average_graph(
    positions: ArrayView2<'_, f64>,
    freq: &EdgeFrequencyMatrix,
    threshold: f64,
) -> Result<Graph> {
    let k = positions.nrows();
    if freq.node_count() != k {
        return Err(Error::Shape {
            context: "average_graph",
            expected: k,
            found: freq.node_count(),
        });
    }
    let tree = mst(positions)?;
    let extra: Vec<Edge> = freq
        .entries()
        .filter(|&(_, _, f)| f > threshold)
        .map(|(i, j, _)| Edge::new(i, j, squared_length(positions, i, j)))
        .collect();
    Graph::from_edges(k, tree.edges().iter().copied().chain(extra))
}
