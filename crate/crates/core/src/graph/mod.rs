//! Undirected graphs over mixture components: spanning trees, Laplacian,
//! smoothness and the bootstrap-averaged spanning-tree prior.

mod average;
mod mst;

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::geometry::sq_dist;
use crate::{Error, Result};

pub use average::{average_graph, edge_frequencies, EdgeFrequencyMatrix, FrequencyHistogram};
pub use mst::{kruskal, kruskal_over, mst, prim, UnionFind};

/// Undirected edge with `i < j`. The weight is the squared Euclidean length
/// between the two node positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

impl Edge {
    pub fn new(a: usize, b: usize, weight: f64) -> Self {
        Edge {
            i: a.min(b),
            j: a.max(b),
            weight,
        }
    }
}

/// Simple undirected graph: no self-loops, no parallel edges.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    node_count: usize,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<usize>>,
}

impl Graph {
    pub fn empty(node_count: usize) -> Self {
        Graph {
            node_count,
            edges: Vec::new(),
            adjacency: vec![Vec::new(); node_count],
        }
    }

    /// Builds a graph from weighted edges. Duplicates keep the first weight.
    pub fn from_edges(node_count: usize, edges: impl IntoIterator<Item = Edge>) -> Result<Self> {
        let mut list: Vec<Edge> = Vec::new();
        for e in edges {
            let e = Edge::new(e.i, e.j, e.weight);
            if e.i == e.j {
                return Err(Error::Domain(format!("self-loop on node {}", e.i)));
            }
            if e.j >= node_count {
                return Err(Error::Domain(format!(
                    "edge ({}, {}) references a node outside 0..{node_count}",
                    e.i, e.j
                )));
            }
            if !(e.weight >= 0.0) {
                return Err(Error::Domain(format!(
                    "edge ({}, {}) has negative or undefined weight {}",
                    e.i, e.j, e.weight
                )));
            }
            list.push(e);
        }
        // stable sort keeps the first occurrence of a duplicate in front
        list.sort_by_key(|e| (e.i, e.j));
        list.dedup_by_key(|e| (e.i, e.j));
        let mut adjacency = vec![Vec::new(); node_count];
        for e in &list {
            adjacency[e.i].push(e.j);
            adjacency[e.j].push(e.i);
        }
        for a in &mut adjacency {
            a.sort_unstable();
        }
        Ok(Graph {
            node_count,
            edges: list,
            adjacency,
        })
    }

    /// Builds a graph on `positions` with squared-length weights.
    pub fn from_pairs(
        positions: ArrayView2<'_, f64>,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let k = positions.nrows();
        let mut edges = Vec::new();
        for (a, b) in pairs {
            if a >= k || b >= k {
                return Err(Error::Domain(format!(
                    "edge ({a}, {b}) references a node outside 0..{k}"
                )));
            }
            edges.push(Edge::new(a, b, squared_length(positions, a, b)));
        }
        Graph::from_edges(k, edges)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges sorted by `(i, j)`.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighbors(&self, k: usize) -> &[usize] {
        &self.adjacency[k]
    }

    pub fn degree(&self, k: usize) -> usize {
        self.adjacency[k].len()
    }

    pub fn contains(&self, a: usize, b: usize) -> bool {
        a < self.node_count && self.adjacency[a].binary_search(&b).is_ok()
    }

    /// Same topology with weights recomputed from `positions`.
    pub fn reweighted(&self, positions: ArrayView2<'_, f64>) -> Result<Self> {
        check_rows(positions, self.node_count, "Graph::reweighted")?;
        let edges = self
            .edges
            .iter()
            .map(|e| Edge::new(e.i, e.j, squared_length(positions, e.i, e.j)))
            .collect();
        Ok(Graph {
            node_count: self.node_count,
            edges,
            adjacency: self.adjacency.clone(),
        })
    }

    /// Union of the edge sets of two graphs over the same nodes.
    pub fn union(&self, other: &Graph) -> Result<Self> {
        if other.node_count != self.node_count {
            return Err(Error::Shape {
                context: "Graph::union",
                expected: self.node_count,
                found: other.node_count,
            });
        }
        Graph::from_edges(
            self.node_count,
            self.edges.iter().chain(other.edges.iter()).copied(),
        )
    }

    /// Sum of Euclidean edge lengths `sum ||mu_i - mu_j||`.
    pub fn total_length(&self, positions: ArrayView2<'_, f64>) -> Result<f64> {
        check_rows(positions, self.node_count, "Graph::total_length")?;
        Ok(self
            .edges
            .iter()
            .map(|e| squared_length(positions, e.i, e.j).sqrt())
            .sum())
    }

    pub fn component_count(&self) -> usize {
        let mut uf = UnionFind::new(self.node_count);
        for e in &self.edges {
            uf.union(e.i, e.j);
        }
        uf.set_count()
    }

    pub fn is_connected(&self) -> bool {
        self.node_count <= 1 || self.component_count() == 1
    }
}

pub(crate) fn squared_length(positions: ArrayView2<'_, f64>, a: usize, b: usize) -> f64 {
    let pa = positions.row(a);
    let pb = positions.row(b);
    match (pa.as_slice(), pb.as_slice()) {
        (Some(x), Some(y)) => sq_dist(x, y),
        _ => pa.iter().zip(pb.iter()).map(|(x, y)| (x - y) * (x - y)).sum(),
    }
}

fn check_rows(positions: ArrayView2<'_, f64>, k: usize, context: &'static str) -> Result<()> {
    if positions.nrows() != k {
        return Err(Error::Shape {
            context,
            expected: k,
            found: positions.nrows(),
        });
    }
    Ok(())
}

/// Dense combinatorial Laplacian `L = D - A`.
pub fn laplacian(g: &Graph) -> Array2<f64> {
    let k = g.node_count();
    let mut l = Array2::zeros((k, k));
    for e in g.edges() {
        l[[e.i, e.j]] -= 1.0;
        l[[e.j, e.i]] -= 1.0;
        l[[e.i, e.i]] += 1.0;
        l[[e.j, e.j]] += 1.0;
    }
    l
}

/// Graph smoothness `sum_i sum_j a_ij ||mu_i - mu_j||^2`. Both orientations
/// of every edge are counted, so this equals `2 Tr(mu^T L mu)`.
pub fn smoothness(positions: ArrayView2<'_, f64>, g: &Graph) -> Result<f64> {
    check_rows(positions, g.node_count(), "smoothness")?;
    Ok(2.0
        * g.edges()
            .iter()
            .map(|e| squared_length(positions, e.i, e.j))
            .sum::<f64>())
}

/// Cyclomatic number `|E| - |V| + components`.
pub fn cycle_count(g: &Graph) -> usize {
    g.edge_count() + g.component_count() - g.node_count()
}

/// Mean variance over the neighbours of `k`. An isolated node returns its
/// own variance.
pub fn neighbor_mean_variance(g: &Graph, variances: ArrayView1<'_, f64>, k: usize) -> f64 {
    let nb = g.neighbors(k);
    if nb.is_empty() {
        return variances[k];
    }
    nb.iter().map(|&i| variances[i]).sum::<f64>() / nb.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::{array, Array1};
    use proptest::prelude::*;

    fn path3() -> Graph {
        Graph::from_edges(3, [Edge::new(0, 1, 0.0), Edge::new(1, 2, 0.0)]).unwrap()
    }

    #[test]
    fn rejects_self_loops_and_out_of_range() {
        assert!(Graph::from_edges(3, [Edge::new(1, 1, 0.0)]).is_err());
        assert!(Graph::from_edges(3, [Edge::new(0, 3, 0.0)]).is_err());
        assert!(Graph::from_edges(3, [Edge::new(0, 1, -1.0)]).is_err());
    }

    #[test]
    fn duplicate_and_reversed_edges_collapse() {
        let g = Graph::from_edges(3, [Edge::new(1, 0, 2.0), Edge::new(0, 1, 5.0)]).unwrap();
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.edges()[0], Edge { i: 0, j: 1, weight: 2.0 });
        assert!(g.contains(1, 0) && g.contains(0, 1));
    }

    #[test]
    fn laplacian_small_graphs() {
        let two = Graph::from_edges(2, [Edge::new(0, 1, 1.0)]).unwrap();
        assert_eq!(laplacian(&two), array![[1.0, -1.0], [-1.0, 1.0]]);
        assert_eq!(
            laplacian(&path3()),
            array![[1.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]]
        );
        let tri = Graph::from_edges(3, [Edge::new(0, 1, 0.0), Edge::new(1, 2, 0.0), Edge::new(0, 2, 0.0)])
            .unwrap();
        assert_eq!(
            laplacian(&tri),
            array![[2.0, -1.0, -1.0], [-1.0, 2.0, -1.0], [-1.0, -1.0, 2.0]]
        );
    }

    #[test]
    fn smoothness_examples() {
        let two = Graph::from_edges(2, [Edge::new(0, 1, 1.0)]).unwrap();
        assert_eq!(smoothness(array![[0.0], [1.0]].view(), &two).unwrap(), 2.0);
        assert_eq!(smoothness(array![[2.0, 2.0], [2.0, 2.0], [2.0, 2.0]].view(), &path3()).unwrap(), 0.0);

        let mu = array![[0.0], [1.0], [3.0]];
        let direct = smoothness(mu.view(), &path3()).unwrap();
        assert_eq!(direct, 10.0);
        let l = laplacian(&path3());
        let trace = mu.t().dot(&l).dot(&mu).diag().sum();
        assert_eq!(direct, 2.0 * trace);

        assert!(matches!(
            smoothness(array![[0.0], [1.0]].view(), &path3()),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn cycle_counts() {
        assert_eq!(cycle_count(&path3()), 0);
        assert_eq!(cycle_count(&Graph::empty(4)), 0);
        let tri = [Edge::new(0, 1, 0.0), Edge::new(1, 2, 0.0), Edge::new(0, 2, 0.0)];
        assert_eq!(cycle_count(&Graph::from_edges(3, tri).unwrap()), 1);
        let two = tri
            .iter()
            .copied()
            .chain(tri.iter().map(|e| Edge::new(e.i + 3, e.j + 3, 0.0)));
        assert_eq!(cycle_count(&Graph::from_edges(6, two).unwrap()), 2);
    }

    #[test]
    fn neighbor_mean_examples() {
        let v = Array1::from(vec![1.0, 4.0, 9.0]);
        assert_eq!(neighbor_mean_variance(&path3(), v.view(), 1), 5.0);
        assert_eq!(neighbor_mean_variance(&path3(), v.view(), 0), 4.0);
        let g = Graph::from_edges(3, [Edge::new(0, 1, 0.0)]).unwrap();
        let v = Array1::from(vec![1.0, 1.0, 2.0]);
        assert_eq!(neighbor_mean_variance(&g, v.view(), 2), 2.0);
    }

    fn random_graph() -> impl Strategy<Value = (Array2<f64>, Graph)> {
        (2usize..12, 1usize..4).prop_flat_map(|(k, d)| {
            (
                proptest::collection::vec(-10.0f64..10.0, k * d),
                proptest::collection::vec((0..k, 0..k), 0..(k * 2)),
            )
                .prop_map(move |(coords, pairs)| {
                    let mu = Array2::from_shape_vec((k, d), coords).unwrap();
                    let pairs = pairs.into_iter().filter(|(a, b)| a != b);
                    let g = Graph::from_pairs(mu.view(), pairs).unwrap();
                    (mu, g)
                })
        })
    }

    proptest! {
        #[test]
        fn smoothness_equals_twice_laplacian_trace((mu, g) in random_graph()) {
            let s = smoothness(mu.view(), &g).unwrap();
            let l = laplacian(&g);
            let t = 2.0 * mu.t().dot(&l).dot(&mu).diag().sum();
            prop_assert!((s - t).abs() <= 1e-10 * s.abs().max(1e-300) || (s == 0.0 && t.abs() < 1e-12));
        }

        #[test]
        fn laplacian_rows_sum_to_zero_and_is_psd((_mu, g) in random_graph()) {
            let l = laplacian(&g);
            for row in l.rows() {
                prop_assert_eq!(row.sum(), 0.0);
            }
            let k = g.node_count();
            let m = nalgebra::DMatrix::from_fn(k, k, |i, j| l[[i, j]]);
            let eig = m.symmetric_eigenvalues();
            prop_assert!(eig.iter().all(|&v| v >= -1e-10));
        }
    }

    #[test]
    fn total_length_uses_euclidean_lengths() {
        let mu = array![[0.0, 0.0], [3.0, 4.0], [3.0, 5.0]];
        let g = Graph::from_pairs(mu.view(), [(0, 1), (1, 2)]).unwrap();
        assert_relative_eq!(g.total_length(mu.view()).unwrap(), 6.0);
        assert_eq!(g.edges()[0].weight, 25.0);
    }
}
