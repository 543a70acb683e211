use std::cmp::Ordering;

use ndarray::ArrayView2;

use super::{squared_length, Edge, Graph};
use crate::{Error, Result};

/// Above this node count the dense O(K^2) Prim variant replaces Kruskal on
/// the complete graph. Both return the same tree.
const PRIM_THRESHOLD: usize = 200;

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
    sets: usize,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
            sets: n,
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Merges the sets of `a` and `b`; false if they were already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        self.sets -= 1;
        true
    }

    pub fn set_count(&self) -> usize {
        self.sets
    }
}

// Strict total order on edges: weight, then smaller index, then larger.
// Every spanning tree problem has a unique solution under it.
fn edge_order(a: &Edge, b: &Edge) -> Ordering {
    a.weight
        .total_cmp(&b.weight)
        .then(a.i.cmp(&b.i))
        .then(a.j.cmp(&b.j))
}

fn check_positions(positions: ArrayView2<'_, f64>) -> Result<()> {
    if positions.nrows() == 0 {
        return Err(Error::EmptyInput("spanning tree of zero nodes"));
    }
    if positions.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite node position".into()));
    }
    Ok(())
}

/// Euclidean minimum spanning tree under squared edge lengths.
///
/// Ties are broken by `(weight, min index, max index)`, so the result is
/// deterministic.
pub fn mst(positions: ArrayView2<'_, f64>) -> Result<Graph> {
    check_positions(positions)?;
    if positions.nrows() > PRIM_THRESHOLD {
        Ok(prim_unchecked(positions))
    } else {
        Ok(kruskal_unchecked(positions))
    }
}

/// Kruskal over the complete graph.
pub fn kruskal(positions: ArrayView2<'_, f64>) -> Result<Graph> {
    check_positions(positions)?;
    Ok(kruskal_unchecked(positions))
}

fn kruskal_unchecked(positions: ArrayView2<'_, f64>) -> Graph {
    let k = positions.nrows();
    let mut candidates = Vec::with_capacity(k * k.saturating_sub(1) / 2);
    for i in 0..k {
        for j in i + 1..k {
            candidates.push(Edge::new(i, j, squared_length(positions, i, j)));
        }
    }
    kruskal_over(k, candidates)
}

/// Minimum spanning forest of an arbitrary candidate edge list.
pub fn kruskal_over(node_count: usize, mut candidates: Vec<Edge>) -> Graph {
    candidates.sort_by(edge_order);
    let mut uf = UnionFind::new(node_count);
    let mut tree = Vec::with_capacity(node_count.saturating_sub(1));
    for e in candidates {
        if uf.union(e.i, e.j) {
            tree.push(e);
            if tree.len() + 1 == node_count {
                break;
            }
        }
    }
    Graph::from_edges(node_count, tree).expect("spanning forest edges are valid")
}

/// Dense Prim, O(K^2) time and O(K) memory.
pub fn prim(positions: ArrayView2<'_, f64>) -> Result<Graph> {
    check_positions(positions)?;
    Ok(prim_unchecked(positions))
}

fn prim_unchecked(positions: ArrayView2<'_, f64>) -> Graph {
    let k = positions.nrows();
    let mut in_tree = vec![false; k];
    let mut best: Vec<Edge> = (0..k)
        .map(|v| Edge::new(0, v, squared_length(positions, 0, v)))
        .collect();
    in_tree[0] = true;
    let mut tree = Vec::with_capacity(k.saturating_sub(1));
    for _ in 1..k {
        let mut pick: Option<usize> = None;
        for v in 0..k {
            if in_tree[v] {
                continue;
            }
            pick = match pick {
                Some(p) if edge_order(&best[v], &best[p]) != Ordering::Less => Some(p),
                _ => Some(v),
            };
        }
        let v = pick.expect("a node remains outside the tree");
        in_tree[v] = true;
        tree.push(best[v]);
        for u in 0..k {
            if in_tree[u] {
                continue;
            }
            let cand = Edge::new(v, u, squared_length(positions, v, u));
            if edge_order(&cand, &best[u]) == Ordering::Less {
                best[u] = cand;
            }
        }
    }
    Graph::from_edges(k, tree).expect("spanning tree edges are valid")
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn total(g: &Graph) -> f64 {
        g.edges().iter().map(|e| e.weight).sum()
    }

    /// Minimum total weight over every labelled spanning tree, enumerated
    /// through Pruefer sequences.
    pub(crate) fn exhaustive_min_weight(positions: ArrayView2<'_, f64>) -> f64 {
        let k = positions.nrows();
        if k <= 1 {
            return 0.0;
        }
        if k == 2 {
            return squared_length(positions, 0, 1);
        }
        let len = k - 2;
        let mut seq = vec![0usize; len];
        let mut best = f64::INFINITY;
        loop {
            let mut degree = vec![1usize; k];
            for &s in &seq {
                degree[s] += 1;
            }
            let mut w = 0.0;
            for &s in &seq {
                let leaf = (0..k).find(|&v| degree[v] == 1).unwrap();
                w += squared_length(positions, leaf, s);
                degree[leaf] -= 1;
                degree[s] -= 1;
            }
            let rest: Vec<usize> = (0..k).filter(|&v| degree[v] == 1).collect();
            w += squared_length(positions, rest[0], rest[1]);
            best = best.min(w);

            let mut pos = 0;
            loop {
                if pos == len {
                    return best;
                }
                seq[pos] += 1;
                if seq[pos] < k {
                    break;
                }
                seq[pos] = 0;
                pos += 1;
            }
        }
    }

    /// Random spanning tree: random attachment order with random parents.
    fn random_spanning_tree_weight(positions: ArrayView2<'_, f64>, rng: &mut ChaCha8Rng) -> f64 {
        let k = positions.nrows();
        let mut order: Vec<usize> = (0..k).collect();
        for i in (1..k).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        (1..k)
            .map(|t| {
                let parent = order[rng.random_range(0..t)];
                squared_length(positions, order[t], parent)
            })
            .sum()
    }

    #[test]
    fn single_node_has_no_edges() {
        let g = mst(array![[1.0, 2.0]].view()).unwrap();
        assert_eq!(g.edge_count(), 0);
        assert!(matches!(
            mst(Array2::<f64>::zeros((0, 2)).view()),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn collinear_points() {
        let g = mst(array![[0.0], [1.0], [3.0]].view()).unwrap();
        let pairs: Vec<_> = g.edges().iter().map(|e| (e.i, e.j)).collect();
        assert_eq!(pairs, vec![(0, 1), (1, 2)]);
        assert_eq!(total(&g), 5.0);
    }

    #[test]
    fn six_points_match_cayley_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mu = Array2::from_shape_fn((6, 2), |_| rng.random_range(0.0..1.0));
        let g = mst(mu.view()).unwrap();
        assert!((total(&g) - exhaustive_min_weight(mu.view())).abs() < 1e-12);
    }

    #[test]
    fn ties_are_broken_by_index() {
        // Unit square: four sides of equal length, the MST skips (2, 3).
        let sq = array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let g = mst(sq.view()).unwrap();
        let pairs: Vec<_> = g.edges().iter().map(|e| (e.i, e.j)).collect();
        assert_eq!(pairs, vec![(0, 1), (0, 2), (1, 3)]);
        assert_eq!(g, prim(sq.view()).unwrap());
    }

    #[test]
    fn beats_random_spanning_trees() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mu = Array2::from_shape_fn((25, 3), |_| rng.random_range(-1.0..1.0));
        let best = total(&mst(mu.view()).unwrap());
        for _ in 0..1000 {
            assert!(best <= random_spanning_tree_weight(mu.view(), &mut rng) + 1e-12);
        }
    }

    #[test]
    fn kruskal_over_sparse_candidates_gives_a_forest() {
        let edges = vec![Edge::new(0, 1, 1.0), Edge::new(2, 3, 1.0), Edge::new(0, 2, 5.0), Edge::new(1, 2, 4.0)];
        let g = kruskal_over(5, edges);
        assert_eq!(g.edge_count(), 3);
        assert_eq!(g.component_count(), 2);
        assert!(!g.contains(0, 2));
    }

    proptest! {
        #[test]
        fn spanning_tree_shape(coords in proptest::collection::vec(-5.0f64..5.0, 2..60)) {
            let k = coords.len() / 2;
            prop_assume!(k >= 1);
            let mu = Array2::from_shape_vec((k, 2), coords[..2 * k].to_vec()).unwrap();
            let g = mst(mu.view()).unwrap();
            prop_assert_eq!(g.edge_count(), k - 1);
            prop_assert!(g.is_connected());
        }

        #[test]
        fn prim_equals_kruskal(k in 1usize..40, seed in 0u64..1000, grid in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // Integer grids force many equal weights.
            let mu = Array2::from_shape_fn((k, 2), |_| {
                if grid { rng.random_range(0..4) as f64 } else { rng.random_range(0.0..1.0) }
            });
            prop_assert_eq!(kruskal(mu.view()).unwrap(), prim(mu.view()).unwrap());
        }

        #[test]
        fn exhaustive_minimum_for_small_k(k in 1usize..=6, seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mu = Array2::from_shape_fn((k, 2), |_| rng.random_range(0.0..1.0));
            let w = total(&mst(mu.view()).unwrap());
            prop_assert!((w - exhaustive_min_weight(mu.view())).abs() <= 1e-12);
        }
    }
}
