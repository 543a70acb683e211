//! Sparse symmetric positive-definite solves for the centroid update.
//!
//! The system matrix is a positive diagonal plus a scaled graph Laplacian,
//! so its sparsity pattern is the graph itself. Factorization is an
//! `L D L^T` elimination with a greedy minimum-degree pivot order; trees
//! eliminate leaf-first with no fill at all.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::{Array2, ArrayView2};

/// Symmetric matrix stored as a diagonal plus off-diagonal rows.
#[derive(Debug, Clone)]
pub struct SymmetricSparse {
    diag: Vec<f64>,
    off: Vec<BTreeMap<usize, f64>>,
}

/// A pivot that was not positive during elimination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PivotFailure {
    pub row: usize,
    pub pivot: f64,
}

#[derive(Debug, Clone)]
pub struct LdlFactor {
    order: Vec<usize>,
    pivots: Vec<f64>,
    // columns[s] holds (row, l) for the node eliminated at step s
    columns: Vec<Vec<(usize, f64)>>,
}

impl SymmetricSparse {
    pub fn new(n: usize) -> Self {
        SymmetricSparse {
            diag: vec![0.0; n],
            off: vec![BTreeMap::new(); n],
        }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn add_diag(&mut self, i: usize, v: f64) {
        self.diag[i] += v;
    }

    /// Adds `v` at `(i, j)` and `(j, i)`.
    pub fn add_symmetric(&mut self, i: usize, j: usize, v: f64) {
        assert_ne!(i, j, "use add_diag for diagonal entries");
        *self.off[i].entry(j).or_insert(0.0) += v;
        *self.off[j].entry(i).or_insert(0.0) += v;
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.diag[i]
        } else {
            self.off[i].get(&j).copied().unwrap_or(0.0)
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let n = self.dim();
        let mut m = Array2::zeros((n, n));
        for i in 0..n {
            m[[i, i]] = self.diag[i];
            for (&j, &v) in &self.off[i] {
                m[[i, j]] = v;
            }
        }
        m
    }

    /// `A x` for a block of right-hand sides.
    pub fn mul(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut y = Array2::zeros(x.raw_dim());
        for i in 0..self.dim() {
            let mut row = y.row_mut(i);
            row.scaled_add(self.diag[i], &x.row(i));
            for (&j, &v) in &self.off[i] {
                row.scaled_add(v, &x.row(j));
            }
        }
        y
    }

    /// `A + shift * I`.
    pub fn shifted(&self, shift: f64) -> Self {
        let mut m = self.clone();
        for d in &mut m.diag {
            *d += shift;
        }
        m
    }

    /// Rows whose diagonal and off-diagonal entries are all zero.
    pub fn zero_rows(&self) -> Vec<usize> {
        (0..self.dim())
            .filter(|&i| self.diag[i] == 0.0 && self.off[i].values().all(|&v| v == 0.0))
            .collect()
    }

    /// `L D L^T` factorization. Fails on the first pivot that is not
    /// positive relative to the largest diagonal entry.
    pub fn factor(&self) -> Result<LdlFactor, PivotFailure> {
        let n = self.dim();
        let scale = self.diag.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        let tol = scale * 1e-14;

        let mut diag = self.diag.clone();
        let mut rows: Vec<BTreeMap<usize, f64>> = self.off.clone();
        for r in &mut rows {
            r.retain(|_, v| *v != 0.0);
        }
        let mut queue: BTreeSet<(usize, usize)> = (0..n).map(|i| (rows[i].len(), i)).collect();

        let mut order = Vec::with_capacity(n);
        let mut pivots = Vec::with_capacity(n);
        let mut columns = Vec::with_capacity(n);
        while let Some((_, p)) = queue.pop_first() {
            let d = diag[p];
            if !(d > tol) || !d.is_finite() {
                return Err(PivotFailure { row: p, pivot: d });
            }
            let neigh: Vec<(usize, f64)> = std::mem::take(&mut rows[p]).into_iter().collect();
            for &(i, _) in &neigh {
                queue.remove(&(rows[i].len(), i));
                rows[i].remove(&p);
            }
            for (a, &(i, ai)) in neigh.iter().enumerate() {
                diag[i] -= ai * ai / d;
                for &(j, aj) in &neigh[a + 1..] {
                    let upd = ai * aj / d;
                    *rows[i].entry(j).or_insert(0.0) -= upd;
                    *rows[j].entry(i).or_insert(0.0) -= upd;
                }
            }
            for &(i, _) in &neigh {
                queue.insert((rows[i].len(), i));
            }
            order.push(p);
            pivots.push(d);
            columns.push(neigh.into_iter().map(|(i, a)| (i, a / d)).collect());
        }
        Ok(LdlFactor {
            order,
            pivots,
            columns,
        })
    }
}

impl LdlFactor {
    pub fn solve(&self, rhs: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut x = rhs.to_owned();
        // L y = b, in elimination order
        for (s, &p) in self.order.iter().enumerate() {
            let yp = x.row(p).to_owned();
            for &(i, l) in &self.columns[s] {
                x.row_mut(i).scaled_add(-l, &yp);
            }
        }
        for (s, &p) in self.order.iter().enumerate() {
            x.row_mut(p).mapv_inplace(|v| v / self.pivots[s]);
        }
        // L^T x = z, reversed
        for (s, &p) in self.order.iter().enumerate().rev() {
            for &(i, l) in &self.columns[s] {
                let xi = x.row(i).to_owned();
                x.row_mut(p).scaled_add(-l, &xi);
            }
        }
        x
    }
}

/// Solves `A X = B`, retrying with diagonal jitter scaled by the largest
/// diagonal entry. Returns the rows that blocked factorization on failure.
pub fn solve_spd_with_jitter(
    a: &SymmetricSparse,
    rhs: ArrayView2<'_, f64>,
    jitters: &[f64],
) -> Result<Array2<f64>, Vec<usize>> {
    let zero = a.zero_rows();
    if !zero.is_empty() {
        return Err(zero);
    }
    let scale = a.diag().iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let mut failed = Vec::new();
    for &jitter in std::iter::once(&0.0).chain(jitters) {
        let attempt = if jitter == 0.0 {
            a.factor()
        } else {
            log::debug!("retrying centroid solve with relative jitter {jitter:e}");
            a.shifted(jitter * scale).factor()
        };
        match attempt {
            Ok(f) => return Ok(f.solve(rhs)),
            Err(e) => {
                if !failed.contains(&e.row) {
                    failed.push(e.row);
                }
            }
        }
    }
    failed.sort_unstable();
    Err(failed)
}
