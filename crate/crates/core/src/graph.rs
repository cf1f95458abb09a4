//! Digraphs, graph-shift operators and shift application.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{GspError, Result};

/// A real value per node.
pub type GraphSignal = DVector<f64>;

/// Operators up to this size are stored densely; larger ones in CSR form.
pub const DENSE_MAX: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub weight: f64,
}

/// Weighted directed graph without self loops or parallel edges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Digraph {
    n: usize,
    edges: Vec<Edge>,
}

impl Digraph {
    pub fn new(n: usize, edges: Vec<Edge>) -> Result<Self> {
        if n == 0 {
            return Err(GspError::InvalidSize(
                "digraph needs at least one node".into(),
            ));
        }
        let mut seen = std::collections::HashSet::with_capacity(edges.len());
        for e in &edges {
            if e.src >= n || e.dst >= n {
                return Err(GspError::InvalidGraph(format!(
                    "edge ({} -> {}) out of range for n = {n}",
                    e.src, e.dst
                )));
            }
            if e.src == e.dst {
                return Err(GspError::InvalidGraph(format!(
                    "self loop at node {}",
                    e.src
                )));
            }
            if !e.weight.is_finite() {
                return Err(GspError::InvalidGraph(format!(
                    "edge ({} -> {}) has non-finite weight",
                    e.src, e.dst
                )));
            }
            if !seen.insert((e.src, e.dst)) {
                return Err(GspError::InvalidGraph(format!(
                    "duplicate edge ({} -> {})",
                    e.src, e.dst
                )));
            }
        }
        Ok(Digraph { n, edges })
    }

    pub fn from_unweighted(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let edges = pairs
            .iter()
            .map(|&(src, dst)| Edge {
                src,
                dst,
                weight: 1.0,
            })
            .collect();
        Digraph::new(n, edges)
    }

    /// Off-diagonal nonzeros of `s` become edges (`S[(j, i)]` is edge `i -> j`).
    pub fn from_shift(s: &ShiftOperator) -> Self {
        let edges = s
            .triplets()
            .into_iter()
            .filter(|&(r, c, _)| r != c)
            .map(|(r, c, w)| Edge {
                src: c,
                dst: r,
                weight: w,
            })
            .collect();
        Digraph { n: s.n(), edges }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn has_edge(&self, src: usize, dst: usize) -> bool {
        self.edges.iter().any(|e| e.src == src && e.dst == dst)
    }

    /// Undirected version: both orientations carry `w_ij + w_ji`.
    pub fn symmetrized(&self) -> Digraph {
        let a = adjacency_shift(self).to_dense();
        let sym = &a + a.transpose();
        let mut edges = Vec::new();
        for c in 0..self.n {
            for r in 0..self.n {
                if r != c && sym[(r, c)] != 0.0 {
                    edges.push(Edge {
                        src: c,
                        dst: r,
                        weight: sym[(r, c)],
                    });
                }
            }
        }
        Digraph { n: self.n, edges }
    }
}

/// Directed cycle `0 -> 1 -> ... -> n-1 -> 0`; its adjacency implements a
/// circular delay, `(S x)_j = x_{j-1}`.
pub fn directed_cycle(n: usize) -> Result<Digraph> {
    if n < 2 {
        return Err(GspError::InvalidSize(format!(
            "directed cycle needs n >= 2, got {n}"
        )));
    }
    let edges = (0..n)
        .map(|i| Edge {
            src: i,
            dst: (i + 1) % n,
            weight: 1.0,
        })
        .collect();
    Digraph::new(n, edges)
}

/// Adjacency matrix as shift: `S[(dst, src)] = weight`.
pub fn adjacency_shift(g: &Digraph) -> ShiftOperator {
    let triplets: Vec<_> = g.edges.iter().map(|e| (e.dst, e.src, e.weight)).collect();
    ShiftOperator::from_triplets(g.n, &triplets).expect("validated digraph")
}

#[derive(Clone, Debug, PartialEq)]
struct Csr {
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
enum Repr {
    Dense(DMatrix<f64>),
    Sparse(Csr),
}

/// Square graph-shift operator.
#[derive(Clone, Debug, PartialEq)]
pub struct ShiftOperator {
    n: usize,
    repr: Repr,
}

impl ShiftOperator {
    pub fn zeros(n: usize) -> Self {
        ShiftOperator::from_triplets(n, &[]).expect("empty operator")
    }

    pub fn identity(n: usize) -> Self {
        let t: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        ShiftOperator::from_triplets(n, &t).expect("identity")
    }

    pub fn from_dense(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(GspError::InvalidSize(format!(
                "shift operator must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(GspError::InvalidArgument(
                "shift operator has non-finite entries".into(),
            ));
        }
        let n = m.nrows();
        if n <= DENSE_MAX {
            return Ok(ShiftOperator {
                n,
                repr: Repr::Dense(m),
            });
        }
        let mut t = Vec::new();
        for r in 0..n {
            for c in 0..n {
                if m[(r, c)] != 0.0 {
                    t.push((r, c, m[(r, c)]));
                }
            }
        }
        ShiftOperator::from_triplets(n, &t)
    }

    /// Builds from `(row, col, value)` triplets; duplicates are rejected and
    /// explicit zeros dropped.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut t: Vec<_> = triplets.iter().copied().filter(|t| t.2 != 0.0).collect();
        for &(r, c, v) in &t {
            if r >= n || c >= n {
                return Err(GspError::InvalidArgument(format!(
                    "entry ({r}, {c}) out of range for n = {n}"
                )));
            }
            if !v.is_finite() {
                return Err(GspError::InvalidArgument(format!(
                    "entry ({r}, {c}) is not finite"
                )));
            }
        }
        t.sort_by_key(|&(r, c, _)| (r, c));
        if let Some(w) = t.windows(2).find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(GspError::InvalidArgument(format!(
                "duplicate entry ({}, {})",
                w[0].0, w[0].1
            )));
        }
        if n <= DENSE_MAX {
            let mut m = DMatrix::zeros(n, n);
            for (r, c, v) in t {
                m[(r, c)] = v;
            }
            return Ok(ShiftOperator {
                n,
                repr: Repr::Dense(m),
            });
        }
        let mut indptr = vec![0usize; n + 1];
        for &(r, _, _) in &t {
            indptr[r + 1] += 1;
        }
        for i in 0..n {
            indptr[i + 1] += indptr[i];
        }
        let indices = t.iter().map(|x| x.1).collect();
        let values = t.iter().map(|x| x.2).collect();
        Ok(ShiftOperator {
            n,
            repr: Repr::Sparse(Csr {
                indptr,
                indices,
                values,
            }),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.repr, Repr::Sparse(_))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        match &self.repr {
            Repr::Dense(m) => m[(r, c)],
            Repr::Sparse(csr) => {
                let row = &csr.indices[csr.indptr[r]..csr.indptr[r + 1]];
                match row.binary_search(&c) {
                    Ok(k) => csr.values[csr.indptr[r] + k],
                    Err(_) => 0.0,
                }
            }
        }
    }

    /// Nonzero entries in row-major order.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        match &self.repr {
            Repr::Dense(m) => {
                let mut t = Vec::new();
                for r in 0..self.n {
                    for c in 0..self.n {
                        if m[(r, c)] != 0.0 {
                            t.push((r, c, m[(r, c)]));
                        }
                    }
                }
                t
            }
            Repr::Sparse(csr) => (0..self.n)
                .flat_map(|r| {
                    (csr.indptr[r]..csr.indptr[r + 1])
                        .map(move |k| (r, csr.indices[k], csr.values[k]))
                })
                .collect(),
        }
    }

    pub fn nnz(&self) -> usize {
        match &self.repr {
            Repr::Dense(m) => m.iter().filter(|v| **v != 0.0).count(),
            Repr::Sparse(csr) => csr.values.len(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match &self.repr {
            Repr::Dense(m) => m.clone(),
            Repr::Sparse(_) => {
                let mut m = DMatrix::zeros(self.n, self.n);
                for (r, c, v) in self.triplets() {
                    m[(r, c)] = v;
                }
                m
            }
        }
    }

    /// `y = S x`. Panics on a length mismatch; see [`apply_shift`] for the
    /// checked form.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(
            x.len(),
            self.n,
            "signal length does not match shift operator"
        );
        let mut y = DVector::zeros(self.n);
        match &self.repr {
            Repr::Dense(m) => {
                for r in 0..self.n {
                    let mut acc = 0.0;
                    for c in 0..self.n {
                        acc += m[(r, c)] * x[c];
                    }
                    y[r] = acc;
                }
            }
            Repr::Sparse(csr) => {
                for r in 0..self.n {
                    let mut acc = 0.0;
                    for k in csr.indptr[r]..csr.indptr[r + 1] {
                        acc += csr.values[k] * x[csr.indices[k]];
                    }
                    y[r] = acc;
                }
            }
        }
        y
    }

    pub fn transpose(&self) -> ShiftOperator {
        let t: Vec<_> = self
            .triplets()
            .into_iter()
            .map(|(r, c, v)| (c, r, v))
            .collect();
        ShiftOperator::from_triplets(self.n, &t).expect("transpose of valid operator")
    }

    pub fn scaled(&self, factor: f64) -> ShiftOperator {
        let t: Vec<_> = self
            .triplets()
            .into_iter()
            .map(|(r, c, v)| (r, c, v * factor))
            .collect();
        ShiftOperator::from_triplets(self.n, &t).expect("scaled operator")
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.triplets()
            .iter()
            .map(|t| t.2 * t.2)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let scale = self
            .triplets()
            .iter()
            .fold(0.0f64, |m, t| m.max(t.2.abs()))
            .max(1.0);
        self.triplets()
            .iter()
            .all(|&(r, c, v)| (v - self.get(c, r)).abs() <= tol * scale)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.triplets().iter().all(|t| t.2 >= 0.0)
    }

    /// Nodes `j != i` with `S[(i, j)] != 0`, ascending.
    pub fn in_neighbors(&self, i: usize) -> Vec<usize> {
        match &self.repr {
            Repr::Dense(m) => (0..self.n)
                .filter(|&j| j != i && m[(i, j)] != 0.0)
                .collect(),
            Repr::Sparse(csr) => csr.indices[csr.indptr[i]..csr.indptr[i + 1]]
                .iter()
                .copied()
                .filter(|&j| j != i)
                .collect(),
        }
    }

    /// Sparsity pattern is contained in the edges of `g` plus the diagonal.
    pub fn respects(&self, g: &Digraph) -> bool {
        if g.n() != self.n {
            return false;
        }
        let edges: std::collections::HashSet<_> =
            g.edges().iter().map(|e| (e.dst, e.src)).collect();
        self.triplets()
            .iter()
            .all(|&(r, c, _)| r == c || edges.contains(&(r, c)))
    }

    /// Dense powers `S^0, ..., S^max_power`.
    pub fn dense_powers(&self, max_power: usize) -> Vec<DMatrix<f64>> {
        let s = self.to_dense();
        let mut out = Vec::with_capacity(max_power + 1);
        out.push(DMatrix::identity(self.n, self.n));
        for l in 1..=max_power {
            let next = &s * &out[l - 1];
            out.push(next);
        }
        out
    }
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(GspError::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Checked `y = S x`.
pub fn apply_shift(s: &ShiftOperator, x: &GraphSignal) -> Result<GraphSignal> {
    check_len(s.n(), x.len())?;
    Ok(s.apply(x))
}

/// `[x, S x, S^2 x, ..., S^max_power x]` by repeated application.
pub fn shift_powers(
    s: &ShiftOperator,
    x: &GraphSignal,
    max_power: usize,
) -> Result<Vec<GraphSignal>> {
    check_len(s.n(), x.len())?;
    let mut out = Vec::with_capacity(max_power + 1);
    out.push(x.clone());
    for l in 0..max_power {
        let next = s.apply(&out[l]);
        out.push(next);
    }
    Ok(out)
}
