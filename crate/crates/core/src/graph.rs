//! Latent structuring graphs: Laplacians, connected components, component
//! projectors, and the pairwise MRF log-density.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::kernels::{Bandwidths, KernelKind};
use crate::linalg::{sq_dist, DenseMatrix};

/// Directed multigraph `W` with nonnegative integer weights, zero diagonal and
/// every entry at most `n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LatentGraph {
    n: usize,
    weights: Vec<u32>,
}

impl LatentGraph {
    pub fn empty(n: usize) -> Self {
        LatentGraph {
            n,
            weights: vec![0; n * n],
        }
    }

    /// Builds a graph from signed rows, checking membership in the support
    /// (square, zero diagonal, entries in `0..=n`).
    pub fn from_rows<R: AsRef<[i64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let mut weights = Vec::with_capacity(n * n);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != n {
                return Err(Error::Contract(format!(
                    "graph row {i} has {} entries, expected {n}",
                    r.len()
                )));
            }
            for (j, &w) in r.iter().enumerate() {
                if w < 0 {
                    return Err(Error::Contract(format!(
                        "negative weight {w} at ({i}, {j})"
                    )));
                }
                if i == j && w != 0 {
                    return Err(Error::Contract(format!(
                        "self-loop of weight {w} at node {i}"
                    )));
                }
                if w as usize > n {
                    return Err(Error::Contract(format!(
                        "weight {w} at ({i}, {j}) exceeds n = {n}"
                    )));
                }
                weights.push(w as u32);
            }
        }
        Ok(LatentGraph { n, weights })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.weights[i * self.n + j]
    }

    /// Adds one edge `i -> j`. Used by the samplers, which guarantee the
    /// support constraints themselves.
    #[inline]
    pub(crate) fn increment(&mut self, i: usize, j: usize) {
        debug_assert!(i != j);
        self.weights[i * self.n + j] += 1;
    }

    pub fn out_degree(&self, i: usize) -> u64 {
        self.weights[i * self.n..(i + 1) * self.n]
            .iter()
            .map(|&w| w as u64)
            .sum()
    }

    pub fn total_weight(&self) -> u64 {
        self.weights.iter().map(|&w| w as u64).sum()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j) as f64)
    }

    /// Checks the support constraints.
    pub fn validate(&self) -> Result<()> {
        for i in 0..self.n {
            if self.get(i, i) != 0 {
                return Err(Error::Contract(format!("self-loop at node {i}")));
            }
        }
        if let Some(pos) = self.weights.iter().position(|&w| w as usize > self.n) {
            return Err(Error::Contract(format!(
                "weight at ({}, {}) exceeds n",
                pos / self.n,
                pos % self.n
            )));
        }
        Ok(())
    }
}

/// `L(W + W^T)`: degree matrix minus the symmetrized weights. Computed in
/// integer arithmetic, so every row sums to exactly zero.
pub fn laplacian(w: &LatentGraph) -> Result<DenseMatrix> {
    w.validate()?;
    let n = w.n();
    let mut out = DenseMatrix::zeros(n, n);
    for i in 0..n {
        let mut degree: i64 = 0;
        for j in 0..n {
            if i != j {
                let sym = w.get(i, j) as i64 + w.get(j, i) as i64;
                degree += sym;
                out[(i, j)] = -(sym as f64);
            }
        }
        out[(i, i)] = degree as f64;
    }
    Ok(out)
}

/// `L(A + A^T)` for a real nonnegative weight matrix, e.g. an expected graph.
pub fn laplacian_weighted(a: &DenseMatrix) -> DenseMatrix {
    let n = a.rows();
    let mut out = DenseMatrix::zeros(n, n);
    for i in 0..n {
        let mut degree = 0.0;
        for j in 0..n {
            if i != j {
                let sym = a[(i, j)] + a[(j, i)];
                degree += sym;
                out[(i, j)] = -sym;
            }
        }
        out[(i, i)] = degree;
    }
    out
}

/// Assignment of nodes to connected components.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    assignment: Vec<usize>,
    sizes: Vec<usize>,
}

impl Partition {
    /// Validates an assignment: component labels must be contiguous from 0
    /// and every label must be used.
    pub fn from_assignment(assignment: Vec<usize>) -> Result<Self> {
        let r = assignment.iter().max().map_or(0, |m| m + 1);
        let mut sizes = vec![0; r];
        for &c in &assignment {
            sizes[c] += 1;
        }
        if sizes.contains(&0) {
            return Err(Error::Contract(
                "component labels are not contiguous".into(),
            ));
        }
        Ok(Partition { assignment, sizes })
    }

    pub fn singletons(n: usize) -> Self {
        Partition {
            assignment: (0..n).collect(),
            sizes: vec![1; n],
        }
    }

    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    /// Number of components `R`.
    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn component_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn component_of(&self, i: usize) -> usize {
        self.assignment[i]
    }

    /// Members of each component, in increasing node order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.count()];
        for (i, &c) in self.assignment.iter().enumerate() {
            out[c].push(i);
        }
        out
    }
}

/// Components of the undirected graph whose edges are the pairs for which
/// `linked(i, j)` holds, numbered by their smallest node.
pub fn components_by(n: usize, linked: impl Fn(usize, usize) -> bool) -> Partition {
    const UNSEEN: usize = usize::MAX;
    let mut assignment = vec![UNSEEN; n];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..n {
        if assignment[start] != UNSEEN {
            continue;
        }
        let label = sizes.len();
        assignment[start] = label;
        let mut size = 1;
        queue.push_back(start);
        while let Some(u) = queue.pop_front() {
            for (v, slot) in assignment.iter_mut().enumerate() {
                if *slot == UNSEEN && linked(u, v) {
                    *slot = label;
                    size += 1;
                    queue.push_back(v);
                }
            }
        }
        sizes.push(size);
    }
    Partition { assignment, sizes }
}

/// Connected components of `W + W^T` restricted to positive edges.
pub fn connected_components(w: &LatentGraph) -> Partition {
    components_by(w.n(), |i, j| i != j && (w.get(i, j) > 0 || w.get(j, i) > 0))
}

/// Orthogonal projector onto the span of the component indicators:
/// entry `(i, j)` is `1 / n_r` when both nodes lie in component `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct CCProjector(pub DenseMatrix);

impl CCProjector {
    pub fn matrix(&self) -> &DenseMatrix {
        &self.0
    }
}

pub fn cc_projector(p: &Partition) -> CCProjector {
    let n = p.n();
    let sizes = p.component_sizes();
    let a = p.assignment();
    CCProjector(DenseMatrix::from_fn(n, n, |i, j| {
        if a[i] == a[j] {
            1.0 / sizes[a[i]] as f64
        } else {
            0.0
        }
    }))
}

/// Splits `X` into component means `X_M` (each row replaced by the mean of
/// its component) and the component-centered remainder `X_C = X - X_M`.
pub fn split_mean_centered(x: &DenseMatrix, p: &Partition) -> Result<(DenseMatrix, DenseMatrix)> {
    if x.rows() != p.n() {
        return Err(Error::Contract(format!(
            "{} rows but the partition covers {} nodes",
            x.rows(),
            p.n()
        )));
    }
    let cols = x.cols();
    let mut means = DenseMatrix::zeros(p.count(), cols);
    for i in 0..x.rows() {
        let c = p.component_of(i);
        for (m, v) in means.row_mut(c).iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    for (c, &size) in p.component_sizes().iter().enumerate() {
        for m in means.row_mut(c) {
            *m /= size as f64;
        }
    }
    let xm = DenseMatrix::from_fn(x.rows(), cols, |i, j| means[(p.component_of(i), j)]);
    let xc = x.sub(&xm);
    Ok((xm, xc))
}

/// Log of the unnormalized pairwise MRF density
/// `sum_ij W_ij log k((X_i - X_j) / tau_i)`.
///
/// Returns `-inf` when a weighted pair has zero kernel value.
pub fn log_mrf_density(
    x: &DenseMatrix,
    w: &LatentGraph,
    kind: KernelKind,
    tau: Option<&Bandwidths>,
) -> Result<f64> {
    let n = w.n();
    if x.rows() != n {
        return Err(Error::Contract(format!(
            "{} rows for a graph on {n} nodes",
            x.rows()
        )));
    }
    if let Some(t) = tau {
        if t.len() != n {
            return Err(Error::Contract(format!(
                "{} bandwidths for {n} nodes",
                t.len()
            )));
        }
    }
    let mut total = 0.0;
    for i in 0..n {
        let inv_t2 = tau.map_or(1.0, |t| {
            let ti = t.as_slice()[i];
            1.0 / (ti * ti)
        });
        for j in 0..n {
            let wij = w.get(i, j);
            if wij == 0 {
                continue;
            }
            let lk = kind.log_eval(sq_dist(x.row(i), x.row(j)) * inv_t2);
            if lk == f64::NEG_INFINITY {
                return Ok(f64::NEG_INFINITY);
            }
            total += wij as f64 * lk;
        }
    }
    Ok(total)
}
