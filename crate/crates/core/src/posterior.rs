//! Limit posterior laws of the latent graph under the B, D and E priors:
//! expectations, exact samplers, and the derived input-side affinities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::LatentGraph;
use crate::linalg::DenseMatrix;

/// Graph prior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PriorKind {
    /// Independent Bernoulli edges.
    B,
    /// Exactly one outgoing edge per node.
    D,
    /// Exactly `n` edges in total.
    E,
}

impl std::str::FromStr for PriorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "B" | "b" | "bernoulli" => Ok(PriorKind::B),
            "D" | "d" | "degree" => Ok(PriorKind::D),
            "E" | "e" | "edges" => Ok(PriorKind::E),
            other => Err(Error::Parameter(format!("unknown prior '{other}'"))),
        }
    }
}

/// How an affinity matrix is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Normalization {
    /// Each row sums to one.
    Row,
    /// All entries sum to one.
    Global,
    /// Entry-wise edge probabilities in `[0, 1)`.
    Bernoulli,
    /// `P + P^T` of a row-normalized matrix; total mass `2n`.
    SymmetrizedRow,
    /// Edge probabilities of the symmetrized thresholded Bernoulli graph.
    ThresholdedBernoulli,
}

/// Posterior edge expectations (or a transform of them), tagged with the
/// prior and normalization they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    pub values: DenseMatrix,
    pub prior: PriorKind,
    pub normalization: Normalization,
}

impl AffinityMatrix {
    pub fn n(&self) -> usize {
        self.values.rows()
    }

    /// Builds an affinity and checks the invariants of its normalization.
    pub fn new(
        values: DenseMatrix,
        prior: PriorKind,
        normalization: Normalization,
    ) -> Result<Self> {
        let m = AffinityMatrix {
            values,
            prior,
            normalization,
        };
        m.check()?;
        Ok(m)
    }

    fn check(&self) -> Result<()> {
        let v = &self.values;
        if !v.is_square() {
            return Err(Error::Contract("affinity matrix must be square".into()));
        }
        let n = v.rows();
        for i in 0..n {
            if v[(i, i)] != 0.0 {
                return Err(Error::Contract(format!("nonzero diagonal at node {i}")));
            }
        }
        if v.as_slice().iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
            return Err(Error::Contract(
                "affinities must be finite and nonnegative".into(),
            ));
        }
        let tol = 1e-10;
        match self.normalization {
            Normalization::Row => {
                for (i, s) in v.row_sums().into_iter().enumerate() {
                    if (s - 1.0).abs() > tol {
                        return Err(Error::Contract(format!("row {i} sums to {s}")));
                    }
                }
            }
            Normalization::Global => {
                let s = v.sum();
                if (s - 1.0).abs() > tol {
                    return Err(Error::Contract(format!("entries sum to {s}")));
                }
            }
            Normalization::Bernoulli | Normalization::ThresholdedBernoulli => {
                if v.as_slice().iter().any(|&x| x >= 1.0) {
                    return Err(Error::Contract("edge probabilities must be below 1".into()));
                }
            }
            Normalization::SymmetrizedRow => {
                if v.asymmetry() > tol {
                    return Err(Error::Contract(
                        "symmetrized affinity is not symmetric".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

fn check_kernel(k: &DenseMatrix, pi: Option<&DenseMatrix>) -> Result<()> {
    if !k.is_square() {
        return Err(Error::Contract("kernel matrix must be square".into()));
    }
    for i in 0..k.rows() {
        if k[(i, i)] != 0.0 {
            return Err(Error::Contract(format!(
                "kernel diagonal is nonzero at node {i}"
            )));
        }
    }
    if k.as_slice().iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
        return Err(Error::Contract(
            "kernel entries must be finite and nonnegative".into(),
        ));
    }
    if let Some(pi) = pi {
        if pi.shape() != k.shape() {
            return Err(Error::Contract("edge prior has the wrong shape".into()));
        }
        if pi.as_slice().iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
            return Err(Error::Contract(
                "edge prior entries must be finite and nonnegative".into(),
            ));
        }
    }
    Ok(())
}

/// `pi ⊙ K` with the diagonal excluded.
fn weighted_kernel(k: &DenseMatrix, pi: Option<&DenseMatrix>) -> DenseMatrix {
    let n = k.rows();
    DenseMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            pi.map_or(1.0, |p| p[(i, j)]) * k[(i, j)]
        }
    })
}

/// Expected adjacency of the limit posterior `P_prior(· ; pi ⊙ K)`.
///
/// * `B`: `piK / (1 + piK)` entry-wise.
/// * `D`: `pi ⊙ K` normalized per row.
/// * `E`: `pi ⊙ K` normalized globally (expected edge count divided by `n`).
pub fn posterior_expectation(
    k: &impl AsRef<DenseMatrix>,
    prior: PriorKind,
    pi: Option<&DenseMatrix>,
) -> Result<AffinityMatrix> {
    let k = k.as_ref();
    check_kernel(k, pi)?;
    let wk = weighted_kernel(k, pi);
    let n = k.rows();
    let (values, normalization) = match prior {
        PriorKind::B => (wk.map(|v| v / (1.0 + v)), Normalization::Bernoulli),
        PriorKind::D => {
            let sums = wk.row_sums();
            if let Some(node) = sums.iter().position(|&s| s <= 0.0) {
                return Err(Error::IsolatedNode { node });
            }
            (
                DenseMatrix::from_fn(n, n, |i, j| wk[(i, j)] / sums[i]),
                Normalization::Row,
            )
        }
        PriorKind::E => {
            let total = wk.sum();
            if total <= 0.0 {
                return Err(Error::DegenerateKernel);
            }
            (wk.map(|v| v / total), Normalization::Global)
        }
    };
    Ok(AffinityMatrix {
        values,
        prior,
        normalization,
    })
}

/// Deterministic random stream for Monte-Carlo sample `index` under
/// `master_seed`. Streams for different indices are independent, so samples
/// can be drawn in any order or in parallel.
pub fn sample_stream(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Precomputed sampling tables for one posterior law.
#[derive(Debug, Clone)]
pub struct PosteriorSampler {
    n: usize,
    law: Law,
}

#[derive(Debug, Clone)]
enum Law {
    /// Row-major edge probabilities.
    Bernoulli(Vec<f64>),
    /// Per-row cumulative weights.
    RowMultinomial(Vec<Vec<f64>>),
    /// Cumulative weights over the off-diagonal cells, with their indices.
    GlobalMultinomial {
        cumulative: Vec<f64>,
        cells: Vec<(usize, usize)>,
    },
}

impl PosteriorSampler {
    pub fn new(
        k: &impl AsRef<DenseMatrix>,
        prior: PriorKind,
        pi: Option<&DenseMatrix>,
    ) -> Result<Self> {
        let k = k.as_ref();
        check_kernel(k, pi)?;
        let wk = weighted_kernel(k, pi);
        let n = k.rows();
        let law = match prior {
            PriorKind::B => Law::Bernoulli(wk.as_slice().iter().map(|v| v / (1.0 + v)).collect()),
            PriorKind::D => {
                let mut rows = Vec::with_capacity(n);
                for i in 0..n {
                    let cum = cumulative(wk.row(i).iter().copied());
                    if cum.last().is_none_or(|&t| t <= 0.0) {
                        return Err(Error::IsolatedNode { node: i });
                    }
                    rows.push(cum);
                }
                Law::RowMultinomial(rows)
            }
            PriorKind::E => {
                let cells: Vec<(usize, usize)> = (0..n)
                    .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                    .collect();
                let cum = cumulative(cells.iter().map(|&(i, j)| wk[(i, j)]));
                if cum.last().is_none_or(|&t| t <= 0.0) {
                    return Err(Error::DegenerateKernel);
                }
                Law::GlobalMultinomial {
                    cumulative: cum,
                    cells,
                }
            }
        };
        Ok(PosteriorSampler { n, law })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Draws one graph.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> LatentGraph {
        let n = self.n;
        let mut w = LatentGraph::empty(n);
        match &self.law {
            Law::Bernoulli(p) => {
                for i in 0..n {
                    for j in 0..n {
                        // Zero-probability cells (including the diagonal) never fire.
                        let pij = p[i * n + j];
                        if pij > 0.0 && rng.random::<f64>() < pij {
                            w.increment(i, j);
                        }
                    }
                }
            }
            Law::RowMultinomial(rows) => {
                for (i, cum) in rows.iter().enumerate() {
                    let j = draw(cum, rng);
                    w.increment(i, j);
                }
            }
            Law::GlobalMultinomial { cumulative, cells } => {
                for _ in 0..n {
                    let (i, j) = cells[draw(cumulative, rng)];
                    w.increment(i, j);
                }
            }
        }
        w
    }
}

fn cumulative(weights: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

/// Index of the first cumulative weight strictly above a uniform draw.
/// Zero-weight cells can never be selected.
fn draw<R: Rng + ?Sized>(cum: &[f64], rng: &mut R) -> usize {
    let total = *cum.last().expect("non-empty table");
    let u = rng.random::<f64>() * total;
    let idx = cum.partition_point(|&c| c <= u);
    if idx < cum.len() {
        idx
    } else {
        // u rounded up to the total: take the cell where the total is reached.
        cum.partition_point(|&c| c < total)
    }
}

/// Draws one graph from the limit posterior.
pub fn sample_posterior_graph<R: Rng + ?Sized>(
    k: &impl AsRef<DenseMatrix>,
    prior: PriorKind,
    pi: Option<&DenseMatrix>,
    rng: &mut R,
) -> Result<LatentGraph> {
    Ok(PosteriorSampler::new(k, prior, pi)?.sample(rng))
}

/// `P + P^T` for a row-normalized affinity.
pub fn symmetrize_row_affinity(p: &AffinityMatrix) -> Result<AffinityMatrix> {
    if p.normalization != Normalization::Row {
        return Err(Error::Contract(format!(
            "symmetrization expects a row-normalized affinity, got {:?}",
            p.normalization
        )));
    }
    let v = &p.values;
    let n = v.rows();
    Ok(AffinityMatrix {
        values: DenseMatrix::from_fn(n, n, |i, j| v[(i, j)] + v[(j, i)]),
        prior: p.prior,
        normalization: Normalization::SymmetrizedRow,
    })
}

/// Edge probabilities of the thresholded graph `1{W + W^T >= 1}` when `W`
/// has independent Bernoulli edges: `P_ij + P_ji - P_ij P_ji`.
pub fn umap_threshold_prob(p: &AffinityMatrix) -> Result<AffinityMatrix> {
    if p.normalization != Normalization::Bernoulli {
        return Err(Error::Contract(format!(
            "thresholding expects Bernoulli edge probabilities, got {:?}",
            p.normalization
        )));
    }
    let v = &p.values;
    let n = v.rows();
    Ok(AffinityMatrix {
        values: DenseMatrix::from_fn(n, n, |i, j| {
            let (a, b) = (v[(i, j)], v[(j, i)]);
            a + b - a * b
        }),
        prior: p.prior,
        normalization: Normalization::ThresholdedBernoulli,
    })
}
