//! Cross-entropy couplings between an input-side posterior and the latent
//! posterior: the SNE, t-SNE, LargeVis and UMAP objectives with exact
//! gradients and their attraction/repulsion split.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelKind;
use crate::linalg::{pairwise_sq_dists, DenseMatrix};
use crate::optim::Objective;
use crate::par;
use crate::posterior::{AffinityMatrix, Normalization};

/// Neighbor-embedding method, identified by its (input, latent) prior pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodKind {
    /// (D, D)
    Sne,
    /// (D, E)
    Tsne,
    /// (D, B)
    LargeVis,
    /// (thresholded B, B)
    Umap,
}

impl MethodKind {
    pub const ALL: [MethodKind; 4] = [
        MethodKind::Sne,
        MethodKind::Tsne,
        MethodKind::LargeVis,
        MethodKind::Umap,
    ];

    /// Normalization the input-side affinity must carry.
    pub fn input_normalization(self) -> Normalization {
        match self {
            MethodKind::Sne => Normalization::Row,
            MethodKind::Tsne | MethodKind::LargeVis => Normalization::SymmetrizedRow,
            MethodKind::Umap => Normalization::ThresholdedBernoulli,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MethodKind::Sne => "sne",
            MethodKind::Tsne => "tsne",
            MethodKind::LargeVis => "largevis",
            MethodKind::Umap => "umap",
        }
    }
}

impl std::fmt::Display for MethodKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "sne" => Ok(MethodKind::Sne),
            "tsne" => Ok(MethodKind::Tsne),
            "largevis" => Ok(MethodKind::LargeVis),
            "umap" => Ok(MethodKind::Umap),
            other => Err(Error::Parameter(format!("unknown method '{other}'"))),
        }
    }
}

/// A coupling objective over latent coordinates `Z`.
#[derive(Debug, Clone)]
pub struct CouplingProblem {
    pub method: MethodKind,
    pub p: AffinityMatrix,
    pub latent_kernel: KernelKind,
    /// Multiplier on the input-side affinity; `1 / (2n)` under classic
    /// scaling of `P + P^T`.
    pub mass_scale: f64,
}

/// Attraction and repulsion parts of a coupling loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceSplit {
    pub attraction: f64,
    pub repulsion: f64,
}

impl ForceSplit {
    pub fn total(&self) -> f64 {
        self.attraction + self.repulsion
    }
}

impl CouplingProblem {
    pub fn new(method: MethodKind, p: AffinityMatrix, latent_kernel: KernelKind) -> Result<Self> {
        let want = method.input_normalization();
        if p.normalization != want {
            return Err(Error::Contract(format!(
                "{method} needs a {want:?} input affinity, got {:?}",
                p.normalization
            )));
        }
        Ok(CouplingProblem {
            method,
            p,
            latent_kernel,
            mass_scale: 1.0,
        })
    }

    /// Divides `P + P^T` by `2n` so it sums to one, as common t-SNE
    /// implementations do. Only meaningful for t-SNE and LargeVis.
    pub fn classic_scale(mut self) -> Result<Self> {
        match self.method {
            MethodKind::Tsne | MethodKind::LargeVis => {
                self.mass_scale = 1.0 / (2.0 * self.n() as f64);
                Ok(self)
            }
            m => Err(Error::Parameter(format!(
                "classic scaling does not apply to {m}"
            ))),
        }
    }

    pub fn n(&self) -> usize {
        self.p.n()
    }

    /// Weight of `-log k(Z_i - Z_j)` for the unordered pair `i < j`.
    #[inline]
    fn pair_weight(&self, i: usize, j: usize) -> f64 {
        let v = &self.p.values;
        match self.method {
            MethodKind::Sne => self.mass_scale * (v[(i, j)] + v[(j, i)]),
            MethodKind::Tsne | MethodKind::LargeVis => self.mass_scale * v[(i, j)],
            MethodKind::Umap => 2.0 * v[(i, j)],
        }
    }

    /// Ordered-pair weights `A` with attraction `-sum_{i != j} A_ij log k_ij`.
    /// `L(A + A^T)` is the Laplacian of the expected input graph.
    pub fn attraction_weights(&self) -> DenseMatrix {
        let n = self.n();
        let v = &self.p.values;
        DenseMatrix::from_fn(n, n, |i, j| {
            if i == j {
                return 0.0;
            }
            match self.method {
                MethodKind::Sne => self.mass_scale * v[(i, j)],
                MethodKind::Tsne | MethodKind::LargeVis => 0.5 * self.mass_scale * v[(i, j)],
                MethodKind::Umap => v[(i, j)],
            }
        })
    }

    fn check_z(&self, z: &DenseMatrix) -> Result<()> {
        if z.rows() != self.n() {
            return Err(Error::Contract(format!(
                "embedding has {} rows, problem has {} points",
                z.rows(),
                self.n()
            )));
        }
        if !z.is_finite() {
            return Err(Error::Contract(
                "embedding has non-finite coordinates".into(),
            ));
        }
        Ok(())
    }

    fn log_kernel(&self, z: &DenseMatrix) -> DenseMatrix {
        let kind = self.latent_kernel;
        let mut lk = pairwise_sq_dists(z);
        par::for_each_row_mut(lk.as_mut_slice(), z.rows(), |i, row| {
            for (j, v) in row.iter_mut().enumerate() {
                *v = if i == j {
                    f64::NEG_INFINITY
                } else {
                    kind.log_eval(*v)
                };
            }
        });
        lk
    }

    /// Attraction and repulsion, with the attraction multiplied by
    /// `exaggeration`.
    fn split(&self, z: &DenseMatrix, lk: &DenseMatrix, exaggeration: f64) -> (ForceSplit, Aux) {
        let n = z.rows();
        let attraction = exaggeration
            * par::ordered_sum(n, |i| {
                ((i + 1)..n)
                    .map(|j| -self.pair_weight(i, j) * lk[(i, j)])
                    .fold(0.0, |a, b| a + b)
            });
        let (repulsion, aux) = match self.method {
            MethodKind::Sne => {
                let log_s: Vec<f64> = par::map_indices(n, |i| log_sum_exp(lk.row(i)));
                let mass: Vec<f64> = (0..n)
                    .map(|i| self.mass_scale * self.p.values.row(i).iter().sum::<f64>())
                    .collect();
                let rep = (0..n).map(|i| mass[i] * log_s[i]).fold(0.0, |a, b| a + b);
                (rep, Aux::Rows { log_s, mass })
            }
            MethodKind::Tsne => {
                let log_t = std::f64::consts::LN_2 + log_sum_exp_upper(lk);
                let mass = par::ordered_sum(n, |i| {
                    ((i + 1)..n)
                        .map(|j| self.pair_weight(i, j))
                        .fold(0.0, |a, b| a + b)
                });
                (mass * log_t, Aux::Global { log_t, mass })
            }
            MethodKind::LargeVis | MethodKind::Umap => {
                let rep = par::ordered_sum(n, |i| {
                    ((i + 1)..n)
                        .map(|j| 2.0 * lk[(i, j)].exp().ln_1p())
                        .fold(0.0, |a, b| a + b)
                });
                (rep, Aux::None)
            }
        };
        (
            ForceSplit {
                attraction,
                repulsion,
            },
            aux,
        )
    }

    fn gradient(
        &self,
        z: &DenseMatrix,
        lk: &DenseMatrix,
        aux: &Aux,
        exaggeration: f64,
    ) -> DenseMatrix {
        let (n, q) = z.shape();
        let sq = pairwise_sq_dists(z);
        let kind = self.latent_kernel;
        let mut g = DenseMatrix::zeros(n, q);
        par::for_each_row_mut(g.as_mut_slice(), q, |i, gi| {
            let zi = z.row(i);
            for j in 0..n {
                if j == i {
                    continue;
                }
                let dlog = kind.dlog_dsq(sq[(i, j)]);
                let lkij = lk[(i, j)];
                let rep = match aux {
                    Aux::Rows { log_s, mass } => {
                        mass[i] * (lkij - log_s[i]).exp() + mass[j] * (lkij - log_s[j]).exp()
                    }
                    Aux::Global { log_t, mass } => 2.0 * mass * (lkij - log_t).exp(),
                    Aux::None => {
                        let k = lkij.exp();
                        2.0 * k / (1.0 + k)
                    }
                };
                let w = self.pair_weight(i.min(j), i.max(j));
                let coeff = 2.0 * dlog * (rep - exaggeration * w);
                for ((gk, a), b) in gi.iter_mut().zip(zi).zip(z.row(j)) {
                    *gk += coeff * (a - b);
                }
            }
        });
        g
    }

    /// Loss and gradient with the attraction multiplied by `exaggeration`.
    pub fn loss_grad_exaggerated(
        &self,
        z: &DenseMatrix,
        exaggeration: f64,
    ) -> Result<(f64, DenseMatrix)> {
        self.check_z(z)?;
        let lk = self.log_kernel(z);
        let (split, aux) = self.split(z, &lk, exaggeration);
        let loss = sentinel(split.total());
        let g = self.gradient(z, &lk, &aux, exaggeration);
        Ok((loss, g))
    }
}

enum Aux {
    Rows { log_s: Vec<f64>, mass: Vec<f64> },
    Global { log_t: f64, mass: f64 },
    None,
}

fn sentinel(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// `log sum exp` over a row, skipping `-inf` entries.
fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + row
        .iter()
        .map(|&v| (v - m).exp())
        .fold(0.0, |a, b| a + b)
        .ln()
}

/// `log sum_{i<j} exp(lk_ij)` with a fixed summation order.
fn log_sum_exp_upper(lk: &DenseMatrix) -> f64 {
    let n = lk.rows();
    let m = par::map_indices(n, |i| {
        ((i + 1)..n)
            .map(|j| lk[(i, j)])
            .fold(f64::NEG_INFINITY, f64::max)
    })
    .into_iter()
    .fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    let s = par::ordered_sum(n, |i| {
        ((i + 1)..n)
            .map(|j| (lk[(i, j)] - m).exp())
            .fold(0.0, |a, b| a + b)
    });
    m + s.ln()
}

/// Coupling loss at `Z`. Returns `+inf` when a required logarithm is
/// undefined, so callers can reject the step.
pub fn loss(prob: &CouplingProblem, z: &DenseMatrix) -> Result<f64> {
    Ok(sentinel(attraction_repulsion(prob, z)?.total()))
}

/// Exact gradient of [`loss`] with respect to `Z`.
pub fn grad(prob: &CouplingProblem, z: &DenseMatrix) -> Result<DenseMatrix> {
    prob.loss_grad_exaggerated(z, 1.0).map(|(_, g)| g)
}

/// Splits the loss into attraction `-sum P_ij log k_z(Z_i - Z_j)` and the
/// remaining repulsion; `attraction + repulsion` is the loss.
pub fn attraction_repulsion(prob: &CouplingProblem, z: &DenseMatrix) -> Result<ForceSplit> {
    prob.check_z(z)?;
    let lk = prob.log_kernel(z);
    Ok(prob.split(z, &lk, 1.0).0)
}

impl Objective for CouplingProblem {
    fn loss_grad(&self, z: &DenseMatrix, exaggeration: f64) -> Result<(f64, DenseMatrix)> {
        self.loss_grad_exaggerated(z, exaggeration)
    }

    fn loss(&self, z: &DenseMatrix, exaggeration: f64) -> Result<f64> {
        self.check_z(z)?;
        let lk = self.log_kernel(z);
        Ok(sentinel(self.split(z, &lk, exaggeration).0.total()))
    }
}
