//! PCA, Laplacian eigenmaps, and the precision-coupling objective whose
//! minimizer is a PCA embedding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{components_by, laplacian_weighted};
use crate::linalg::{center_columns, normalize_sign, spd_inverse_logdet, sym_eig, DenseMatrix};
use crate::optim::Objective;
use crate::posterior::AffinityMatrix;

fn check_dim(q: usize, n: usize, p: usize) -> Result<()> {
    if q == 0 || q > n.min(p) {
        return Err(Error::Parameter(format!(
            "target dimension {q} must lie in [1, min(n, p)] = [1, {}]",
            n.min(p)
        )));
    }
    Ok(())
}

/// PCA embedding of the column-centered data: `V_q D_q^(1/2)` where
/// `X_c X_c^T = V D V^T`.
///
/// Solves whichever of the `n x n` Gram or `p x p` covariance eigenproblems
/// is smaller; both give the same coordinates, with each column signed so
/// that its largest-magnitude entry is positive.
pub fn pca(x: &DenseMatrix, q: usize) -> Result<DenseMatrix> {
    let (n, p) = x.shape();
    check_dim(q, n, p)?;
    if p < n {
        pca_covariance(x, q)
    } else {
        pca_gram(x, q)
    }
}

/// PCA through the eigenvectors of the `n x n` Gram matrix.
pub fn pca_gram(x: &DenseMatrix, q: usize) -> Result<DenseMatrix> {
    let (n, p) = x.shape();
    check_dim(q, n, p)?;
    let xc = center_columns(x);
    let eig = sym_eig(&xc.gram())?;
    Ok(scaled_leading(
        &eig.eigenvectors,
        &eig.eigenvalues,
        q,
        |d| d.max(0.0).sqrt(),
    ))
}

/// PCA through the `p x p` scatter matrix, projecting the data on its
/// leading eigenvectors.
pub fn pca_covariance(x: &DenseMatrix, q: usize) -> Result<DenseMatrix> {
    let (n, p) = x.shape();
    check_dim(q, n, p)?;
    let xc = center_columns(x);
    let scatter = xc.transpose().gram();
    let eig = sym_eig(&scatter)?;
    let mut z = xc.matmul(&eig.eigenvectors.leading_columns(q));
    for c in 0..q {
        normalize_sign(&mut z, c);
    }
    Ok(z)
}

fn scaled_leading(
    v: &DenseMatrix,
    values: &[f64],
    q: usize,
    f: impl Fn(f64) -> f64,
) -> DenseMatrix {
    let s: Vec<f64> = values[..q].iter().map(|&d| f(d)).collect();
    DenseMatrix::from_fn(v.rows(), q, |i, c| v[(i, c)] * s[c])
}

/// Laplacian-eigenmaps coordinates with a report on graph connectivity.
#[derive(Debug, Clone)]
pub struct SpectralEmbedding {
    pub coords: DenseMatrix,
    /// Connected components of the affinity graph.
    pub components: usize,
    /// Eigenvalues of the returned directions, ascending.
    pub eigenvalues: Vec<f64>,
}

impl SpectralEmbedding {
    /// More than one component: the Laplacian null space holds `R - 1`
    /// directions beyond the constant one, which carry no geometry.
    pub fn is_degenerate(&self) -> bool {
        self.components > 1
    }
}

/// Eigenvectors of the Laplacian of the `(P + P^T) / 2`-weighted graph for
/// the `q` smallest nonzero eigenvalues. The null space (one direction per
/// connected component) is skipped.
pub fn laplacian_eigenmaps(p: &AffinityMatrix, q: usize) -> Result<SpectralEmbedding> {
    let w = &p.values;
    let n = w.rows();
    let parts = components_by(n, |i, j| i != j && (w[(i, j)] > 0.0 || w[(j, i)] > 0.0));
    let r = parts.count();
    if q == 0 || r + q > n {
        return Err(Error::Parameter(format!(
            "cannot extract {q} nonzero Laplacian directions from {n} nodes in {r} components"
        )));
    }
    if r > 1 {
        log::warn!(
            "affinity graph has {r} connected components; eigenmaps are degenerate across them"
        );
    }
    let lap = laplacian_weighted(&w.scaled(0.5));
    let eig = sym_eig(&lap)?;
    // Ascending position k sits at descending index n - 1 - k.
    let picks: Vec<usize> = (r..r + q).map(|k| n - 1 - k).collect();
    let coords = DenseMatrix::from_fn(n, q, |i, c| eig.eigenvectors[(i, picks[c])]);
    Ok(SpectralEmbedding {
        coords,
        components: r,
        eigenvalues: picks.iter().map(|&k| eig.eigenvalues[k]).collect(),
    })
}

/// Settings of the precision coupling.
///
/// `gamma` is the ratio of the log-determinant coefficient to the trace
/// coefficient, `(nu_Z + q) / (nu_X + p)`; Wishart degrees related by
/// `nu_Z = nu_X + p - q` give `gamma = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionCouplingConfig {
    pub gamma: f64,
    pub q: usize,
}

impl PrecisionCouplingConfig {
    pub fn new(gamma: f64, q: usize) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Parameter(format!(
                "gamma must be positive, got {gamma}"
            )));
        }
        Ok(PrecisionCouplingConfig { gamma, q })
    }
}

/// `tr(Z^T (I + X X^T)^-1 Z) - gamma log|I + Z Z^T|` as an optimizer
/// objective, with `(I + X X^T)^-1` precomputed.
#[derive(Debug, Clone)]
pub struct PrecisionCoupling {
    precision: DenseMatrix,
    gamma: f64,
}

impl PrecisionCoupling {
    pub fn new(x: &DenseMatrix, cfg: &PrecisionCouplingConfig) -> Result<Self> {
        let n = x.rows();
        let a = DenseMatrix::identity(n).add(&x.gram());
        let (precision, _) = spd_inverse_logdet(&a)?;
        Ok(PrecisionCoupling {
            precision,
            gamma: cfg.gamma,
        })
    }

    fn parts(&self, z: &DenseMatrix) -> Result<(f64, DenseMatrix, DenseMatrix)> {
        if z.rows() != self.precision.rows() {
            return Err(Error::Contract(
                "embedding and data row counts differ".into(),
            ));
        }
        let cz = self.precision.matmul(z);
        let trace: f64 = z
            .as_slice()
            .iter()
            .zip(cz.as_slice())
            .map(|(a, b)| a * b)
            .sum();
        // log|I_n + Z Z^T| = log|I_q + Z^T Z|
        let small = DenseMatrix::identity(z.cols()).add(&z.transpose().matmul(z));
        let (small_inv, logdet) = spd_inverse_logdet(&small)?;
        Ok((trace - self.gamma * logdet, cz, small_inv))
    }

    pub fn value(&self, z: &DenseMatrix) -> Result<f64> {
        self.parts(z).map(|(v, _, _)| v)
    }
}

impl Objective for PrecisionCoupling {
    fn loss_grad(&self, z: &DenseMatrix, _: f64) -> Result<(f64, DenseMatrix)> {
        let (v, cz, small_inv) = self.parts(z)?;
        // d/dZ: 2 C Z - 2 gamma Z (I_q + Z^T Z)^-1
        let g = cz
            .scaled(2.0)
            .sub(&z.matmul(&small_inv).scaled(2.0 * self.gamma));
        Ok((v, g))
    }
}

/// Value of the precision-coupling objective at `Z`.
pub fn precision_coupling_objective(
    z: &DenseMatrix,
    x: &DenseMatrix,
    cfg: &PrecisionCouplingConfig,
) -> Result<f64> {
    if z.rows() != x.rows() {
        return Err(Error::Contract(
            "embedding and data row counts differ".into(),
        ));
    }
    PrecisionCoupling::new(x, cfg)?.value(z)
}

/// Optimal eigenvalues `max(0, gamma (1 + d_i) - 1)` for the leading `q`
/// eigenvalues `d` of `X X^T` (descending).
pub fn closed_form_eigenvalues(d: &[f64], gamma: f64, q: usize) -> Vec<f64> {
    d.iter()
        .take(q)
        .map(|&di| (gamma * (1.0 + di) - 1.0).max(0.0))
        .collect()
}

/// Minimizer `V_q diag(lambda*)^(1/2)` of the precision coupling, with `V`
/// the eigenvectors of the (uncentered) `X X^T`.
pub fn precision_coupling_closed_form(
    x: &DenseMatrix,
    cfg: &PrecisionCouplingConfig,
) -> Result<DenseMatrix> {
    let n = x.rows();
    if cfg.q == 0 || cfg.q > n {
        return Err(Error::Parameter(format!(
            "target dimension {} must lie in [1, {n}]",
            cfg.q
        )));
    }
    let eig = sym_eig(&x.gram())?;
    let d: Vec<f64> = eig.eigenvalues.iter().map(|&v| v.max(0.0)).collect();
    let lambda = closed_form_eigenvalues(&d, cfg.gamma, cfg.q);
    Ok(scaled_leading(&eig.eigenvectors, &lambda, cfg.q, f64::sqrt))
}
