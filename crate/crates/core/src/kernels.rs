//! Shift-invariant kernels, per-node bandwidth calibration, and kernel
//! matrices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{pairwise_sq_dists, DenseMatrix};
use crate::par;

/// Perplexity used when none is given.
pub const DEFAULT_PERPLEXITY: f64 = 30.0;

const CALIBRATION_MAX_ITERS: usize = 64;
const CALIBRATION_TOLERANCE: f64 = 1e-5;

/// Radial kernel family, evaluated on a squared (already bandwidth-scaled)
/// displacement norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    /// `exp(-|u|^2 / 2)`
    Gaussian,
    /// `(1 + |u|^2)^-1`, one degree of freedom.
    Student,
}

impl KernelKind {
    #[inline]
    pub fn eval(self, sq: f64) -> f64 {
        match self {
            KernelKind::Gaussian => (-0.5 * sq).exp(),
            KernelKind::Student => 1.0 / (1.0 + sq),
        }
    }

    /// `log k`, computed without going through `k` so it never underflows.
    #[inline]
    pub fn log_eval(self, sq: f64) -> f64 {
        match self {
            KernelKind::Gaussian => -0.5 * sq,
            KernelKind::Student => -sq.ln_1p(),
        }
    }

    /// Derivative of `log k` with respect to the squared norm.
    #[inline]
    pub fn dlog_dsq(self, sq: f64) -> f64 {
        match self {
            KernelKind::Gaussian => -0.5,
            KernelKind::Student => -1.0 / (1.0 + sq),
        }
    }
}

impl std::str::FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(KernelKind::Gaussian),
            "student" | "t" | "cauchy" => Ok(KernelKind::Student),
            other => Err(Error::Parameter(format!("unknown kernel '{other}'"))),
        }
    }
}

/// Per-node bandwidths `tau_i`, all strictly positive and finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Bandwidths(Vec<f64>);

impl Bandwidths {
    pub fn new(tau: Vec<f64>) -> Result<Self> {
        if let Some(i) = tau.iter().position(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::Parameter(format!(
                "bandwidth {i} must be positive and finite, got {}",
                tau[i]
            )));
        }
        Ok(Bandwidths(tau))
    }

    pub fn uniform(n: usize, tau: f64) -> Result<Self> {
        Self::new(vec![tau; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_uniform(&self) -> bool {
        self.0.windows(2).all(|w| w[0] == w[1])
    }
}

/// Result of a perplexity calibration: bandwidths plus the entropy (bits)
/// each row reached.
#[derive(Debug, Clone)]
pub struct Calibration {
    pub bandwidths: Bandwidths,
    pub entropies: Vec<f64>,
}

/// Entropy in bits of the row distribution `p_j ∝ exp(-beta * d_j)`.
///
/// `dists` excludes the node itself. Distances are shifted by their minimum
/// so the largest weight is exactly one.
pub fn row_entropy_bits(dists: &[f64], beta: f64) -> f64 {
    let dmin = dists.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut z = 0.0;
    let mut wd = 0.0;
    for &d in dists {
        let shifted = d - dmin;
        let w = (-beta * shifted).exp();
        z += w;
        wd += w * shifted;
    }
    (z.ln() + beta * wd / z) / std::f64::consts::LN_2
}

/// Finds `tau_i` so that each Gaussian row `p_{j|i} ∝ exp(-D_ij / (2 tau_i^2))`
/// has perplexity `perplexity`.
pub fn calibrate_bandwidths(d: &DenseMatrix, perplexity: f64) -> Result<Bandwidths> {
    calibrate(d, perplexity).map(|c| c.bandwidths)
}

/// Same as [`calibrate_bandwidths`], also reporting the reached entropies.
pub fn calibrate(d: &DenseMatrix, perplexity: f64) -> Result<Calibration> {
    if !d.is_square() {
        return Err(Error::Contract("distance matrix must be square".into()));
    }
    let n = d.rows();
    if n < 2 || !(perplexity >= 1.0 && perplexity <= (n - 1) as f64) {
        return Err(Error::Parameter(format!(
            "perplexity must lie in [1, n-1] = [1, {}], got {perplexity}",
            n.saturating_sub(1)
        )));
    }
    let target = perplexity.log2();
    let rows = par::map_indices(n, |i| calibrate_row(d, i, target));
    let mut tau = Vec::with_capacity(n);
    let mut entropies = Vec::with_capacity(n);
    for r in rows {
        let (t, h) = r?;
        tau.push(t);
        entropies.push(h);
    }
    Ok(Calibration {
        bandwidths: Bandwidths::new(tau)?,
        entropies,
    })
}

fn calibrate_row(d: &DenseMatrix, i: usize, target: f64) -> Result<(f64, f64)> {
    let dists: Vec<f64> = d
        .row(i)
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &v)| v)
        .collect();
    if !dists.iter().any(|&v| v > 0.0) {
        return Err(Error::DegenerateRow { row: i });
    }

    // Bisection on log(beta), beta = 1 / (2 tau^2). Entropy decreases in beta.
    let mean = dists.iter().sum::<f64>() / dists.len() as f64;
    let mut u = -mean.ln();
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    let mut step = 1.0;
    let mut best = (u, f64::INFINITY, 0.0);
    for _ in 0..CALIBRATION_MAX_ITERS {
        let h = row_entropy_bits(&dists, u.exp());
        let gap = (h - target).abs();
        if gap < best.1 {
            best = (u, gap, h);
        }
        if gap <= 1e-12 {
            break;
        }
        if h > target {
            lo = u;
            u = if hi.is_finite() {
                0.5 * (lo + hi)
            } else {
                u + step
            };
        } else {
            hi = u;
            u = if lo.is_finite() {
                0.5 * (lo + hi)
            } else {
                u - step
            };
        }
        if !(lo.is_finite() && hi.is_finite()) {
            step *= 2.0;
        }
    }
    let (u, gap, h) = best;
    if gap > CALIBRATION_TOLERANCE {
        return Err(Error::PerplexityUnreachable {
            row: i,
            entropy: h,
            target,
        });
    }
    Ok(((2.0 * u.exp()).recip().sqrt(), h))
}

/// A kernel matrix `K_ij = k((X_i - X_j) / tau_i)` with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub values: DenseMatrix,
    pub kind: KernelKind,
    pub bandwidths: Option<Bandwidths>,
}

impl KernelMatrix {
    pub fn n(&self) -> usize {
        self.values.rows()
    }
}

impl AsRef<DenseMatrix> for KernelMatrix {
    fn as_ref(&self) -> &DenseMatrix {
        &self.values
    }
}

/// Evaluates the kernel on every pair of rows of `x`. Without bandwidths,
/// `tau_i = 1`.
pub fn kernel_matrix(
    x: &DenseMatrix,
    kind: KernelKind,
    tau: Option<&Bandwidths>,
) -> Result<KernelMatrix> {
    let d = pairwise_sq_dists(x);
    kernel_from_sq_dists(&d, kind, tau)
}

/// Same as [`kernel_matrix`] starting from precomputed squared distances.
pub fn kernel_from_sq_dists(
    d: &DenseMatrix,
    kind: KernelKind,
    tau: Option<&Bandwidths>,
) -> Result<KernelMatrix> {
    let n = d.rows();
    if let Some(t) = tau {
        if t.len() != n {
            return Err(Error::Contract(format!(
                "{} bandwidths for {n} points",
                t.len()
            )));
        }
    }
    let mut values = DenseMatrix::zeros(n, n);
    par::for_each_row_mut(values.as_mut_slice(), n, |i, row| {
        let inv_t2 = tau.map_or(1.0, |t| {
            let ti = t.as_slice()[i];
            1.0 / (ti * ti)
        });
        for (j, v) in row.iter_mut().enumerate() {
            *v = if i == j {
                0.0
            } else {
                kind.eval(d[(i, j)] * inv_t2)
            };
        }
    });
    Ok(KernelMatrix {
        values,
        kind,
        bandwidths: tau.cloned(),
    })
}

/// The kernel with each row divided by its largest off-diagonal entry,
/// computed in log space. Row-normalized quantities are unchanged, but a
/// point far from all others keeps a nonzero row where the plain kernel
/// would underflow.
pub fn row_scaled_kernel(
    d: &DenseMatrix,
    kind: KernelKind,
    tau: Option<&Bandwidths>,
) -> Result<DenseMatrix> {
    let n = d.rows();
    if let Some(t) = tau {
        if t.len() != n {
            return Err(Error::Contract(format!(
                "{} bandwidths for {n} points",
                t.len()
            )));
        }
    }
    let mut values = DenseMatrix::zeros(n, n);
    par::for_each_row_mut(values.as_mut_slice(), n, |i, row| {
        let inv_t2 = tau.map_or(1.0, |t| {
            let ti = t.as_slice()[i];
            1.0 / (ti * ti)
        });
        for (j, v) in row.iter_mut().enumerate() {
            *v = if i == j {
                f64::NEG_INFINITY
            } else {
                kind.log_eval(d[(i, j)] * inv_t2)
            };
        }
        let top = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for v in row.iter_mut() {
            *v = if top == f64::NEG_INFINITY {
                0.0
            } else {
                (*v - top).exp()
            };
        }
    });
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_values() {
        let x = DenseMatrix::from_rows(&[[0.0], [1.0]]);
        let g = kernel_matrix(&x, KernelKind::Gaussian, None).unwrap();
        assert_eq!(g.values[(0, 1)], (-0.5f64).exp());
        assert!((g.values[(0, 1)] - 0.6065).abs() < 1e-4);
        assert_eq!(g.values[(0, 0)], 0.0);
        let s = kernel_matrix(&x, KernelKind::Student, None).unwrap();
        assert_eq!(s.values[(1, 0)], 0.5);
    }

    #[test]
    fn coincident_rows_have_unit_kernel() {
        let x = DenseMatrix::from_rows(&[[2.0, 1.0], [2.0, 1.0], [0.0, 0.0]]);
        for kind in [KernelKind::Gaussian, KernelKind::Student] {
            let k = kernel_matrix(&x, kind, None).unwrap();
            assert_eq!(k.values[(0, 1)], 1.0);
            assert_eq!(k.values[(1, 1)], 0.0);
        }
    }

    #[test]
    fn bandwidth_scaling() {
        let x = DenseMatrix::from_rows(&[[0.0], [2.0]]);
        let tau = Bandwidths::new(vec![2.0, 1.0]).unwrap();
        let k = kernel_matrix(&x, KernelKind::Gaussian, Some(&tau)).unwrap();
        assert_eq!(k.values[(0, 1)], (-0.5f64).exp());
        assert_eq!(k.values[(1, 0)], (-2.0f64).exp());
    }

    #[test]
    fn equidistant_rows_are_uniform() {
        let d = DenseMatrix::from_rows(&[[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]]);
        let c = calibrate(&d, 2.0).unwrap();
        for h in c.entropies {
            assert!((h - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_neighbor() {
        let d = DenseMatrix::from_rows(&[[0.0, 4.0], [4.0, 0.0]]);
        let c = calibrate(&d, 1.0).unwrap();
        assert_eq!(c.entropies, vec![0.0, 0.0]);
        // The first probe already hits the target.
        let beta0: f64 = 1.0 / 4.0;
        let tau0 = (1.0 / (2.0 * beta0)).sqrt();
        assert!((c.bandwidths.as_slice()[0] - tau0).abs() < 1e-12);
    }

    #[test]
    fn calibration_errors() {
        let d = DenseMatrix::from_rows(&[[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]]);
        assert!(matches!(calibrate(&d, 0.5), Err(Error::Parameter(_))));
        assert!(matches!(calibrate(&d, 2.5), Err(Error::Parameter(_))));
        // Row 2 sees two tied neighbors: entropy is pinned at one bit.
        let tied = DenseMatrix::from_rows(&[[0.0, 0.0, 1.0], [0.0, 0.0, 1.0], [1.0, 1.0, 0.0]]);
        assert!(matches!(
            calibrate(&tied, 1.5),
            Err(Error::PerplexityUnreachable { row: 2, .. })
        ));
        let zero = DenseMatrix::zeros(3, 3);
        assert!(matches!(
            calibrate(&zero, 1.5),
            Err(Error::DegenerateRow { row: 0 })
        ));
    }

    #[test]
    fn bandwidth_validation() {
        assert!(Bandwidths::new(vec![1.0, 0.0]).is_err());
        assert!(Bandwidths::new(vec![f64::NAN]).is_err());
        let x = DenseMatrix::zeros(3, 1);
        let tau = Bandwidths::uniform(2, 1.0).unwrap();
        assert!(kernel_matrix(&x, KernelKind::Gaussian, Some(&tau)).is_err());
    }

    #[test]
    fn row_scaling_survives_underflow() {
        // Point 0 is far from a tight pair; its plain Gaussian row underflows.
        let d = DenseMatrix::from_rows(&[
            [0.0, 4000.0, 4001.0],
            [4000.0, 0.0, 1.0],
            [4001.0, 1.0, 0.0],
        ]);
        let plain = kernel_from_sq_dists(&d, KernelKind::Gaussian, None).unwrap();
        assert_eq!(plain.values.row(0), &[0.0, 0.0, 0.0]);
        let scaled = row_scaled_kernel(&d, KernelKind::Gaussian, None).unwrap();
        assert_eq!(scaled[(0, 1)], 1.0);
        assert!((scaled[(0, 2)] - (-0.5f64).exp()).abs() < 1e-15);
        assert_eq!(scaled[(0, 0)], 0.0);
        // Rows that do not underflow are proportional to the plain kernel.
        let ratio = scaled[(1, 2)] / plain.values[(1, 2)];
        assert!((scaled[(1, 0)] - ratio * plain.values[(1, 0)]).abs() <= 1e-15);
    }
}
