//! Self-checks of the graph-coupling model on a dataset: the Gaussian trace
//! identity, invariance of the MRF density to per-component translations,
//! and Monte-Carlo edge frequencies of the posterior samplers.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::graph::{connected_components, laplacian, log_mrf_density, LatentGraph};
use crate::kernels::{kernel_matrix, KernelKind};
use crate::linalg::DenseMatrix;
use crate::par;
use crate::posterior::{posterior_expectation, sample_stream, PosteriorSampler, PriorKind};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Worst observed value of the checked statistic.
    pub worst: f64,
    pub tolerance: f64,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {}: worst {:.3e} (tolerance {:.1e})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.worst,
            self.tolerance
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnoseConfig {
    /// Random graphs per deterministic check.
    pub trials: usize,
    /// Monte-Carlo samples per prior for the frequency check.
    pub samples: usize,
    /// Rows of the dataset used by the frequency check.
    pub frequency_rows: usize,
    pub seed: u64,
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        DiagnoseConfig {
            trials: 100,
            samples: 100_000,
            frequency_rows: 5,
            seed: 0,
        }
    }
}

/// Random directed multigraph with weights in `0..=max_weight`.
pub fn random_graph<R: Rng + ?Sized>(n: usize, max_weight: u32, rng: &mut R) -> LatentGraph {
    let mut w = LatentGraph::empty(n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                for _ in 0..rng.random_range(0..=max_weight) {
                    w.increment(i, j);
                }
            }
        }
    }
    w
}

/// Relative gap between the Gaussian log-density and `-tr(X^T L X) / 2`.
pub fn trace_identity_gap(x: &DenseMatrix, w: &LatentGraph) -> Result<f64> {
    let log_f = log_mrf_density(x, w, KernelKind::Gaussian, None)?;
    let l = laplacian(w)?;
    let quad = x.transpose().matmul(&l.matmul(x)).trace() / 2.0;
    Ok((log_f + quad).abs() / (1.0 + log_f.abs()))
}

/// Largest change in the log-density when each connected component of `w`
/// is translated by its own random offset.
pub fn shift_invariance_gap<R: Rng + ?Sized>(
    x: &DenseMatrix,
    w: &LatentGraph,
    kind: KernelKind,
    rng: &mut R,
) -> Result<f64> {
    let parts = connected_components(w);
    let offsets: Vec<Vec<f64>> = (0..parts.count())
        .map(|_| {
            (0..x.cols())
                .map(|_| 10.0 * Distribution::<f64>::sample(&StandardNormal, rng))
                .collect::<Vec<f64>>()
        })
        .collect();
    let shifted = DenseMatrix::from_fn(x.rows(), x.cols(), |i, c| {
        x[(i, c)] + offsets[parts.component_of(i)][c]
    });
    let a = log_mrf_density(x, w, kind, None)?;
    let b = log_mrf_density(&shifted, w, kind, None)?;
    Ok((a - b).abs() / (1.0 + a.abs()))
}

/// Largest standardized deviation between sampled edge counts and the
/// posterior expectation, and whether every sample had the structure the
/// prior dictates (one edge per row for `D`, `n` edges for `E`).
pub fn posterior_frequency_deviation(
    k: &DenseMatrix,
    prior: PriorKind,
    samples: usize,
    seed: u64,
) -> Result<(f64, bool)> {
    let n = k.rows();
    let sampler = PosteriorSampler::new(k, prior, None)?;
    let expected = posterior_expectation(k, prior, None)?.values;
    let draws = par::map_indices(samples, |s| {
        let w = sampler.sample(&mut sample_stream(seed, s as u64));
        let ok = match prior {
            PriorKind::B => true,
            PriorKind::D => (0..n).all(|i| w.out_degree(i) == 1),
            PriorKind::E => w.total_weight() == n as u64,
        };
        (w, ok)
    });
    let mut counts = vec![0u64; n * n];
    let mut structured = true;
    for (w, ok) in &draws {
        structured &= ok;
        for i in 0..n {
            for j in 0..n {
                counts[i * n + j] += u64::from(w.get(i, j));
            }
        }
    }
    let s = samples as f64;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let p = expected[(i, j)];
            // Per-sample mean and variance of W_ij.
            let (mean, var) = match prior {
                PriorKind::B | PriorKind::D => (p, p * (1.0 - p)),
                PriorKind::E => (n as f64 * p, n as f64 * p * (1.0 - p)),
            };
            let observed = counts[i * n + j] as f64 / s;
            let dev = (observed - mean).abs();
            if var > 0.0 {
                worst = worst.max(dev / (var / s).sqrt());
            } else if dev > 0.0 {
                worst = f64::INFINITY;
            }
        }
    }
    Ok((worst, structured))
}

/// Runs all checks on `x` with random graphs and a unit-bandwidth Gaussian
/// kernel on the leading rows.
pub fn diagnose(x: &DenseMatrix, cfg: &DiagnoseConfig) -> Result<Vec<Check>> {
    let n = x.rows();
    let mut rng = sample_stream(cfg.seed, 0);
    let mut trace_worst: f64 = 0.0;
    let mut shift_worst: f64 = 0.0;
    let mut student_worst: f64 = 0.0;
    for _ in 0..cfg.trials {
        let w = random_graph(n, 2, &mut rng);
        trace_worst = trace_worst.max(trace_identity_gap(x, &w)?);
        // Sparse graphs have several components, which is the interesting case.
        let sparse = sparse_graph(n, &mut rng);
        shift_worst = shift_worst.max(shift_invariance_gap(
            x,
            &sparse,
            KernelKind::Gaussian,
            &mut rng,
        )?);
        student_worst = student_worst.max(shift_invariance_gap(
            x,
            &sparse,
            KernelKind::Student,
            &mut rng,
        )?);
    }
    let mut checks = vec![
        Check {
            name: "gaussian trace identity".into(),
            passed: trace_worst <= 1e-8,
            worst: trace_worst,
            tolerance: 1e-8,
        },
        Check {
            name: "gaussian shift invariance".into(),
            passed: shift_worst <= 1e-9,
            worst: shift_worst,
            tolerance: 1e-9,
        },
        Check {
            name: "student shift invariance".into(),
            passed: student_worst <= 1e-9,
            worst: student_worst,
            tolerance: 1e-9,
        },
    ];

    let m = cfg.frequency_rows.min(n);
    if m >= 2 && cfg.samples > 0 {
        let head = DenseMatrix::from_fn(m, x.cols(), |i, c| x[(i, c)]);
        let k = kernel_matrix(&head, KernelKind::Gaussian, None)?;
        for prior in [PriorKind::B, PriorKind::D, PriorKind::E] {
            let (z, structured) =
                posterior_frequency_deviation(&k.values, prior, cfg.samples, cfg.seed)?;
            checks.push(Check {
                name: format!("posterior {prior:?} edge frequencies"),
                passed: z <= 4.0 && structured,
                worst: z,
                tolerance: 4.0,
            });
        }
    }
    Ok(checks)
}

/// Graph with about one edge per node, so it usually splits into several
/// components.
pub fn sparse_graph<R: Rng + ?Sized>(n: usize, rng: &mut R) -> LatentGraph {
    let mut w = LatentGraph::empty(n);
    if n < 2 {
        return w;
    }
    for _ in 0..n / 2 {
        let i = rng.random_range(0..n);
        let j = (i + rng.random_range(1..n)) % n;
        w.increment(i, j);
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::standard_normal;

    #[test]
    fn checks_pass_on_random_data() {
        let x = standard_normal(8, 3, 4);
        let cfg = DiagnoseConfig {
            trials: 20,
            samples: 20_000,
            ..Default::default()
        };
        let checks = diagnose(&x, &cfg).unwrap();
        assert_eq!(checks.len(), 6);
        for c in &checks {
            assert!(c.passed, "{c}");
        }
    }

    #[test]
    fn frequency_check_structure() {
        let k = DenseMatrix::from_rows(&[[0.0, 1.0, 3.0], [1.0, 0.0, 1.0], [3.0, 1.0, 0.0]]);
        for prior in [PriorKind::B, PriorKind::D, PriorKind::E] {
            let (z, ok) = posterior_frequency_deviation(&k, prior, 20_000, 1).unwrap();
            assert!(ok && z < 4.5, "{prior:?}: {z}");
        }
    }

    #[test]
    fn trace_gap_is_tiny_on_a_path() {
        let x = DenseMatrix::from_rows(&[[0.0], [1.0], [3.0]]);
        let w = LatentGraph::from_rows(&[[0, 1, 0], [0, 0, 2], [0, 0, 0]]).unwrap();
        // log f = -(1 + 2 * 4) / 2
        assert!(trace_identity_gap(&x, &w).unwrap() < 1e-15);
    }
}
