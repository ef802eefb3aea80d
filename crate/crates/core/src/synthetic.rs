//! Small synthetic datasets with known cluster structure.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::DenseMatrix;

/// Isotropic Gaussian clusters with unit within-cluster standard deviation.
/// Cluster centers are drawn from `N(0, separation^2 I)`. Returns the data
/// and the cluster label of each row; rows are grouped by cluster.
pub fn gaussian_blobs(
    sizes: &[usize],
    dim: usize,
    separation: f64,
    seed: u64,
) -> (DenseMatrix, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = sizes
        .iter()
        .map(|_| {
            (0..dim)
                .map(|_| separation * Distribution::<f64>::sample(&StandardNormal, &mut rng))
                .collect()
        })
        .collect();
    blobs_around(&centers, sizes, 1.0, &mut rng)
}

/// Gaussian clusters around the given centers.
pub fn blobs_around(
    centers: &[Vec<f64>],
    sizes: &[usize],
    spread: f64,
    rng: &mut ChaCha8Rng,
) -> (DenseMatrix, Vec<usize>) {
    assert_eq!(centers.len(), sizes.len());
    let dim = centers.first().map_or(0, Vec::len);
    let n: usize = sizes.iter().sum();
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for (c, (&size, center)) in sizes.iter().zip(centers).enumerate() {
        for _ in 0..size {
            for &m in center {
                let e: f64 = StandardNormal.sample(rng);
                data.push(m + spread * e);
            }
            labels.push(c);
        }
    }
    (
        DenseMatrix::from_vec(n, dim, data).expect("finite samples"),
        labels,
    )
}

/// `rows x cols` matrix of independent standard normal entries.
pub fn standard_normal(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DenseMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
}
