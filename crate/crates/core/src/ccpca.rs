//! ccPCA: PCA of the data projected on the Monte-Carlo average of the
//! connected-component projectors of posterior graphs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{connected_components, Partition};
use crate::linalg::DenseMatrix;
use crate::par;
use crate::posterior::{sample_stream, PosteriorSampler, PriorKind};
use crate::spectral::pca;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CcpcaConfig {
    /// Number of posterior graphs averaged.
    pub samples: usize,
    pub prior: PriorKind,
    pub q: usize,
    pub seed: u64,
}

impl Default for CcpcaConfig {
    fn default() -> Self {
        CcpcaConfig {
            samples: 100,
            prior: PriorKind::D,
            q: 2,
            seed: 0,
        }
    }
}

/// Component partitions of `samples` posterior graphs. Sample `l` uses the
/// stream `(seed, l)`, so the result does not depend on scheduling.
pub fn sample_partitions(
    k: &impl AsRef<DenseMatrix>,
    prior: PriorKind,
    samples: usize,
    seed: u64,
) -> Result<Vec<Partition>> {
    let sampler = PosteriorSampler::new(k, prior, None)?;
    Ok(par::map_indices(samples, |l| {
        let mut rng = sample_stream(seed, l as u64);
        connected_components(&sampler.sample(&mut rng))
    }))
}

/// Mean number of connected components over `samples` posterior graphs.
pub fn mean_component_count(
    k: &impl AsRef<DenseMatrix>,
    prior: PriorKind,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let parts = sample_partitions(k, prior, samples, seed)?;
    Ok(parts.iter().map(|p| p.count() as f64).sum::<f64>() / samples.max(1) as f64)
}

/// `(1/N) sum_l U^l U^l^T` over posterior samples: entry `(i, j)` averages
/// `1/n_r` over the samples in which `i` and `j` share component `r`.
pub fn averaged_projector(k: &impl AsRef<DenseMatrix>, cfg: &CcpcaConfig) -> Result<DenseMatrix> {
    if cfg.samples == 0 {
        return Err(Error::Parameter("ccPCA needs at least one sample".into()));
    }
    let n = k.as_ref().rows();
    let parts = sample_partitions(k, cfg.prior, cfg.samples, cfg.seed)?;
    let mut acc = DenseMatrix::zeros(n, n);
    for part in &parts {
        for members in part.members() {
            let w = 1.0 / members.len() as f64;
            for &i in &members {
                for &j in &members {
                    acc[(i, j)] += w;
                }
            }
        }
    }
    Ok(acc.scaled(1.0 / cfg.samples as f64))
}

/// PCA of `M X`, with `M` the averaged component projector.
pub fn ccpca(
    x: &DenseMatrix,
    k: &impl AsRef<DenseMatrix>,
    cfg: &CcpcaConfig,
) -> Result<DenseMatrix> {
    if x.rows() != k.as_ref().rows() {
        return Err(Error::Contract(format!(
            "{} data rows for a {}-node kernel",
            x.rows(),
            k.as_ref().rows()
        )));
    }
    let m = averaged_projector(k, cfg)?;
    pca(&m.matmul(x), cfg.q)
}
