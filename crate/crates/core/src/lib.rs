//! Dimensionality reduction as coupling of latent graphs.
//!
//! Each neighbor-embedding method (SNE, t-SNE, LargeVis, UMAP) is the
//! cross-entropy between two posteriors over random graphs: one built from a
//! kernel on the data, one from a kernel on the embedding. The crate provides
//! the kernels and posteriors, the coupling losses and their gradients, a
//! gradient-descent optimizer, the spectral special cases (PCA, Laplacian
//! eigenmaps, a precision-coupling closed form), ccPCA initialization, and a
//! neighborhood-preservation score.
//!
//! With the default `parallel` feature, pairwise work runs on rayon; results
//! do not depend on the number of threads.

pub mod ccpca;
pub mod coupling;
pub mod diagnose;
pub mod error;
pub mod eval;
pub mod graph;
pub mod io;
pub mod kernels;
pub mod linalg;
pub mod optim;
mod par;
pub mod pipeline;
pub mod posterior;
pub mod spectral;
pub mod synthetic;

pub use ccpca::{averaged_projector, ccpca, CcpcaConfig};
pub use coupling::{CouplingProblem, MethodKind};
pub use error::{Error, Result};
pub use eval::{kary_agreement, KSpec, NeighborhoodScore};
pub use graph::{laplacian, LatentGraph, Partition};
pub use kernels::{Bandwidths, KernelKind, KernelMatrix};
pub use linalg::DenseMatrix;
pub use optim::{minimize, OptimizerConfig};
pub use pipeline::{run, InitKind, RunManifest, RunSpec};
pub use posterior::{AffinityMatrix, PriorKind};
