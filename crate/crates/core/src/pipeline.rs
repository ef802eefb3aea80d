//! End-to-end runs: initialization, input affinities, optimization and
//! neighborhood scores, with a manifest that pins everything needed to
//! reproduce the run.

use std::time::Instant;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ccpca::{ccpca, CcpcaConfig};
use crate::coupling::{CouplingProblem, MethodKind};
use crate::error::{Error, Result};
use crate::eval::{kary_agreement, NeighborhoodScore};
use crate::kernels::{
    calibrate_bandwidths, kernel_from_sq_dists, row_scaled_kernel, KernelKind, KernelMatrix,
    DEFAULT_PERPLEXITY,
};
use crate::linalg::{pairwise_sq_dists, DenseMatrix};
use crate::optim::{minimize, OptimizerConfig, TraceSink};
use crate::posterior::{
    posterior_expectation, sample_stream, symmetrize_row_affinity, umap_threshold_prob,
    AffinityMatrix, PriorKind,
};
use crate::spectral::{laplacian_eigenmaps, pca};

/// Scale of random initial coordinates.
pub const INIT_SCALE: f64 = 1e-4;

/// Stream index reserved for the random initialization, away from the
/// per-sample ccPCA streams.
const INIT_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitKind {
    Random,
    Pca,
    /// Laplacian eigenmaps of the input affinity.
    Le,
    Ccpca,
}

impl std::str::FromStr for InitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(InitKind::Random),
            "pca" => Ok(InitKind::Pca),
            "le" | "eigenmaps" => Ok(InitKind::Le),
            "ccpca" => Ok(InitKind::Ccpca),
            other => Err(Error::Parameter(format!(
                "unknown initialization '{other}'"
            ))),
        }
    }
}

impl std::fmt::Display for InitKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InitKind::Random => "random",
            InitKind::Pca => "pca",
            InitKind::Le => "le",
            InitKind::Ccpca => "ccpca",
        })
    }
}

/// Everything that determines a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub method: MethodKind,
    pub init: InitKind,
    pub perplexity: f64,
    pub q: usize,
    pub latent_kernel: KernelKind,
    /// Divide `P + P^T` by `2n` (t-SNE and LargeVis only).
    pub classic_scale: bool,
    /// Replace `optimizer.learning_rate` by the method's default for `n`.
    pub auto_learning_rate: bool,
    pub optimizer: OptimizerConfig,
    pub ccpca: CcpcaConfig,
    pub seed: u64,
}

impl RunSpec {
    /// Defaults for `method`: Gaussian latent kernel for SNE, Student
    /// otherwise; classic scaling for t-SNE.
    pub fn new(method: MethodKind) -> Self {
        RunSpec {
            method,
            init: InitKind::Random,
            perplexity: DEFAULT_PERPLEXITY,
            q: 2,
            latent_kernel: if method == MethodKind::Sne {
                KernelKind::Gaussian
            } else {
                KernelKind::Student
            },
            classic_scale: method == MethodKind::Tsne,
            auto_learning_rate: true,
            optimizer: OptimizerConfig::for_method(method),
            ccpca: CcpcaConfig::default(),
            seed: 0,
        }
    }

    pub fn with_init(mut self, init: InitKind) -> Self {
        self.init = init;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self, n: usize, p: usize) -> Result<()> {
        if n < 4 {
            return Err(Error::Parameter(format!("need at least 4 points, got {n}")));
        }
        if self.q == 0 || self.q > p.min(n) {
            return Err(Error::Parameter(format!(
                "target dimension {} exceeds min(n, p)",
                self.q
            )));
        }
        if !(self.perplexity >= 1.0 && self.perplexity <= (n - 1) as f64) {
            return Err(Error::Parameter(format!(
                "perplexity {} outside [1, {}]",
                self.perplexity,
                n - 1
            )));
        }
        if self.seed > i64::MAX as u64 {
            return Err(Error::Parameter(format!(
                "seed {} does not fit in a signed 64-bit integer",
                self.seed
            )));
        }
        if self.classic_scale && !matches!(self.method, MethodKind::Tsne | MethodKind::LargeVis) {
            return Err(Error::Parameter(format!(
                "classic scaling does not apply to {}",
                self.method
            )));
        }
        self.optimizer.validate()
    }

    /// Learning rate actually used for `n` points.
    pub fn learning_rate(&self, n: usize) -> f64 {
        if self.auto_learning_rate {
            default_learning_rate(self.method, self.classic_scale, n)
        } else {
            self.optimizer.learning_rate
        }
    }
}

/// Learning rates that keep the first steps of each objective comparable in
/// size. Losses summing over all pairs get gradients growing with `n`.
pub fn default_learning_rate(method: MethodKind, classic_scale: bool, n: usize) -> f64 {
    let n = n as f64;
    match (method, classic_scale) {
        (MethodKind::Tsne, true) => (n / 12.0).max(200.0),
        (MethodKind::Tsne, false) | (MethodKind::LargeVis, true) => 200.0 / n,
        (MethodKind::Sne, _) => 2.0,
        (MethodKind::LargeVis, false) | (MethodKind::Umap, _) => 1.0 / n.sqrt(),
    }
}

/// Input identity recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFingerprint {
    pub rows: usize,
    pub cols: usize,
    /// SHA-256 of the row-major little-endian `f64` bytes.
    pub sha256: String,
}

impl InputFingerprint {
    pub fn of(x: &DenseMatrix) -> Self {
        let mut hasher = Sha256::new();
        for v in x.as_slice() {
            hasher.update(v.to_le_bytes());
        }
        let digest = hasher.finalize();
        InputFingerprint {
            rows: x.rows(),
            cols: x.cols(),
            sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
        }
    }
}

/// Wall time of each stage, in seconds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub affinity: f64,
    pub init: f64,
    pub fit: f64,
    pub eval: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub spec: RunSpec,
    pub learning_rate: f64,
    pub input: InputFingerprint,
    pub final_loss: f64,
    pub iterations_run: usize,
    pub stopped_early: bool,
    /// Connected components of the input affinity graph.
    pub affinity_components: usize,
    pub scores: Vec<NeighborhoodScore>,
    pub artifacts: Vec<String>,
    pub timings: StageTimings,
}

impl RunManifest {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Contract(format!("manifest serialization: {e}")))
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Parameter(format!("manifest parse: {e}")))
    }

    /// The manifest with timings zeroed; identical across reruns of the
    /// same spec.
    pub fn without_timings(&self) -> Self {
        RunManifest {
            timings: StageTimings::default(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub z: DenseMatrix,
    pub init: DenseMatrix,
    pub history: Vec<f64>,
    pub manifest: RunManifest,
}

/// Input-side kernel and affinity for a method.
#[derive(Debug, Clone)]
pub struct InputAffinity {
    pub kernel: KernelMatrix,
    /// The kernel with rows rescaled in log space; used wherever only
    /// row-normalized quantities matter (the `D` prior).
    pub row_scaled: DenseMatrix,
    pub affinity: AffinityMatrix,
}

/// Perplexity-calibrated Gaussian kernel on `x` and the method's input-side
/// affinity: `P^D` (SNE), `P^D + P^D^T` (t-SNE, LargeVis) or the thresholded
/// Bernoulli probabilities (UMAP).
pub fn input_affinity(
    x: &DenseMatrix,
    method: MethodKind,
    perplexity: f64,
) -> Result<InputAffinity> {
    let d = pairwise_sq_dists(x);
    let tau = calibrate_bandwidths(&d, perplexity)?;
    let kernel = kernel_from_sq_dists(&d, KernelKind::Gaussian, Some(&tau))?;
    let row_scaled = row_scaled_kernel(&d, KernelKind::Gaussian, Some(&tau))?;
    let affinity = match method {
        MethodKind::Sne => posterior_expectation(&row_scaled, PriorKind::D, None)?,
        MethodKind::Tsne | MethodKind::LargeVis => {
            symmetrize_row_affinity(&posterior_expectation(&row_scaled, PriorKind::D, None)?)?
        }
        MethodKind::Umap => {
            umap_threshold_prob(&posterior_expectation(&kernel, PriorKind::B, None)?)?
        }
    };
    Ok(InputAffinity {
        kernel,
        row_scaled,
        affinity,
    })
}

/// Initial coordinates. Random draws are `N(0, INIT_SCALE^2)`; structured
/// initializations are rescaled so their largest coordinate is
/// `INIT_SCALE * sqrt(n)`.
pub fn initialize(spec: &RunSpec, x: &DenseMatrix, input: &InputAffinity) -> Result<DenseMatrix> {
    let n = x.rows();
    let z = match spec.init {
        InitKind::Random => {
            let mut rng = sample_stream(spec.seed, INIT_STREAM);
            return Ok(DenseMatrix::from_fn(n, spec.q, |_, _| {
                let e: f64 = StandardNormal.sample(&mut rng);
                INIT_SCALE * e
            }));
        }
        InitKind::Pca => pca(x, spec.q)?,
        InitKind::Le => laplacian_eigenmaps(&input.affinity, spec.q)?.coords,
        InitKind::Ccpca => {
            let cfg = CcpcaConfig {
                q: spec.q,
                seed: spec.seed,
                ..spec.ccpca
            };
            if cfg.prior == PriorKind::D {
                ccpca(x, &input.row_scaled, &cfg)?
            } else {
                ccpca(x, &input.kernel, &cfg)?
            }
        }
    };
    Ok(rescale_init(z, n))
}

fn rescale_init(z: DenseMatrix, n: usize) -> DenseMatrix {
    let m = z.max_abs();
    if m == 0.0 {
        return z;
    }
    z.scaled(INIT_SCALE * (n as f64).sqrt() / m)
}

/// Neighborhood sizes scored after a fit: `n/4` and `n/2`.
pub fn eval_ks(n: usize) -> Vec<usize> {
    vec![n / 4, n / 2]
}

/// Scores `z` against `x` at each neighborhood size.
pub fn evaluate(x: &DenseMatrix, z: &DenseMatrix, ks: &[usize]) -> Result<Vec<NeighborhoodScore>> {
    ks.iter().map(|&k| kary_agreement(x, z, k)).collect()
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let t0 = Instant::now();
    let out = f()?;
    Ok((out, t0.elapsed().as_secs_f64()))
}

/// Runs init, fit and eval on `x`.
pub fn run(spec: &RunSpec, x: &DenseMatrix, trace: Option<TraceSink<'_>>) -> Result<RunOutput> {
    let (n, p) = x.shape();
    spec.validate(n, p).map_err(|e| e.in_stage("spec"))?;

    let (input, t_aff) = timed(|| input_affinity(x, spec.method, spec.perplexity))
        .map_err(|e| e.in_stage("affinity"))?;
    let w = &input.affinity.values;
    let affinity_components =
        crate::graph::components_by(n, |i, j| i != j && (w[(i, j)] > 0.0 || w[(j, i)] > 0.0))
            .count();

    let (z0, t_init) = timed(|| initialize(spec, x, &input)).map_err(|e| e.in_stage("init"))?;

    let learning_rate = spec.learning_rate(n);
    let ee = &spec.optimizer.early_exaggeration;
    if ee.enabled && ee.iterations >= spec.optimizer.iterations {
        log::warn!(
            "early exaggeration lasts {} iterations but only {} run; the result is an exaggerated layout",
            ee.iterations,
            spec.optimizer.iterations
        );
    }
    let ((fit, final_loss), t_fit) = timed(|| {
        let mut prob =
            CouplingProblem::new(spec.method, input.affinity.clone(), spec.latent_kernel)?;
        if spec.classic_scale {
            prob = prob.classic_scale()?;
        }
        let cfg = OptimizerConfig {
            learning_rate,
            ..spec.optimizer
        };
        let fit = minimize(&prob, &z0, &cfg, trace)?;
        let best = fit.best_loss;
        Ok((fit, best))
    })
    .map_err(|e| e.in_stage("fit"))?;

    let (scores, t_eval) =
        timed(|| evaluate(x, &fit.z, &eval_ks(n))).map_err(|e| e.in_stage("eval"))?;

    let manifest = RunManifest {
        spec: spec.clone(),
        learning_rate,
        input: InputFingerprint::of(x),
        final_loss,
        iterations_run: fit.iterations_run,
        stopped_early: fit.stopped_early,
        affinity_components,
        scores,
        artifacts: Vec::new(),
        timings: StageTimings {
            affinity: t_aff,
            init: t_init,
            fit: t_fit,
            eval: t_eval,
        },
    };
    Ok(RunOutput {
        z: fit.z,
        init: z0,
        history: fit.history,
        manifest,
    })
}
