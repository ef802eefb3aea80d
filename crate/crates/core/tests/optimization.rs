//! Optimizer and spectral-solution behavior on small problems.

use gcdr::linalg::{center_columns, sym_eig, DenseMatrix};
use gcdr::optim::{minimize, Objective, OptimizerConfig, QuadraticObjective};
use gcdr::pipeline::{input_affinity, run, InitKind, RunSpec};
use gcdr::spectral::{
    closed_form_eigenvalues, pca, precision_coupling_closed_form, precision_coupling_objective,
    PrecisionCouplingConfig,
};
use gcdr::synthetic::{gaussian_blobs, standard_normal};
use gcdr::{CouplingProblem, KernelKind, MethodKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn tsne_problem(x: &DenseMatrix) -> CouplingProblem {
    let input = input_affinity(x, MethodKind::Tsne, 5.0).unwrap();
    CouplingProblem::new(MethodKind::Tsne, input.affinity, KernelKind::Student)
        .unwrap()
        .classic_scale()
        .unwrap()
}

fn small_init(n: usize, seed: u64) -> DenseMatrix {
    standard_normal(n, 2, seed).scaled(1e-2)
}

#[test]
fn minimize_is_deterministic() {
    let (x, _) = gaussian_blobs(&[10, 10], 4, 3.0, 1);
    let prob = tsne_problem(&x);
    let cfg = OptimizerConfig {
        iterations: 150,
        learning_rate: 50.0,
        ..OptimizerConfig::for_method(MethodKind::Tsne)
    };
    let z0 = small_init(20, 2);
    let a = minimize(&prob, &z0, &cfg, None).unwrap();
    let b = minimize(&prob, &z0, &cfg, None).unwrap();
    assert_eq!(a.z, b.z);
    assert_eq!(a.history, b.history);
}

#[test]
fn best_iterate_beats_every_unexaggerated_step() {
    let (x, _) = gaussian_blobs(&[12, 12], 4, 3.0, 3);
    let prob = tsne_problem(&x);
    let mut cfg = OptimizerConfig {
        iterations: 120,
        learning_rate: 50.0,
        ..OptimizerConfig::for_method(MethodKind::Tsne)
    };
    cfg.early_exaggeration.iterations = 40;
    let out = minimize(&prob, &small_init(24, 4), &cfg, None).unwrap();
    assert_eq!(out.history.len(), out.iterations_run + 1);
    let unexaggerated = &out.history[40..];
    let lowest = unexaggerated.iter().copied().fold(f64::INFINITY, f64::min);
    assert_eq!(out.best_loss, lowest);
    assert_eq!(prob.loss(&out.z, 1.0).unwrap(), out.best_loss);
}

#[test]
fn early_stop_is_a_stationary_point() {
    let target = DenseMatrix::from_rows(&[[1.0, -2.0], [0.5, 3.0], [-1.5, 0.0]]);
    let obj = QuadraticObjective {
        target: target.clone(),
    };
    let cfg = OptimizerConfig {
        iterations: 5000,
        learning_rate: 0.1,
        grad_tolerance: 1e-9,
        ..OptimizerConfig::default()
    };
    let out = minimize(&obj, &DenseMatrix::zeros(3, 2), &cfg, None).unwrap();
    assert!(out.stopped_early);
    assert!(out.final_grad_max < 1e-9);
    assert!(out.z.sub(&target).max_abs() < 1e-9);
}

#[test]
fn separated_clusters_stay_pure() {
    let (x, labels) = gaussian_blobs(&[30, 30, 30], 8, 8.0, 21);
    let spec = RunSpec {
        perplexity: 10.0,
        optimizer: OptimizerConfig {
            iterations: 400,
            ..OptimizerConfig::for_method(MethodKind::Tsne)
        },
        ..RunSpec::new(MethodKind::Tsne)
            .with_init(InitKind::Pca)
            .with_seed(5)
    };
    let out = run(&spec, &x, None).unwrap();
    let nbrs = gcdr::eval::neighbor_sets(&out.z, 10);
    let same: usize = nbrs
        .iter()
        .enumerate()
        .map(|(i, ns)| ns.iter().filter(|&&j| labels[j] == labels[i]).count())
        .sum();
    let purity = same as f64 / (90 * 10) as f64;
    assert!(purity >= 0.95, "10-NN label purity {purity}");
}

#[test]
fn unit_gamma_matches_uncentered_gram_eigenvectors() {
    let x = standard_normal(15, 4, 8);
    let cfg = PrecisionCouplingConfig::new(1.0, 2).unwrap();
    let z = precision_coupling_closed_form(&x, &cfg).unwrap();
    let g = nalgebra::DMatrix::from_row_slice(15, 15, x.gram().as_slice());
    let eig = nalgebra::SymmetricEigen::new(g);
    let mut order: Vec<usize> = (0..15).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    for (c, &k) in order.iter().take(2).enumerate() {
        let d = eig.eigenvalues[k];
        let v = eig.eigenvectors.column(k);
        let col = z.column(c);
        let norm = col.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!((norm - d.sqrt()).abs() < 1e-9 * d.sqrt().max(1.0));
        let cos: f64 = col.iter().zip(v.iter()).map(|(a, b)| a * b).sum::<f64>() / norm;
        assert!((cos.abs() - 1.0).abs() < 1e-9, "column {c} cosine {cos}");
    }
}

#[test]
fn optimal_eigenvalues_are_sorted_and_clipped() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let mut d: Vec<f64> = (0..6)
            .map(|_| Distribution::<f64>::sample(&StandardNormal, &mut rng).abs() * 3.0)
            .collect();
        d.sort_by(|a, b| b.total_cmp(a));
        let gamma = 0.1 + 2.0 * Distribution::<f64>::sample(&StandardNormal, &mut rng).abs();
        let lambda = closed_form_eigenvalues(&d, gamma, 4);
        assert_eq!(lambda.len(), 4);
        assert!(lambda.iter().all(|&l| l >= 0.0));
        assert!(lambda.windows(2).all(|w| w[0] >= w[1]));
    }
}

#[test]
fn closed_form_beats_random_perturbations() {
    let x = center_columns(&standard_normal(12, 4, 30));
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for gamma in [0.3, 1.0, 2.5] {
        let cfg = PrecisionCouplingConfig::new(gamma, 2).unwrap();
        let z = precision_coupling_closed_form(&x, &cfg).unwrap();
        let best = precision_coupling_objective(&z, &x, &cfg).unwrap();
        for _ in 0..50 {
            let e = DenseMatrix::from_fn(12, 2, |_, _| {
                1e-2 * Distribution::<f64>::sample(&StandardNormal, &mut rng)
            });
            let v = precision_coupling_objective(&z.add(&e), &x, &cfg).unwrap();
            assert!(
                v >= best - 1e-10,
                "gamma {gamma}: perturbed {v} < optimum {best}"
            );
        }
    }
}

#[test]
fn pca_scores_are_centered_and_ordered() {
    let x = standard_normal(25, 5, 40);
    let z = pca(&x, 3).unwrap();
    for c in 0..3 {
        assert!(z.column(c).iter().sum::<f64>().abs() < 1e-10);
    }
    let var: Vec<f64> = (0..3)
        .map(|c| z.column(c).iter().map(|v| v * v).sum())
        .collect();
    assert!(var.windows(2).all(|w| w[0] >= w[1]));
    // The score variances are the leading eigenvalues of the centered Gram matrix.
    let eig = sym_eig(&center_columns(&x).gram()).unwrap();
    for (v, e) in var.iter().zip(&eig.eigenvalues) {
        assert!((v - e).abs() < 1e-9 * eig.eigenvalues[0]);
    }
}
