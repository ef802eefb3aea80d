//! Hot paths on a single worker thread versus the default rayon pool.
//!
//! Build with `--no-default-features` to measure the sequential fallback; both
//! series then run the same sequential code.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gcdr::kernels::kernel_matrix;
use gcdr::optim::Objective;
use gcdr::pipeline::input_affinity;
use gcdr::synthetic::{gaussian_blobs, standard_normal};
use gcdr::{
    ccpca, kary_agreement, CcpcaConfig, CouplingProblem, KernelKind, MethodKind, PriorKind,
};
use std::hint::black_box;

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    let default_threads = rayon::current_num_threads();
    vec![
        (
            "sequential",
            rayon::ThreadPoolBuilder::new()
                .num_threads(1)
                .build()
                .unwrap(),
        ),
        (
            "parallel",
            rayon::ThreadPoolBuilder::new()
                .num_threads(default_threads)
                .build()
                .unwrap(),
        ),
    ]
}

fn bench(c: &mut Criterion) {
    let n = 600;
    let (x, _) = gaussian_blobs(&[200, 200, 200], 10, 4.0, 1);
    let z = standard_normal(n, 2, 2);
    let input = input_affinity(&x, MethodKind::Tsne, 30.0).unwrap();
    let prob = CouplingProblem::new(
        MethodKind::Tsne,
        input.affinity.clone(),
        KernelKind::Student,
    )
    .unwrap()
    .classic_scale()
    .unwrap();
    let small = standard_normal(200, 5, 3);
    let small_kernel = kernel_matrix(&small, KernelKind::Gaussian, None).unwrap();
    let cfg = CcpcaConfig {
        samples: 50,
        prior: PriorKind::D,
        q: 2,
        seed: 0,
    };

    for (label, pool) in pools() {
        let mut g = c.benchmark_group("tsne_loss_grad");
        g.bench_function(BenchmarkId::from_parameter(label), |b| {
            b.iter(|| pool.install(|| prob.loss_grad(black_box(&z), 1.0).unwrap()))
        });
        g.finish();

        let mut g = c.benchmark_group("gaussian_kernel");
        g.bench_function(BenchmarkId::from_parameter(label), |b| {
            b.iter(|| {
                pool.install(|| kernel_matrix(black_box(&x), KernelKind::Gaussian, None).unwrap())
            })
        });
        g.finish();

        let mut g = c.benchmark_group("kary_agreement");
        g.bench_function(BenchmarkId::from_parameter(label), |b| {
            b.iter(|| pool.install(|| kary_agreement(black_box(&x), &z, n / 4).unwrap()))
        });
        g.finish();

        let mut g = c.benchmark_group("ccpca");
        g.sample_size(10);
        g.bench_function(BenchmarkId::from_parameter(label), |b| {
            b.iter(|| pool.install(|| ccpca(black_box(&small), &small_kernel, &cfg).unwrap()))
        });
        g.finish();
    }
}

criterion_group!(benches, bench);
criterion_main!(benches);
