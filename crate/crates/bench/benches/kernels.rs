use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qka::kernel::build_kernel;
use qka::svm::solve_dual;
use qka::trainer::{subset_losses, SubsampleScheduler};
use qka::{QueryConvention, QueryLedger, SvmConfig};
use qka_bench::{grid_points, he_zz_kernel, synthetic_train};
use std::hint::black_box;

fn kernel_build(c: &mut Criterion) {
    let mut group = c.benchmark_group("kernel_build");
    for (n, m) in [(2, 96), (6, 32), (10, 16)] {
        let kernel = he_zz_kernel(n);
        let theta = vec![0.3; kernel.n_params()];
        let points = grid_points(m, n);
        group.bench_with_input(BenchmarkId::new(format!("{n}q"), m), &points, |b, pts| {
            b.iter(|| {
                let ledger = QueryLedger::new(QueryConvention::Pairs);
                build_kernel(black_box(pts), &theta, &kernel, &ledger).unwrap()
            })
        });
    }
    group.finish();
}

fn smo(c: &mut Criterion) {
    let mut group = c.benchmark_group("smo");
    let kernel = he_zz_kernel(2);
    for m in [16, 48, 96] {
        let data = synthetic_train(m);
        let theta = vec![0.5; kernel.n_params()];
        let k = build_kernel(
            &data.features,
            &theta,
            &kernel,
            &QueryLedger::new(QueryConvention::Pairs),
        )
        .unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(m), &k.values, |b, km| {
            b.iter(|| solve_dual(black_box(km), &data.labels, 1.0, 1e-9).unwrap())
        });
    }
    group.finish();
}

fn subsampled_loss_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("loss_step");
    let data = synthetic_train(96);
    let kernel = he_zz_kernel(2);
    let svm = SvmConfig::default();
    let theta = vec![0.5; kernel.n_params()];
    for (k, s) in [(16, 1), (16, 4), (32, 1), (96, 1)] {
        let mut sched = SubsampleScheduler::new(data.len(), k, 7).unwrap();
        let subsets: Vec<Vec<usize>> = (0..s)
            .map(|_| sched.next_subset_with_both_classes(&data.labels).unwrap())
            .collect();
        group.bench_function(format!("k{k}-s{s}"), |b| {
            b.iter(|| {
                let ledger = QueryLedger::new(QueryConvention::Pairs);
                subset_losses(&theta, &data, &subsets, &kernel, &svm, &ledger, 0).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, kernel_build, smo, subsampled_loss_step);
criterion_main!(benches);
