use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mfci_bench::{gradient_free, planted};
use mfci_core::baselines::{infer_sph, SphConfig};
use mfci_core::factorize::{fast_ica, truncated_svd, IcaConfig};
use mfci_core::hodge::{harmonic_projection, SolverConfig};
use mfci_core::mfci::{infer_mfci, InferenceConfig, ProjectionMode};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn projection(c: &mut Criterion) {
    let mut group = c.benchmark_group("harmonic_projection");
    for nodes in [20, 40] {
        let data = planted(nodes, 30, 64, 0);
        let h = gradient_free(&data);
        group.bench_with_input(BenchmarkId::from_parameter(nodes), &nodes, |b, _| {
            b.iter(|| harmonic_projection(&data.truth, black_box(&h), &SolverConfig::default()).unwrap())
        });
    }
    group.finish();
}

fn factorization(c: &mut Criterion) {
    let data = planted(40, 50, 64, 0);
    let h = gradient_free(&data);
    let mut group = c.benchmark_group("factorize");
    group.bench_function("svd_rank8", |b| b.iter(|| truncated_svd(black_box(&h), 8).unwrap()));
    group.bench_function("ica_rank8", |b| {
        b.iter(|| fast_ica(black_box(&h), 8, &IcaConfig::default()).unwrap())
    });
    group.finish();
}

fn inference(c: &mut Criterion) {
    let data = planted(20, 20, 64, 0);
    let graph = Arc::clone(data.graph());
    let mut group = c.benchmark_group("inference_k20");
    group.sample_size(10);
    for (name, projection) in [("8oo-1_approx", ProjectionMode::Approximate), ("8oo-1_exact", ProjectionMode::Exact)] {
        let cfg = InferenceConfig {
            projection,
            ..InferenceConfig::all_of(20, 8)
        };
        group.bench_function(name, |b| {
            b.iter(|| {
                let mut rng = ChaCha8Rng::seed_from_u64(0);
                infer_mfci(graph.clone(), &data.flows, &cfg, &mut rng).unwrap()
            })
        });
    }
    group.bench_function("1oo8_exact", |b| {
        let cfg = InferenceConfig::best_of(20, 1, 8);
        b.iter(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            infer_mfci(graph.clone(), &data.flows, &cfg, &mut rng).unwrap()
        })
    });
    group.bench_function("sph_c11", |b| {
        let cfg = SphConfig {
            total_cells: 20,
            candidates: 11,
            solver: SolverConfig::default(),
        };
        b.iter(|| infer_sph(graph.clone(), &data.flows, &cfg).unwrap())
    });
    group.finish();
}

criterion_group!(benches, projection, factorization, inference);
criterion_main!(benches);
