use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use illumgap::datasets::{build_fsid_with, compute_normalization, DatasetKind, DatasetSpec};
use illumgap::par::Exec;
use illumgap::tinynet::{Architecture, Model};

const MODES: [(&str, Exec); 2] = [("parallel", Exec::Parallel), ("sequential", Exec::Sequential)];

fn dataset_build(c: &mut Criterion) {
    let spec = DatasetSpec::new(DatasetKind::Fsid, 2, 0);
    let mut group = c.benchmark_group("build_fsid_300");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| black_box(build_fsid_with(&spec, exec).unwrap()))
        });
    }
    group.finish();
}

fn gradient(c: &mut Criterion) {
    let ds = build_fsid_with(&DatasetSpec::new(DatasetKind::Fsid, 1, 1), Exec::Parallel).unwrap();
    let batch = &ds.samples[..64];
    let norm = compute_normalization(batch.iter().map(|s| &s.image)).unwrap();
    let model = Model::<f32>::new(Architecture::TinyCnn, 32, norm, 0).unwrap();
    let inputs: Vec<Vec<f32>> = batch.iter().map(|s| model.prepare(&s.image).unwrap()).collect();
    let refs: Vec<&[f32]> = inputs.iter().map(Vec::as_slice).collect();
    let labels: Vec<u8> = batch.iter().map(|s| s.label).collect();
    let mut group = c.benchmark_group("grad_batch64");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| black_box(model.loss_and_grad_prepared(&refs, &labels, exec)))
        });
    }
    group.finish();
}

criterion_group!(benches, dataset_build, gradient);
criterion_main!(benches);
