use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rectify_core::denoisers::gaussian_optimal_denoiser;
use rectify_core::harness::{execute, RunConfig};
use rectify_core::sampler::ddim_update;
use rectify_core::synth::{blob_prior, BlobScene};
use rectify_core::{omega_ramp, rectify, sample_gaussian, ConditionVector, Denoiser, Dims, NoiseSchedule, SeededRng};

fn kernels(c: &mut Criterion) {
    let dims = Dims::grid(16, 16);
    let mut rng = SeededRng::new(0);
    let n_pred = sample_gaussian(16, dims, &mut rng).unwrap();
    let n = sample_gaussian(16, dims, &mut rng).unwrap();
    let z = sample_gaussian(16, dims, &mut rng).unwrap();
    let omega = omega_ramp(16, 0.5).unwrap();
    let schedule = NoiseSchedule::default();

    c.bench_function("rectify 16x256", |b| b.iter(|| rectify(black_box(&n_pred), black_box(&n), &omega).unwrap()));
    c.bench_function("ddim_update 16x256", |b| {
        b.iter(|| ddim_update(black_box(&z), black_box(&n_pred), 500, Some(480), &schedule, 0.0, None).unwrap())
    });

    let prior = blob_prior(&BlobScene::default(), 16, 0.2).unwrap();
    let d = gaussian_optimal_denoiser(prior, schedule.clone()).unwrap();
    let cond = ConditionVector::none();
    c.bench_function("gaussian denoiser 16x256", |b| b.iter(|| d.predict(black_box(&z), &cond, 500).unwrap()));
}

fn end_to_end(c: &mut Criterion) {
    let mut config = RunConfig::default();
    config.denoiser.bias = 0.1;
    let mut g = c.benchmark_group("generate");
    g.sample_size(20);
    g.bench_function("default run (L=16, 16x16, K=50)", |b| b.iter(|| execute(black_box(&config)).unwrap()));
    g.finish();
}

criterion_group!(benches, kernels, end_to_end);
criterion_main!(benches);
