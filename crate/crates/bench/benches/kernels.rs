use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use redlesion_bench::Fixture;
use redlesion_core::candidates::{corrected_green, detect_candidates, directional_closing, select_threshold};
use redlesion_core::cnn::CnnModel;
use redlesion_core::features::{derive_images, hcf_vectors, FeatureParams};
use redlesion_core::forest::train_forest;
use redlesion_core::patches::PATCH_LEN;
use redlesion_core::{CandidateParams, ForestConfig, GrayImage, ScoreMap};

fn candidates(c: &mut Criterion) {
    let fx = Fixture::new(256, 1);
    let green = corrected_green(&fx.image, &fx.fov).unwrap();
    c.bench_function("directional_closing_l15", |b| b.iter(|| directional_closing(black_box(&green), 15, 30.0)));

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let noise = GrayImage::from_fn(256, 256, |_, _| rng.random::<f64>() * 0.1);
    let score = ScoreMap::new(noise).unwrap();
    c.bench_function("select_threshold", |b| b.iter(|| select_threshold(black_box(&score), 120, 0.002, None, None)));

    let params = CandidateParams::default();
    c.bench_function("detect_candidates_256", |b| b.iter(|| detect_candidates(&fx.image, &fx.fov, &params).unwrap()));
}

fn cnn(c: &mut Criterion) {
    let model = CnnModel::initialize(3, 1e-4, 1e-2);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let inputs: Vec<Vec<f64>> = (0..8).map(|_| (0..PATCH_LEN).map(|_| rng.random::<f64>() - 0.5).collect()).collect();
    let labels = [0u8, 1, 0, 0, 1, 0, 0, 0];
    c.bench_function("cnn_forward", |b| b.iter(|| model.forward(black_box(&inputs[0])).unwrap()));
    c.bench_function("cnn_backward_batch8", |b| b.iter(|| model.backward(&inputs, &labels, 0.5, 5e-4, None).unwrap()));
}

fn features(c: &mut Criterion) {
    let fx = Fixture::new(256, 5);
    let params = FeatureParams::default();
    c.bench_function("derive_images_256", |b| {
        b.iter(|| derive_images(&fx.image, &fx.fov, Some(&fx.vessels), &params).unwrap())
    });
    let bundle = derive_images(&fx.image, &fx.fov, Some(&fx.vessels), &params).unwrap();
    c.bench_function("hcf_vectors", |b| b.iter(|| hcf_vectors(&fx.candidates.candidates, &bundle, &params).unwrap()));
}

fn forest(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x: Vec<Vec<f64>> = (0..1000).map(|_| (0..191).map(|_| rng.random::<f64>()).collect()).collect();
    let y: Vec<u8> = x.iter().map(|r| u8::from(r[0] + r[1] > 1.0)).collect();
    let cfg = ForestConfig { trees: 100, grid: Vec::new(), ..ForestConfig::default() };
    let f = train_forest(&x, &y, &cfg).unwrap();
    c.bench_function("forest_predict_1000x191", |b| b.iter(|| f.predict_proba_all(black_box(&x)).unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = candidates, cnn, features, forest
}
criterion_main!(benches);
