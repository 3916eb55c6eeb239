use criterion::{black_box, criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sqa_bench::bench_model;
use sqa_core::featio::{synth_features, Anchors};
use sqa_core::metrics::{ff1, wer};
use sqa_core::model::{backward, forward};
use sqa_core::quantizer::{encode, train_codebook};
use sqa_core::units::{expand, merge_repeats, TimeSpan};

fn bench_codec(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let frames: Vec<u32> = (0..50_000).map(|_| rng.gen_range(0..64)).collect();
    c.bench_function("codec/merge_expand_50k", |b| {
        b.iter(|| {
            let merged = merge_repeats(black_box(&frames), 0.02);
            black_box(expand(&merged))
        })
    });
}

fn bench_kmeans(c: &mut Criterion) {
    let anchors = Anchors::random(16, 12, 0.4, 3).unwrap();
    let units: Vec<u32> = (0..8_000).map(|i| (i % 16) as u32).collect();
    let m = synth_features(&units, &anchors, 0.05, 5).unwrap();
    c.bench_function("kmeans/train_k16_8k_frames", |b| {
        b.iter(|| train_codebook(black_box(std::slice::from_ref(&m)), 16, 25, 1e-6, 7).unwrap())
    });
    let cb = train_codebook(&[m.clone()], 16, 25, 1e-6, 7).unwrap();
    c.bench_function("kmeans/encode_8k_frames", |b| {
        b.iter(|| encode(black_box(&cb), black_box(&m)).unwrap())
    });
}

fn bench_model_passes(c: &mut Criterion) {
    let (params, input) = bench_model();
    c.bench_function("model/forward_seq69", |b| {
        b.iter(|| forward(black_box(&params), black_box(&input)).unwrap())
    });
    c.bench_function("model/backward_seq69", |b| {
        b.iter(|| backward(black_box(&params), black_box(&input)).unwrap())
    });
}

fn bench_metrics(c: &mut Criterion) {
    let pred = TimeSpan::new(1.0, 3.1).unwrap();
    let gold = TimeSpan::new(1.4, 3.6).unwrap();
    c.bench_function("metrics/ff1", |b| {
        b.iter(|| ff1(black_box(&pred), black_box(&gold), 0.02))
    });
    let r: Vec<String> = (0..40).map(|i| format!("w{}", i % 11)).collect();
    let h: Vec<String> = (0..42).map(|i| format!("w{}", (i + 3) % 13)).collect();
    c.bench_function("metrics/wer_40_words", |b| {
        b.iter(|| wer(black_box(&r), black_box(&h)).unwrap())
    });
}

criterion_group!(
    name = benches;
    config = Criterion::default().sample_size(12);
    targets = bench_codec, bench_kmeans, bench_model_passes, bench_metrics
);
criterion_main!(benches);
