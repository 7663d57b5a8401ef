//! Rayon pool versus a single-thread pool on the two data-parallel hot paths:
//! quartet extraction over a corpus and a batched encoder forward pass.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qser::corpus::{synth_items, SyntheticSpec};
use qser::dsp::{extract_quartet, StftConfig};
use qser::par;
use qser::train::{features_from_items, init_model, TrainConfig};

fn spec(per_class: usize) -> SyntheticSpec {
    let mut spec = SyntheticSpec::default_corpus();
    for c in spec.classes.iter_mut() {
        c.count = per_class;
    }
    spec
}

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    vec![
        ("sequential", rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap()),
        ("parallel", rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap()),
    ]
}

fn extraction(c: &mut Criterion) {
    let items = synth_items(&spec(4)).unwrap();
    let cfg = StftConfig::default();
    let mut group = c.benchmark_group("extract_quartet");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| par::map(&items, |it| extract_quartet(&it.waveform, &cfg).unwrap())))
        });
    }
    group.finish();
}

fn encoder(c: &mut Criterion) {
    let cfg = TrainConfig::compact();
    let items = synth_items(&spec(2)).unwrap();
    let features = features_from_items(&items, &cfg).unwrap();
    let all: Vec<usize> = (0..features.len()).collect();
    let norm = features.fit_normalizer(&all).unwrap();
    let samples = features.samples(&all, &norm, &cfg).unwrap();
    let batch: Vec<_> = samples.iter().collect();
    let model = init_model(&cfg, norm.latent_dim(), features.label_names.len()).unwrap();
    let mut group = c.benchmark_group("utterance_vectors");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| model.utterance_vectors(&batch).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, extraction, encoder);
criterion_main!(benches);
