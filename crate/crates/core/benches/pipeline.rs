//! Batch entry points (which fan out across the thread pool when the
//! `parallel` feature is on) against hand-rolled sequential loops over the
//! single-item functions. Run with and without `--no-default-features` to
//! see what the pool buys on this machine:
//!
//! ```text
//! cargo bench -p bpr-core
//! cargo bench -p bpr-core --no-default-features
//! ```

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use bpr_core::extract::{extract_specs, ExtractionConfig};
use bpr_core::mask::Scene;
use bpr_core::pipeline::{matched_gt_indices, refine_corpus, refine_instance, refine_scene};
use bpr_core::refine::Refiner;
use bpr_core::synthgen::{generate_corpus, generate_scene, SynthConfig};
use bpr_core::edt::distance_to_set;

fn corpus(count: usize) -> Vec<Scene> {
    generate_corpus(&SynthConfig::default(), count).expect("default corpus generates")
}

fn bench_edt(c: &mut Criterion) {
    let scene = &corpus(1)[0];
    let mask = &scene.predictions[0].mask;
    let seeds: Vec<_> = bpr_core::mask::boundary_pixels(mask);
    c.bench_function("edt/256x256", |b| {
        b.iter(|| distance_to_set(256, 256, std::hint::black_box(&seeds)).unwrap())
    });
}

fn bench_extraction(c: &mut Criterion) {
    let scene = &corpus(1)[0];
    let config = ExtractionConfig::default();
    c.bench_function("extract/dense-nms", |b| {
        b.iter(|| {
            for pred in &scene.predictions {
                std::hint::black_box(extract_specs(&pred.mask, pred.id, &config).unwrap());
            }
        })
    });
}

fn bench_scene_refine(c: &mut Criterion) {
    let scene = corpus(1).remove(0);
    let config = ExtractionConfig::default();
    let refiner = Refiner::ColorModel(Default::default());
    let mut group = c.benchmark_group("scene-colormodel");
    group.sample_size(20);
    group.bench_function("batch", |b| {
        b.iter(|| refine_scene(std::hint::black_box(&scene), &config, &refiner).unwrap())
    });
    group.bench_function("sequential-loop", |b| {
        let gts = scene.ground_truth.as_deref().unwrap();
        let matched = matched_gt_indices(&scene).unwrap();
        b.iter(|| {
            for (i, pred) in scene.predictions.iter().enumerate() {
                let gt = matched[i].map(|g| &gts[g].mask);
                std::hint::black_box(
                    refine_instance(&scene, pred, gt, &config, &refiner).unwrap(),
                );
            }
        })
    });
    group.finish();
}

fn bench_corpus_refine(c: &mut Criterion) {
    let scenes = corpus(4);
    let config = ExtractionConfig::default();
    let refiner = Refiner::Identity;
    let mut group = c.benchmark_group("corpus-identity");
    group.sample_size(10);
    group.bench_function("batch", |b| {
        b.iter(|| refine_corpus(std::hint::black_box(&scenes), &config, &refiner).unwrap())
    });
    group.bench_function("sequential-loop", |b| {
        b.iter(|| {
            for scene in &scenes {
                std::hint::black_box(refine_scene(scene, &config, &refiner).unwrap());
            }
        })
    });
    group.finish();
}

fn bench_generation(c: &mut Criterion) {
    let cfg = SynthConfig::default();
    let mut group = c.benchmark_group("generate");
    group.sample_size(10);
    group.bench_function("corpus-of-4", |b| {
        b.iter_batched(
            || cfg.clone(),
            |cfg| generate_corpus(std::hint::black_box(&cfg), 4).unwrap(),
            BatchSize::SmallInput,
        )
    });
    group.bench_function("scene-loop-of-4", |b| {
        b.iter(|| {
            for i in 0..4 {
                std::hint::black_box(generate_scene(&cfg, i).unwrap());
            }
        })
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_edt,
    bench_extraction,
    bench_scene_refine,
    bench_corpus_refine,
    bench_generation
);
criterion_main!(benches);
