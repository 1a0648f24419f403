use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use semeq::harness::Setup;
use semeq::harness::{episode_seed, episode_start};
use semeq::mismatch::report;
use semeq::transport::{build_codebook, exact_emd, fit_affine_map_with, sinkhorn, transport_scale};
use semeq::{ChannelConfig, FitParams, QSource, Strategy};
use semeq_bench::{atom, language_pair, random_cloud};

fn transport(c: &mut Criterion) {
    let (s, t) = (random_cloud(1, 100), random_cloud(2, 100));
    let scale = transport_scale(&s, &t);
    for k in [0.1, 0.01] {
        c.bench_function(&format!("sinkhorn_100x100_eps{k}"), |b| {
            b.iter(|| sinkhorn(black_box(&s), black_box(&t), k * scale, 100_000).unwrap())
        });
    }
    c.bench_function("exact_emd_100x100", |b| {
        b.iter(|| exact_emd(black_box(&s), black_box(&t)).unwrap())
    });

    let (src, tgt) = language_pair(1, 2);
    let (a, z) = (atom(&src, 0), atom(&tgt, 0));
    c.bench_function("fit_affine_map_atom", |b| {
        b.iter(|| fit_affine_map_with(black_box(&a), black_box(&z), &FitParams::default()).unwrap())
    });
}

fn equalization(c: &mut Criterion) {
    let (src, tgt) = language_pair(1, 2);
    let mut group = c.benchmark_group("equalization");
    group.sample_size(10);
    group.bench_function("build_codebook", |b| {
        b.iter(|| build_codebook(black_box(&src), black_box(&tgt), &FitParams::default()).unwrap())
    });
    group.finish();
    c.bench_function("mismatch_report", |b| {
        b.iter(|| report(black_box(&src), black_box(&tgt), false).unwrap())
    });
}

fn episodes(c: &mut Criterion) {
    let (src, tgt) = language_pair(1, 2);
    let setup = Setup::new(src, tgt, None, QSource::Decoder, true).unwrap();
    let grid = *setup.grid();
    let channel = ChannelConfig::new(6.0).unwrap();
    c.bench_function("episodes_100_target_grounded_6db", |b| {
        b.iter(|| {
            (0..100u64)
                .map(|k| {
                    let start = episode_start(&grid, 0, k);
                    let seed = episode_seed(0, 0, k);
                    setup
                        .run_episode(
                            Strategy::TargetGrounded,
                            start,
                            &channel,
                            f64::INFINITY,
                            seed,
                        )
                        .unwrap()
                        .length
                })
                .sum::<u32>()
        })
    });
}

criterion_group!(benches, transport, equalization, episodes);
criterion_main!(benches);
