use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use maemi_core::analysis::{analyze, estimate_pitch, AnalysisWindows};
use maemi_core::{render_score, Score, VoiceConfig, E5_HZ};

fn analysis(c: &mut Criterion) {
    let audio = render_score(&Score::demo(E5_HZ), &VoiceConfig::default()).unwrap();
    let sr = audio.sample_rate as f64;
    let middle = audio.window(2.5, 3.95).to_vec();
    let mut group = c.benchmark_group("analysis");
    group.sample_size(20);
    group.bench_function("estimate_pitch", |b| b.iter(|| estimate_pitch(black_box(&middle), sr).unwrap()));
    group.bench_function("analyze_demo", |b| {
        b.iter(|| analyze(black_box(&audio.left), sr, AnalysisWindows::default()).unwrap())
    });
    group.finish();
}

criterion_group!(benches, analysis);
criterion_main!(benches);
