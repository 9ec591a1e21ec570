use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use seqsr_core::ordering::{greedy_order, multi_threshold_plan};
use seqsr_core::similarity::{FrameFeatures, ScoreMatrix};
use seqsr_core::{synthetic, FrameId, MeasureKind, OrderingConfig};

fn matrix(n: usize) -> ScoreMatrix {
    let features = FrameFeatures::from_poses(synthetic::seeded_random_rig(7, n));
    ScoreMatrix::compute(&features, MeasureKind::PoseAngleToOrigin).unwrap()
}

fn bench_greedy(c: &mut Criterion) {
    let mut group = c.benchmark_group("greedy_order");
    for n in [100, 300] {
        let m = matrix(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &m, |b, m| {
            b.iter(|| greedy_order(black_box(m), None, FrameId(0)))
        });
    }
    group.finish();
}

fn bench_plan(c: &mut Criterion) {
    let cfg = OrderingConfig {
        select_measure: MeasureKind::PoseAngleToOrigin,
        ..OrderingConfig::object_centric()
    };
    let mut group = c.benchmark_group("multi_threshold_plan");
    group.sample_size(10);
    for n in [100, 200] {
        let m = matrix(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &m, |b, m| {
            b.iter(|| multi_threshold_plan(black_box(m), m, &cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_greedy, bench_plan);
criterion_main!(benches);
