use criterion::{black_box, criterion_group, criterion_main, Criterion};
use seqsr_core::orb::extract_orb;
use seqsr_core::raster;
use seqsr_core::similarity::cross_check_match;
use seqsr_core::{synthetic, FrameId, OrbConfig};

fn bench_features(c: &mut Criterion) {
    let poses = synthetic::uniform_ring(8, 4.0);
    let a = synthetic::render_view(&poses[0], 200, 200);
    let b = synthetic::render_view(&poses[1], 200, 200);
    let cfg = OrbConfig::default();

    c.bench_function("extract_orb 200x200", |bench| {
        bench.iter(|| extract_orb(FrameId(0), black_box(&a), &cfg))
    });

    let da = extract_orb(FrameId(0), &a, &cfg);
    let db = extract_orb(FrameId(1), &b, &cfg);
    c.bench_function("cross_check_match", |bench| {
        bench.iter(|| cross_check_match(black_box(&da.descriptors), black_box(&db.descriptors)))
    });

    c.bench_function("bicubic x4 200x200", |bench| {
        bench.iter(|| raster::upscale(black_box(&a), 4).unwrap())
    });
}

criterion_group!(benches, bench_features);
criterion_main!(benches);
