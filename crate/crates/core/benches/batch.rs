use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gfm_core::harness::{run_batch, run_batch_sequential, ScenarioConfig};

fn configs(n: usize) -> Vec<ScenarioConfig> {
    let base = ScenarioConfig::bundled("fig4").expect("bundled scenario");
    (0..n)
        .map(|k| {
            let mut cfg = base.with_override("faultmode.damping_x", k as f64 * 0.25).expect("valid override");
            cfg.duration = 0.8;
            cfg.decimation = 10;
            cfg
        })
        .collect()
}

fn batch(c: &mut Criterion) {
    let mut group = c.benchmark_group("batch");
    group.sample_size(10);
    for n in [4, 16] {
        let cfgs = configs(n);
        group.bench_with_input(BenchmarkId::new("parallel", n), &cfgs, |b, cfgs| b.iter(|| run_batch(cfgs)));
        group.bench_with_input(BenchmarkId::new("sequential", n), &cfgs, |b, cfgs| {
            b.iter(|| run_batch_sequential(cfgs))
        });
    }
    group.finish();
}

criterion_group!(benches, batch);
criterion_main!(benches);
