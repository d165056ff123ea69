use criterion::{criterion_group, criterion_main, Criterion};
use vanet_core::{run_scenario, ProtocolKind, ScenarioConfig};

fn short_runs(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_20s_25_nodes");
    group.sample_size(10);
    for kind in ProtocolKind::ALL {
        let mut cfg = ScenarioConfig::default();
        cfg.scenario.duration = 20.0;
        cfg.scenario.nodes = 25;
        cfg.protocol.name = kind;
        group.bench_function(kind.label(), |b| b.iter(|| run_scenario(&cfg, None).unwrap().row));
    }
    group.finish();
}

criterion_group!(benches, short_runs);
criterion_main!(benches);
