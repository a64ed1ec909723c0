use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ratcons::engine::{enumerate_executions, EnumOptions, InputDistribution};
use ratcons::game::{find_profitable_deviations, make_preference_utility, StrategySpace};
use ratcons::net::{build_topology, AgentId, TopologyKind};
use ratcons::parallel::Execution;
use ratcons::protocols::{make_algorithm1, make_xor_consensus};

fn modes() -> [(&'static str, Execution); 2] {
    [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)]
}

fn enumeration(c: &mut Criterion) {
    let p = make_xor_consensus(&build_topology(TopologyKind::Ring, 5).unwrap()).unwrap();
    let uni = InputDistribution::uniform(2);
    let mut g = c.benchmark_group("enumerate xor ring5");
    for (name, mode) in modes() {
        let opts = EnumOptions {
            mode,
            ..EnumOptions::default()
        };
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| enumerate_executions(&p, &uni, opts).unwrap())
        });
    }
    g.finish();
}

fn search(c: &mut Criterion) {
    let p = make_algorithm1(&build_topology(TopologyKind::Complete, 4).unwrap()).unwrap();
    let uni = InputDistribution::uniform(2);
    let us = [make_preference_utility(0, 2), make_preference_utility(1, 2)];
    let coalition = [AgentId(2), AgentId(3)];
    let space = StrategySpace::misreports_only();
    let mut g = c.benchmark_group("misreport search algorithm1 complete4");
    g.sample_size(10);
    for (name, mode) in modes() {
        let opts = EnumOptions {
            mode,
            ..EnumOptions::default()
        };
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| find_profitable_deviations(&p, &coalition, &space, &us, &uni, opts).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, enumeration, search);
criterion_main!(benches);
