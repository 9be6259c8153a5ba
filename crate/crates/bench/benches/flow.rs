use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use vsn_core::assets::load_case_study;
use vsn_core::management::MessageRequest;
use vsn_core::network::SimClock;
use vsn_core::testkit::{join_network, join_part};

fn scenario_flow(c: &mut Criterion) {
    let case = load_case_study("rosas").unwrap();
    let clock = Arc::new(SimClock::new(0));
    let manager = case.manager(clock.clone()).unwrap();
    let scenario = case.scenario("happytours-tow").unwrap();
    manager.create_tenant(&scenario.tenant).unwrap();
    for file in &scenario.setup {
        let cfg = case.configuration(file).unwrap();
        manager.apply_configuration(&scenario.tenant, cfg, None).unwrap();
    }
    let next = AtomicUsize::new(0);
    c.bench_function("inject/happytours_tow", |b| {
        b.iter(|| {
            let instance = format!("case-{}", next.fetch_add(1, Ordering::Relaxed));
            clock.advance(86_400);
            for step in &scenario.steps {
                let req = MessageRequest { instance_id: instance.clone(), ..step.message.clone() };
                manager.inject(&scenario.tenant, req).unwrap();
            }
        })
    });
}

fn joins(c: &mut Criterion) {
    let mut group = c.benchmark_group("join");
    for k in [2, 4, 8] {
        let net = join_network(k, "V", Arc::new(SimClock::new(0)));
        let next = AtomicUsize::new(0);
        group.bench_function(BenchmarkId::from_parameter(k), |b| {
            b.iter(|| {
                let instance = format!("j{}", next.fetch_add(1, Ordering::Relaxed));
                (0..k).map(|i| net.inject(join_part("V", &instance, i)).unwrap()).last()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, scenario_flow, joins);
criterion_main!(benches);
