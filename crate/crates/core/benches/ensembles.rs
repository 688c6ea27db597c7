use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use parrep::exec::Exec;
use parrep::parrep::{parallel_step, ClockLedger, DephasingMethod, ParRepConfig};
use parrep::potential::{builtin_potential, interval_state_map, PotentialName};
use parrep::qsd::fleming_viot;
use parrep::rng::RngStream;
use parrep::sde::WalkerState;

const POLICIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn fleming_viot_step(c: &mut Criterion) {
    let pot = builtin_potential(PotentialName::Flat, &[], 1.0).unwrap();
    let map = interval_state_map(&[0.0, 1.0]).unwrap();
    let start = WalkerState::at(vec![0.5], &map);
    let rng = RngStream::new(1, 0);
    let mut group = c.benchmark_group("fleming_viot");
    group.sample_size(10);
    for (name, exec) in POLICIES {
        group.bench_with_input(BenchmarkId::new(name, 1000), &exec, |b, &exec| {
            b.iter(|| fleming_viot(&start, 1000, 0.05, 1e-4, &pot, &map, &rng, exec).unwrap())
        });
    }
    group.finish();
}

fn parallel_step_double_well(c: &mut Criterion) {
    let pot = builtin_potential(PotentialName::DoubleWell1d, &[1.0], 3.0).unwrap();
    let map = interval_state_map(&[-2.5, 0.0, 2.5]).unwrap();
    let positions = vec![vec![-1.0]; 16];
    let rng = RngStream::new(2, 0);
    let mut group = c.benchmark_group("parallel_step");
    group.sample_size(10);
    for (name, exec) in POLICIES {
        let mut cfg = ParRepConfig::new(16, 1e-3, 1.0, DephasingMethod::ExactQsd);
        cfg.exec = exec;
        group.bench_with_input(BenchmarkId::new(name, 16), &cfg, |b, cfg| {
            b.iter(|| {
                let mut ledger = ClockLedger::new(16);
                parallel_step(&positions, 0, cfg, &pot, &map, &rng, &mut ledger).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, fleming_viot_step, parallel_step_double_well);
criterion_main!(benches);
