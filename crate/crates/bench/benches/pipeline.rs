use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use scid::channel::Sounder;
use scid::{estimate, identify_oracle, pi_hat, sample_spreading, simulate_ensemble};
use scid_bench::fixture;

fn bench_sound(c: &mut Criterion) {
    let mut group = c.benchmark_group("sound");
    for (j, n) in [(2, 4), (5, 4), (7, 8)] {
        let (cover, sf, w) = fixture(j, n);
        let sounder = Sounder::new(sf.grid(), &cover, &w).unwrap();
        let real = sample_spreading(&sf, 3);
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("J{j}_n{n}")),
            &real,
            |b, real| b.iter(|| sounder.sound(real).unwrap()),
        );
    }
    group.finish();
}

fn bench_identify_oracle(c: &mut Criterion) {
    let mut group = c.benchmark_group("identify_oracle");
    for (j, n) in [(2, 4), (5, 4), (7, 8)] {
        let (_, sf, w) = fixture(j, n);
        group.bench_function(format!("J{j}_n{n}"), |b| {
            b.iter(|| identify_oracle(&sf, &w).unwrap())
        });
    }
    group.finish();
}

fn bench_pi_hat(c: &mut Criterion) {
    let mut group = c.benchmark_group("pi_hat");
    group.sample_size(20);
    for l in [100, 1000] {
        let (_, sf, w) = fixture(5, 4);
        let ens = simulate_ensemble(&sf, &w, l, 4).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(l), &ens, |b, ens| {
            b.iter(|| pi_hat(ens).unwrap())
        });
    }
    group.finish();
}

fn bench_estimate(c: &mut Criterion) {
    let (cover, sf, w) = fixture(5, 4);
    let ens = simulate_ensemble(&sf, &w, 500, 5).unwrap();
    c.bench_function("estimate_J5_n4_L500", |b| {
        b.iter(|| estimate(&ens, &w, &cover).unwrap())
    });
}

criterion_group!(
    benches,
    bench_sound,
    bench_identify_oracle,
    bench_pi_hat,
    bench_estimate
);
criterion_main!(benches);
