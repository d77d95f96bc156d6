use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ris_mac_core::dcf::{contention_cascade, solve_tau};
use ris_mac_core::optimizer::{allocate_power, hungarian_max};
use ris_mac_core::scenario::DcfParams;

fn dcf(c: &mut Criterion) {
    c.bench_function("solve_tau v=1..64", |b| {
        b.iter(|| {
            for v in 1..=64 {
                black_box(solve_tau(black_box(v), 15, 6).unwrap());
            }
        })
    });
    let d = DcfParams::default();
    c.bench_function("cascade y=100 c=2", |b| b.iter(|| contention_cascade(black_box(100), 2, &d).unwrap()));
}

fn solvers(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let w: Vec<Vec<f64>> = (0..100).map(|_| (0..100).map(|_| rng.random::<f64>()).collect()).collect();
    c.bench_function("hungarian 100x100", |b| b.iter(|| hungarian_max(black_box(&w)).unwrap()));
    let a: Vec<f64> = (0..100).map(|_| 10f64.powf(rng.random_range(0.0..3.0))).collect();
    c.bench_function("water-filling 100 users", |b| b.iter(|| allocate_power(black_box(&a), 1.0, 0.1).unwrap()));
}

criterion_group!(benches, dcf, solvers);
criterion_main!(benches);
