use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dualirs::benchmarks::{decoupled_estimate, DecoupledPilots};
use dualirs::estimators::{build_b, ls_phase1, ls_phase2_case2, ls_phase3_case1};
use dualirs::linalg::vec_of;
use dualirs::random::{cn_matrix, random_phases, rng_from_seed};
use dualirs::training_design::{
    build_xi, dft, phase1_design, phase2_certified_case2, Phase2Schedule,
};
use dualirs::{simulate_proposed, Case2Mode, PipelineOptions, ReferenceCsi};
use dualirs_bench::{desk, fixture, full};

fn phase_solvers(c: &mut Criterion) {
    let mut rng = rng_from_seed(1);
    let mut g = c.benchmark_group("phase_ls");

    for (n, m) in [(8, 8), (45, 20)] {
        let p1 = phase1_design(m, m, m + 1).unwrap();
        let z = cn_matrix(&mut rng, n, m + 1, 1.0);
        g.bench_with_input(BenchmarkId::new("phase1", n), &(z, p1), |b, (z, p1)| {
            b.iter(|| ls_phase1(black_box(z), &p1.theta_bar2).unwrap())
        });
    }

    let f = fixture(4, 8, 1);
    let i2 = 26;
    let (sched, _) =
        phase2_certified_case2(&f.truth.q_bar, 8, i2, Case2Mode::Random, 3, 32).unwrap();
    let Phase2Schedule::Case2 { theta1, theta2, .. } = &sched else {
        unreachable!()
    };
    let xi = build_xi(&f.truth.q_bar, theta1, theta2).unwrap();
    let z = vec_of(&cn_matrix(&mut rng, 4, i2, 1.0));
    g.bench_function("phase2_case2_build_xi", |b| {
        b.iter(|| build_xi(black_box(&f.truth.q_bar), theta1, theta2).unwrap())
    });
    g.bench_function("phase2_case2_solve", |b| {
        b.iter(|| ls_phase2_case2(black_box(&z), &xi, 4, 8, 8).unwrap())
    });

    let f = full();
    let u = &f.truth.users[0];
    let bm = build_b(
        &u.q,
        &u.r,
        &u.r_tilde,
        &random_phases(&mut rng, 20),
        &random_phases(&mut rng, 20),
    )
    .unwrap();
    let x = dft(9).unwrap().rows(0, 9).into_owned();
    let z = cn_matrix(&mut rng, 45, 9, 1.0);
    g.bench_function("phase3_case1_full", |b| {
        b.iter(|| ls_phase3_case1(black_box(&z), &bm, &x).unwrap())
    });
    g.finish();
}

fn end_to_end(c: &mut Criterion) {
    let mut g = c.benchmark_group("pipeline");
    g.sample_size(20);
    for (name, f) in [
        ("desk", desk()),
        ("small_n", fixture(4, 8, 3)),
        ("full", full()),
    ] {
        let sigma2 = 1e-2;
        g.bench_function(BenchmarkId::new("proposed", name), |b| {
            b.iter(|| {
                simulate_proposed(&f.real, &f.truth, &PipelineOptions::default(), sigma2, 7)
                    .unwrap()
            })
        });
        let pilots = DecoupledPilots::minimum(f.config.n, f.config.m1, f.config.m2, f.config.k);
        g.bench_function(BenchmarkId::new("decoupled", name), |b| {
            b.iter(|| {
                decoupled_estimate(
                    &f.real,
                    &f.truth,
                    &pilots,
                    ReferenceCsi::Estimated,
                    sigma2,
                    7,
                )
                .unwrap()
            })
        });
    }
    g.finish();
}

criterion_group!(benches, phase_solvers, end_to_end);
criterion_main!(benches);
