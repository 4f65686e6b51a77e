//! Benchmarks for the hot paths: system construction, exact iteration,
//! certificate synthesis/verification, and the termination decision.

use criterion::{criterion_group, criterion_main, Criterion};

use ppda_core::{
    decide_past, gen_family, kleene_lower, synth_lower, verify_past, ApproxConfig, DecideOutcome,
    Family, Method, Rational,
};

fn rat(num: i64, den: i64) -> Rational {
    Rational::new(num.into(), den.into())
}

fn bench_build_system(c: &mut Criterion) {
    let m = gen_family(&Family::Fig5(4)).unwrap();
    c.bench_function("fundamental_system fig5 n=4", |b| {
        b.iter(|| std::hint::black_box(m.fundamental_system()))
    });
}

fn bench_kleene(c: &mut Criterion) {
    let f = gen_family(&Family::Fig1).unwrap().fundamental_system();
    let red = f.reduce();
    let cfg = ApproxConfig {
        method: Method::Kleene,
        epsilon: rat(1, 1_000_000_000),
        max_iterations: 200,
        round_bits: 64,
    };
    c.bench_function("kleene_lower fig1 1e-9", |b| {
        b.iter(|| std::hint::black_box(kleene_lower(&red.residual, &cfg)))
    });
}

fn bench_synth(c: &mut Criterion) {
    let m = gen_family(&Family::Fig1).unwrap();
    let eps = rat(1, 1_000_000);
    c.bench_function("synth_lower fig1 1e-6", |b| {
        b.iter(|| std::hint::black_box(synth_lower(&m, &eps).unwrap()))
    });
}

fn bench_decide(c: &mut Criterion) {
    let m = gen_family(&Family::Fig1).unwrap();
    c.bench_function("decide_past fig1", |b| {
        b.iter(|| match decide_past(&m, 50) {
            DecideOutcome::Past(cert) => std::hint::black_box(cert),
            other => panic!("unexpected verdict {other:?}"),
        })
    });
}

fn bench_verify(c: &mut Criterion) {
    let m = gen_family(&Family::Fig1).unwrap();
    let DecideOutcome::Past(cert) = decide_past(&m, 50) else {
        panic!("expected a finite-runtime verdict");
    };
    c.bench_function("verify_past fig1", |b| {
        b.iter(|| {
            assert!(verify_past(&m, &cert).unwrap().is_accepted());
        })
    });
}

criterion_group!(
    benches,
    bench_build_system,
    bench_kleene,
    bench_synth,
    bench_decide,
    bench_verify
);
criterion_main!(benches);
