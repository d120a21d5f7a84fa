use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use homoglat_core::homogenization::corrector;
use homoglat_core::linearized::const_green;
use homoglat_core::{sample, solve, CoefficientLaw, EllipticOperator, ScalarField, SeedLineage, TorusLattice};

fn field(d: usize, n: usize) -> homoglat_core::CoefficientField {
    let lat = TorusLattice::new(d, n).unwrap();
    sample(&CoefficientLaw::default_experiment(), lat, &SeedLineage::new(1, 0, "bench")).unwrap()
}

fn operator_apply(c: &mut Criterion) {
    let mut group = c.benchmark_group("operator_apply");
    for (d, n) in [(2, 256), (2, 512), (3, 64)] {
        let a = field(d, n);
        let op = EllipticOperator::periodic(&a, 1.0 / 256.0).unwrap();
        let u = ScalarField::from_fn(*a.lattice(), |x| (x % 17) as f64);
        group.bench_with_input(BenchmarkId::from_parameter(format!("d{d}_n{n}")), &u, |b, u| {
            b.iter(|| op.apply(black_box(u)))
        });
    }
    group.finish();
}

fn cg_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("cg_solve");
    group.sample_size(10);
    for (d, n, t) in [(2, 128, 256.0), (3, 32, 64.0)] {
        let a = field(d, n);
        let op = EllipticOperator::periodic(&a, 1.0 / t).unwrap();
        let rhs = ScalarField::from_fn(*a.lattice(), |x| if x == 0 { 1.0 } else { 0.0 });
        group.bench_function(format!("green_d{d}_n{n}_t{t}"), |b| {
            b.iter(|| solve(&op, black_box(&rhs), 1e-10).unwrap())
        });
        group.bench_function(format!("corrector_d{d}_n{n}_t{t}"), |b| {
            b.iter(|| corrector(&a, t, &[1.0, 0.0, 0.0][..d], 1e-10).unwrap())
        });
    }
    group.finish();
}

fn fourier_green(c: &mut Criterion) {
    let mut group = c.benchmark_group("fourier_green");
    for (d, n) in [(2, 256), (2, 512), (3, 64)] {
        let lat = TorusLattice::new(d, n).unwrap();
        group.bench_function(format!("d{d}_n{n}"), |b| b.iter(|| const_green(black_box(lat), 256.0).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, operator_apply, cg_solve, fourier_green);
criterion_main!(benches);
