use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use num_complex::Complex64;
use scma_d2d_bench::fixture;
use scma_d2d_core::{allocate, allocator_solver_settings, expand_denominator, hermitian_eigenvalues, solve, CMatrix};

fn eigen(c: &mut Criterion) {
    let mut g = c.benchmark_group("hermitian_eigenvalues");
    for n in [4usize, 8, 16] {
        let a = CMatrix::from_fn(n, n, |i, j| Complex64::new(((i * 7 + j * 3) % 11) as f64 - 5.0, ((i * 5 + j) % 7) as f64 - 3.0));
        let q = a.adjoint().matmul(&a).unwrap();
        g.bench_function(format!("n{n}"), |b| b.iter(|| hermitian_eigenvalues(std::hint::black_box(&q)).unwrap()));
    }
    g.finish();
}

fn condensation(c: &mut Criterion) {
    for pairs in [1usize, 2] {
        let f = fixture(pairs, 2);
        let den = expand_denominator(&f.problem).unwrap();
        c.bench_function(&format!("expand_denominator/jd{pairs}"), |b| b.iter(|| expand_denominator(&f.problem).unwrap()));
        c.bench_function(&format!("condense/jd{pairs}"), |b| b.iter(|| den.condense(std::hint::black_box(&f.point)).unwrap()));
    }
}

fn gp_solve(c: &mut Criterion) {
    let s = allocator_solver_settings();
    for pairs in [1usize, 2] {
        let f = fixture(pairs, 2);
        let den = expand_denominator(&f.problem).unwrap();
        let y0: Vec<f64> = f.point.iter().map(|x| x.ln()).collect();
        c.bench_function(&format!("gp_solve/jd{pairs}"), |b| {
            b.iter_batched(|| f.problem.surrogate(&den, &f.point).unwrap(), |p| solve(&p, &y0, &s).unwrap(), BatchSize::SmallInput)
        });
    }
}

fn allocation(c: &mut Criterion) {
    let s = allocator_solver_settings();
    let mut g = c.benchmark_group("allocate");
    g.sample_size(10);
    for pairs in [1usize, 2] {
        let f = fixture(pairs, 2);
        g.bench_function(format!("jd{pairs}"), |b| b.iter(|| allocate(&f.cfg, &f.channel, &f.graph, &f.occupancy, 10, &s).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, eigen, condensation, gp_solve, allocation);
criterion_main!(benches);
