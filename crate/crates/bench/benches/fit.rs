use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use jointfx_bench::{k2_scm, k3_scm, suite};
use jointfx_core::estimator::{fit, FitConfig, Problem};
use jointfx_core::identify2::{identify, DEFAULT_GRID_POINTS};
use jointfx_core::simgen::build_semisynthetic_10;

fn bench_fit(c: &mut Criterion) {
    let scm = k3_scm(11, 0.65).unwrap();
    let config = FitConfig::default();
    let mut group = c.benchmark_group("fit_k3");
    group.sample_size(10);
    for n in [400, 1600, 6400] {
        let data = suite(&scm, n, 11);
        group.bench_with_input(BenchmarkId::from_parameter(n), &data, |b, d| {
            b.iter(|| fit(d, scm.graph(), &config).unwrap())
        });
    }
    group.finish();

    let net = build_semisynthetic_10(12, 0.65).unwrap();
    let data = suite(&net, 1600, 12);
    let mut group = c.benchmark_group("fit_network");
    group.sample_size(10);
    group.bench_function("1600", |b| b.iter(|| fit(&data, net.graph(), &config).unwrap()));
    group.finish();
}

fn bench_likelihood(c: &mut Criterion) {
    let scm = k3_scm(13, 0.65).unwrap();
    let data = suite(&scm, 1600, 13);
    let problem = Problem::new(scm.graph(), &data).unwrap();
    let theta = problem.per_equation_least_squares().unwrap();
    let covs = problem.sigma_closed_form(&theta, 0.0, 1e-9).unwrap();
    c.bench_function("log_likelihood_k3_1600", |b| b.iter(|| problem.log_likelihood(&theta, &covs).unwrap()));
    c.bench_function("gradient_k3_1600", |b| b.iter(|| problem.gradient(&theta, &covs).unwrap()));
}

fn bench_identify2(c: &mut Criterion) {
    let scm = k2_scm(14, 0.65).unwrap();
    let data = suite(&scm, 10_000, 14);
    c.bench_function("identify2_10000", |b| b.iter(|| identify(&data, DEFAULT_GRID_POINTS).unwrap()));
}

criterion_group!(benches, bench_fit, bench_likelihood, bench_identify2);
criterion_main!(benches);
