use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use llmprior::bayes::{log_posterior, LinearModelSpec, NoiseModel, Observations};
use llmprior::datasets::TaskKind;
use llmprior::elicitation::{build_mixture, ElicitedPriorTable};
use llmprior::icl::Kde;
use llmprior::memorisation::levenshtein;
use llmprior::sampler::LogDensity;
use llmprior::seed;
use llmprior::selection::energy;
use rand::Rng;

fn uniform_rows(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = seed::rng(seed);
    (0..n).map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect()).collect()
}

fn bench_energy(c: &mut Criterion) {
    let mut group = c.benchmark_group("energy");
    group.sample_size(20);
    for n in [250, 1000, 4000] {
        let x = uniform_rows(n, 4, 1);
        let y = uniform_rows(n, 4, 2);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| b.iter(|| energy(&x, &y).unwrap()));
    }
    group.finish();
}

fn bench_log_posterior(c: &mut Criterion) {
    let d = 10;
    let names: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
    let table = ElicitedPriorTable::mixture_of_uninformative("bench", names, 100, 3).unwrap();
    let spec = LinearModelSpec::new(TaskKind::Regression, build_mixture(&table).unwrap())
        .unwrap()
        .with_noise(NoiseModel::default())
        .unwrap();
    let rows = uniform_rows(100, d, 4);
    let y: Vec<f64> = rows.iter().map(|r| r.iter().sum()).collect();
    let data = Observations::new(&rows, y, d).unwrap();
    let theta = vec![0.1; spec.param_dim()];
    c.bench_function("log_posterior_grad_k100_d10_n100", |b| b.iter(|| log_posterior(&spec, &theta, &data).unwrap()));
}

fn bench_kde(c: &mut Criterion) {
    let kde = Kde::fit(&uniform_rows(500, 4, 5), 0.25).unwrap();
    let x = [0.3, -0.2, 1.0, 0.5];
    let mut grad = [0.0; 4];
    c.bench_function("kde_log_density_grad_500x4", |b| b.iter(|| kde.log_density_grad(&x, &mut grad)));
}

fn bench_levenshtein(c: &mut Criterion) {
    let mut rng = seed::rng(6);
    let mut text = |n: usize| -> String { (0..n).map(|_| rng.random_range(b'0'..=b'9') as char).collect() };
    let (a, b) = (text(500), text(500));
    c.bench_function("levenshtein_500", |bench| bench.iter(|| levenshtein(&a, &b)));
}

criterion_group!(kernels, bench_energy, bench_log_posterior, bench_kde, bench_levenshtein);
criterion_main!(kernels);
