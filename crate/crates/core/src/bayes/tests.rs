use nalgebra::{DMatrix, DVector};
use proptest::prelude::{proptest, prop_assert};
use rand::Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::elicitation::{build_mixture, ElicitedPriorTable, GaussianComponent};

fn names(d: usize) -> Vec<String> {
    (0..d).map(|j| format!("feature {j}")).collect()
}

fn gaussian_prior(means: &[f64], sds: &[f64]) -> MixturePrior {
    let row = means.iter().zip(sds).map(|(&mean, &std)| GaussianComponent { mean, std }).collect();
    build_mixture(&ElicitedPriorTable::constant("t", names(means.len()), row, 1).unwrap()).unwrap()
}

fn random_data(rng: &mut ChaCha8Rng, n: usize, d: usize, kind: TaskKind) -> Observations {
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect()).collect();
    let y = rows
        .iter()
        .map(|r| {
            let eta: f64 = r.iter().sum::<f64>() * 0.7 + 0.2;
            match kind {
                TaskKind::Regression => eta + 0.3 * rng.sample::<f64, _>(StandardNormal),
                TaskKind::Classification => (rng.random::<f64>() < sigmoid(eta)) as u8 as f64,
            }
        })
        .collect();
    Observations::new(&rows, y, d).unwrap()
}

/// Closed-form Gaussian posterior with the bias as an extra unit column.
fn conjugate(means: &[f64], sds: &[f64], data: &Observations, noise_sd: f64) -> (Vec<f64>, Vec<f64>) {
    let k = means.len() + 1;
    let mut precision = DMatrix::<f64>::zeros(k, k);
    let mut rhs = DVector::<f64>::zeros(k);
    let prior_m: Vec<f64> = means.iter().copied().chain([0.0]).collect();
    let prior_s: Vec<f64> = sds.iter().copied().chain([1.0]).collect();
    for j in 0..k {
        precision[(j, j)] = 1.0 / prior_s[j].powi(2);
        rhs[j] = prior_m[j] / prior_s[j].powi(2);
    }
    let inv_var = 1.0 / (noise_sd * noise_sd);
    for i in 0..data.len() {
        let x: Vec<f64> = data.row(i).iter().copied().chain([1.0]).collect();
        for a in 0..k {
            rhs[a] += inv_var * x[a] * data.targets()[i];
            for b in 0..k {
                precision[(a, b)] += inv_var * x[a] * x[b];
            }
        }
    }
    let cov = precision.try_inverse().unwrap();
    let mean = &cov * rhs;
    (mean.iter().copied().collect(), (0..k).map(|j| cov[(j, j)]).collect())
}

#[test]
fn empty_data_leaves_the_prior() {
    let prior = gaussian_prior(&[1.0, -2.0], &[0.5, 2.0]);
    let theta = [0.3, 0.1, -0.4];
    let spec = LinearModelSpec::new(TaskKind::Classification, prior.clone()).unwrap();
    let (v, _) = log_posterior(&spec, &theta, &Observations::empty(2)).unwrap();
    assert!((v - prior.log_density(&theta).unwrap()).abs() < 1e-12);

    let spec = LinearModelSpec::new(TaskKind::Regression, prior.clone()).unwrap();
    let s: f64 = 0.2;
    let (v, _) = log_posterior(&spec, &[0.3, 0.1, -0.4, s], &Observations::empty(2)).unwrap();
    let half_cauchy = (2.0 / std::f64::consts::PI / (1.0 + s.exp().powi(2))).ln();
    assert!((v - prior.log_density(&theta).unwrap() - half_cauchy - s).abs() < 1e-12);
}

#[test]
fn logistic_at_zero_is_log_half_per_point() {
    let prior = MixturePrior::standard_normal(2);
    let spec = LinearModelSpec::new(TaskKind::Classification, prior.clone()).unwrap();
    let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, -(i as f64)]).collect();
    let y = (0..10).map(|i| (i % 2) as f64).collect();
    let data = Observations::new(&rows, y, 2).unwrap();
    let (v, _) = log_posterior(&spec, &[0.0; 3], &data).unwrap();
    let lik = v - prior.log_density(&[0.0; 3]).unwrap();
    assert!((lik - 10.0 * 0.5f64.ln()).abs() < 1e-12);
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = seed::rng(21);
    let mut checked = 0;
    for case in 0..50 {
        let d = 1 + case % 4;
        let kind = if case % 2 == 0 { TaskKind::Regression } else { TaskKind::Classification };
        let rows: Vec<Vec<(f64, f64)>> = (0..3)
            .map(|_| (0..d).map(|_| (rng.random_range(-2.0..2.0), rng.random_range(0.3..2.0))).collect())
            .collect();
        let table = ElicitedPriorTable::new(
            "t",
            names(d),
            vec![],
            rows.into_iter().map(|r| r.into_iter().map(|(mean, std)| GaussianComponent { mean, std }).collect()).collect(),
        )
        .unwrap();
        let mut spec = LinearModelSpec::new(kind, build_mixture(&table).unwrap()).unwrap();
        if case % 6 == 4 {
            spec = spec.with_noise(NoiseModel::Known { sd: 0.7 }).unwrap();
        }
        let data = random_data(&mut rng, 1 + case % 7, d, kind);
        let theta: Vec<f64> = (0..spec.param_dim()).map(|_| rng.random_range(-1.5..1.5)).collect();
        let (_, g) = log_posterior(&spec, &theta, &data).unwrap();
        for j in 0..theta.len() {
            let h = 1e-5;
            let mut up = theta.clone();
            let mut dn = theta.clone();
            up[j] += h;
            dn[j] -= h;
            let fd = (log_posterior(&spec, &up, &data).unwrap().0 - log_posterior(&spec, &dn, &data).unwrap().0) / (2.0 * h);
            let rel = (fd - g[j]).abs() / g[j].abs().max(1.0);
            assert!(rel < 1e-5, "case {case} coord {j}: fd {fd} vs {}", g[j]);
            checked += 1;
        }
    }
    assert!(checked > 100);
}

#[test]
fn non_finite_values_name_a_coordinate() {
    let spec = LinearModelSpec::new(TaskKind::Regression, MixturePrior::standard_normal(1)).unwrap();
    let data = Observations::new(&[vec![1.0]], vec![3.0], 1).unwrap();
    let err = log_posterior(&spec, &[0.0, 0.0, -800.0], &data).unwrap_err();
    assert!(matches!(err, Error::Numeric { .. }), "{err}");
    assert!(matches!(log_posterior(&spec, &[0.0], &data), Err(Error::Argument(_))));
}

fn quick() -> SamplerConfig {
    SamplerConfig { chains: 4, samples_per_chain: 2500, ..Default::default() }
}

#[test]
fn conjugate_regression_matches_closed_form() {
    let means = [0.5, -1.0, 2.0];
    let sds = [1.0, 0.5, 2.0];
    let mut rng = seed::rng(22);
    let data = random_data(&mut rng, 15, 3, TaskKind::Regression);
    let spec = LinearModelSpec::new(TaskKind::Regression, gaussian_prior(&means, &sds))
        .unwrap()
        .with_noise(NoiseModel::Known { sd: 0.4 })
        .unwrap();
    let post = sample_posterior(&spec, &data, &quick(), 7, &names(3)).unwrap();
    let (m, v) = conjugate(&means, &sds, &data, 0.4);
    let target = Posterior { spec: &spec, data: &data };
    let draws = sampler::sample(&target, &quick(), 7).unwrap();
    for j in 0..4 {
        let se = draws.mcse(j);
        assert!((post.mean(j) - m[j]).abs() < 3.0 * se, "coord {j}: {} vs {} (se {se})", post.mean(j), m[j]);
        let ratio = draws.variance(j) / v[j];
        assert!((ratio - 1.0).abs() < 0.2, "coord {j}: variance ratio {ratio}");
    }
    assert!(post.column(4).iter().all(|&s| s == 0.4));
}

#[test]
fn zero_observations_reproduce_prior_moments() {
    let prior = gaussian_prior(&[1.0, -1.0], &[0.5, 2.0]);
    let spec = LinearModelSpec::new(TaskKind::Classification, prior).unwrap();
    let target = Posterior { spec: &spec, data: &Observations::empty(2) };
    let draws = sampler::sample(&target, &quick(), 8).unwrap();
    for (j, (m, s)) in [(1.0, 0.5), (-1.0, 2.0), (0.0, 1.0)].into_iter().enumerate() {
        assert!((draws.mean(j) - m).abs() < 3.0 * draws.mcse(j), "coord {j}");
        assert!((draws.variance(j) / (s * s) - 1.0).abs() < 0.2);
    }
}

#[test]
fn sharp_prior_recovers_synthetic_weights() {
    let ds = crate::datasets::generate_synthetic(20, 0.05, 3).unwrap();
    let data = Observations::from_dataset(&ds);
    let table = ElicitedPriorTable::constant(
        "synthetic",
        names(3),
        [2.0, -1.0, 1.0].iter().map(|&mean| GaussianComponent { mean, std: 0.1 }).collect(),
        100,
    )
    .unwrap();
    let spec = LinearModelSpec::new(TaskKind::Regression, build_mixture(&table).unwrap()).unwrap();
    let post = sample_posterior(&spec, &data, &quick(), 9, &names(3)).unwrap();
    for (j, w) in [2.0, -1.0, 1.0].into_iter().enumerate() {
        assert!((post.mean(j) - w).abs() < 0.1, "coord {j}: {}", post.mean(j));
    }
    assert!(post.column(4).iter().all(|&s| s > 0.0));
}

fn set(kind: TaskKind, rows: &[Vec<f64>]) -> PosteriorSampleSet {
    let d = rows[0].len() - 1 - (kind == TaskKind::Regression) as usize;
    PosteriorSampleSet::from_rows(kind, &names(d), rows, vec![0; rows.len()]).unwrap()
}

#[test]
fn zero_parameters_predict_label_one() {
    let s = set(TaskKind::Classification, &[vec![0.0, 0.0, 0.0]]);
    let x = Observations::new(&[vec![1.0, 2.0], vec![-3.0, 0.5]], vec![0.0, 1.0], 2).unwrap();
    assert_eq!(posterior_predictive(&s, &x), vec![vec![1.0, 1.0]]);
}

#[test]
fn true_weights_predict_noiseless_targets() {
    let ds = crate::datasets::generate_synthetic(30, 0.0, 4).unwrap();
    let s = set(TaskKind::Regression, &vec![vec![2.0, -1.0, 1.0, 0.0, 1.0]; 3]);
    let data = Observations::from_dataset(&ds);
    let preds = posterior_predictive(&s, &data);
    assert_eq!(preds.len(), 3);
    for (p, y) in preds[0].iter().zip(ds.targets()) {
        assert!((p - y).abs() < 1e-12);
    }
    let eval = evaluate(&s, &data).unwrap();
    assert!(eval.mean < 1e-24);
}

#[test]
fn accuracy_arithmetic() {
    let x = Observations::new(
        &(0..5).map(|i| vec![i as f64 - 2.0]).collect::<Vec<_>>(),
        vec![0.0, 0.0, 1.0, 1.0, 1.0],
        1,
    )
    .unwrap();
    // w=1,b=0 gets all right (x=0 ties to 1); w=1,b=-1.5 misses x=0,1 -> 0.6
    let s = set(TaskKind::Classification, &[vec![1.0, 0.0], vec![1.0, -1.5]]);
    let eval = evaluate(&s, &x).unwrap();
    assert_eq!(eval.per_sample, vec![1.0, 0.6]);
    assert!((eval.mean - 0.8).abs() < 1e-15);
    let s = set(TaskKind::Classification, &[vec![1.0, -1.5], vec![1.0, -0.5]]);
    let eval = evaluate(&s, &x).unwrap();
    assert_eq!(eval.per_sample, vec![0.6, 0.8]);
    assert!((eval.mean - 0.7).abs() < 1e-15);
    assert!(evaluate(&s, &Observations::empty(1)).is_err());
}

#[test]
fn posterior_sets_round_trip() {
    let s = set(TaskKind::Regression, &[vec![0.1, 0.2, 1.5], vec![-1.0 / 3.0, 2.0, 0.25]]);
    let dir = tempfile::tempdir().unwrap();
    s.save(dir.path(), "post").unwrap();
    assert_eq!(PosteriorSampleSet::load(dir.path(), "post").unwrap(), s);
    let header = std::fs::read_to_string(dir.path().join("post.csv")).unwrap();
    assert!(header.starts_with("chain,feature 0,bias,noise\n"));
}

struct PointMass(usize);

impl LogDensity for PointMass {
    fn dim(&self) -> usize {
        self.0
    }
    fn log_density_grad(&self, _: &[f64], grad: &mut [f64]) -> f64 {
        grad.fill(0.0);
        0.0
    }
}

impl Prior for PointMass {
    fn draw(&self, _: &mut ChaCha8Rng) -> Vec<f64> {
        vec![0.0; self.0]
    }
}

#[test]
fn point_mass_prior_predictive() {
    let spec = LinearModelSpec::new(TaskKind::Classification, PointMass(4)).unwrap();
    let mut rng = seed::rng(30);
    let data = random_data(&mut rng, 25, 3, TaskKind::Classification);
    let ll = prior_predictive_loglik(&spec, &data, 500, 1).unwrap();
    assert_eq!(ll.len(), 500);
    assert!(ll.iter().all(|v| (v - 25.0 * 0.5f64.ln()).abs() < 1e-12));
    assert!((25.0 * 0.5f64.ln() + 17.3287).abs() < 1e-4);
    assert!(prior_predictive_loglik(&spec, &Observations::empty(3), 5, 1).is_err());
}

#[test]
fn sharp_prior_predicts_synthetic_data_better() {
    let ds = crate::datasets::generate_synthetic(25, 0.05, 5).unwrap();
    let data = Observations::from_dataset(&ds);
    let sharp = ElicitedPriorTable::constant(
        "s",
        names(3),
        [2.0, -1.0, 1.0].iter().map(|&mean| GaussianComponent { mean, std: 0.1 }).collect(),
        100,
    )
    .unwrap();
    let sharp = LinearModelSpec::new(TaskKind::Regression, build_mixture(&sharp).unwrap()).unwrap();
    let flat = LinearModelSpec::new(TaskKind::Regression, MixturePrior::standard_normal(3)).unwrap();
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    let a = mean(prior_predictive_loglik(&sharp, &data, 500, 2).unwrap());
    let b = mean(prior_predictive_loglik(&flat, &data, 500, 2).unwrap());
    assert!(a > b, "{a} vs {b}");
}

proptest! {
    #[test]
    fn mse_ignores_row_order(seed in 0u64..1000, n in 2usize..20) {
        let mut rng = seed::rng(seed);
        let data = random_data(&mut rng, n, 2, TaskKind::Regression);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.reverse();
        idx.rotate_left(seed as usize % n);
        let rows: Vec<Vec<f64>> = idx.iter().map(|&i| data.row(i).to_vec()).collect();
        let y = idx.iter().map(|&i| data.targets()[i]).collect();
        let shuffled = Observations::new(&rows, y, 2).unwrap();
        let s = set(TaskKind::Regression, &[vec![0.3, -0.2, 0.1, 1.0], vec![1.0, 1.0, -1.0, 2.0]]);
        let a = evaluate(&s, &data).unwrap();
        let b = evaluate(&s, &shuffled).unwrap();
        for (x, y) in a.per_sample.iter().zip(&b.per_sample) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn prior_predictive_is_seed_deterministic(seed in 0u64..50) {
        let spec = LinearModelSpec::new(TaskKind::Regression, MixturePrior::standard_normal(2)).unwrap();
        let mut rng = seed::rng(seed);
        let data = random_data(&mut rng, 5, 2, TaskKind::Regression);
        let a = prior_predictive_loglik(&spec, &data, 20, seed).unwrap();
        prop_assert!(a == prior_predictive_loglik(&spec, &data, 20, seed).unwrap());
        prop_assert!(a.iter().all(|v| v.is_finite()));
    }
}

