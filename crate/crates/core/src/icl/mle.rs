use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ModelClass;
use crate::error::{Error, Result};
use crate::math::logit;

/// Clamp applied to probabilities before the logit.
pub const PROB_CLAMP: f64 = 1e-3;

/// One implicit-model parameter sample fitted to in-context predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleParamSample {
    /// Weights followed by the bias.
    pub phi: Vec<f64>,
    pub approximation_mse: f64,
    pub origin: (usize, usize),
}

/// Regression targets for the fit: predictions as given, or clamped logits.
pub fn fit_targets(predictions: &[f64], class: ModelClass) -> Vec<f64> {
    match class {
        ModelClass::Linear => predictions.to_vec(),
        ModelClass::Logistic => predictions
            .iter()
            .map(|&p| logit(p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)))
            .collect(),
    }
}

/// Ordinary least squares with an intercept, solved through the normal
/// equations.
pub fn fit_mle(x: &[Vec<f64>], predictions: &[f64], class: ModelClass) -> Result<MleParamSample> {
    let n = x.len();
    if n != predictions.len() {
        return Err(Error::Argument(format!("{n} rows but {} predictions", predictions.len())));
    }
    let d = x.first().map_or(0, |r| r.len());
    if d == 0 || x.iter().any(|r| r.len() != d) {
        return Err(Error::Argument("rows must share a positive width".into()));
    }
    if n < d + 1 {
        return Err(Error::SingularDesign);
    }
    let y = DVector::from_vec(fit_targets(predictions, class));
    let design = DMatrix::from_fn(n, d + 1, |i, j| if j < d { x[i][j] } else { 1.0 });
    let gram = design.transpose() * &design;
    let chol = gram.clone().cholesky().ok_or(Error::SingularDesign)?;
    let diag: Vec<f64> = chol.l_dirty().diagonal().iter().map(|v| v * v).collect();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(lo > 1e-12 * hi) {
        return Err(Error::SingularDesign);
    }
    let phi = chol.solve(&(design.transpose() * &y));
    let residual = &y - &design * &phi;
    let approximation_mse = residual.norm_squared() / n as f64;
    Ok(MleParamSample { phi: phi.iter().copied().collect(), approximation_mse, origin: (0, 0) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::sigmoid;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn inputs(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = crate::seed::rng(seed);
        (0..n).map(|_| (0..d).map(|_| rng.random_range(-5.0..5.0)).collect()).collect()
    }

    /// Least squares via SVD of the design, independent of the normal equations.
    fn svd_oracle(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
        let d = x[0].len();
        let a = DMatrix::from_fn(x.len(), d + 1, |i, j| if j < d { x[i][j] } else { 1.0 });
        let svd = a.svd(true, true);
        svd.solve(&DVector::from_column_slice(y), 1e-14).unwrap().iter().copied().collect()
    }

    #[test]
    fn planted_linear_rule_is_exact() {
        let x = inputs(25, 3, 1);
        let y: Vec<f64> = x.iter().map(|r| 2.0 * r[0] - r[1] + r[2]).collect();
        let fit = fit_mle(&x, &y, ModelClass::Linear).unwrap();
        for (a, b) in fit.phi.iter().zip([2.0, -1.0, 1.0, 0.0]) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!(fit.approximation_mse < 1e-16);
    }

    #[test]
    fn planted_logits_are_recovered() {
        let x = inputs(25, 2, 2);
        let p: Vec<f64> = x.iter().map(|r| sigmoid(0.5 * r[0] - 0.3 * r[1])).collect();
        assert!(p.iter().all(|&v| v > PROB_CLAMP && v < 1.0 - PROB_CLAMP));
        let fit = fit_mle(&x, &p, ModelClass::Logistic).unwrap();
        assert!((fit.phi[0] - 0.5).abs() < 1e-6 && (fit.phi[1] + 0.3).abs() < 1e-6);
    }

    #[test]
    fn noisy_labels_match_the_svd_solution() {
        let x = inputs(25, 3, 3);
        let mut rng = crate::seed::rng(4);
        let y: Vec<f64> = x
            .iter()
            .map(|r| 2.0 * r[0] - r[1] + r[2] + 0.1 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let fit = fit_mle(&x, &y, ModelClass::Linear).unwrap();
        let oracle = svd_oracle(&x, &y);
        for (a, b) in fit.phi.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-10);
        }
        for (a, b) in fit.phi.iter().zip([2.0, -1.0, 1.0, 0.0]) {
            assert!((a - b).abs() < 0.2);
        }
        assert!((0.002..0.03).contains(&fit.approximation_mse), "{}", fit.approximation_mse);
    }

    #[test]
    fn residuals_are_orthogonal_to_the_design() {
        let x = inputs(30, 4, 5);
        let y: Vec<f64> = x.iter().map(|r| r.iter().map(|v| v.sin()).sum()).collect();
        let fit = fit_mle(&x, &y, ModelClass::Linear).unwrap();
        let resid: Vec<f64> = x
            .iter()
            .zip(&y)
            .map(|(r, yi)| yi - r.iter().zip(&fit.phi).map(|(a, b)| a * b).sum::<f64>() - fit.phi[4])
            .collect();
        for j in 0..=4 {
            let s: f64 = x.iter().zip(&resid).map(|(r, e)| if j < 4 { r[j] * e } else { *e }).sum();
            assert!(s.abs() < 1e-8, "column {j}: {s}");
        }
    }

    #[test]
    fn clamp_keeps_logits_finite() {
        let x = inputs(10, 1, 6);
        let p: Vec<f64> = x.iter().map(|r| if r[0] > 0.0 { 1.0 } else { 0.0 }).collect();
        let fit = fit_mle(&x, &p, ModelClass::Logistic).unwrap();
        assert!(fit.phi.iter().all(|v| v.is_finite()));
        let t = fit_targets(&p, ModelClass::Logistic);
        let bound = logit(1.0 - PROB_CLAMP);
        assert!(t.iter().all(|v| v.abs() <= bound + 1e-12));
    }

    #[test]
    fn rank_deficient_designs_are_rejected() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let y = vec![1.0; 10];
        assert!(matches!(fit_mle(&x, &y, ModelClass::Linear), Err(Error::SingularDesign)));
        assert!(matches!(fit_mle(&x[..2], &y[..2], ModelClass::Linear), Err(Error::SingularDesign)));
    }
}
