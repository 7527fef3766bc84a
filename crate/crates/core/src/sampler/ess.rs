//! Multi-chain effective sample size with Geyer's initial monotone sequence.

fn autocovariance(x: &[f64], mean: f64, lag: usize) -> f64 {
    let n = x.len();
    if lag >= n {
        return 0.0;
    }
    (0..n - lag).map(|i| (x[i] - mean) * (x[i + lag] - mean)).sum::<f64>() / n as f64
}

/// Effective sample size of one scalar quantity drawn by several chains of
/// equal length.
pub fn effective_sample_size(chains: &[&[f64]]) -> f64 {
    let m = chains.len();
    let n = chains.first().map_or(0, |c| c.len());
    if m == 0 || n < 4 || chains.iter().any(|c| c.len() != n) {
        return f64::NAN;
    }
    let means: Vec<f64> = chains.iter().map(|c| c.iter().sum::<f64>() / n as f64).collect();
    let acov = |t: usize| -> f64 {
        chains.iter().zip(&means).map(|(c, &mu)| autocovariance(c, mu, t)).sum::<f64>() / m as f64
    };
    let acov0 = acov(0);
    let mean_var = acov0 * n as f64 / (n - 1) as f64;
    let mut var_plus = mean_var * (n - 1) as f64 / n as f64;
    if m > 1 {
        let grand = means.iter().sum::<f64>() / m as f64;
        var_plus += means.iter().map(|v| (v - grand).powi(2)).sum::<f64>() / (m - 1) as f64;
    }
    if !(var_plus > 0.0) {
        return (m * n) as f64;
    }
    let rho = |t: usize| 1.0 - (mean_var - acov(t)) / var_plus;

    let mut rho_hat = vec![1.0, rho(1)];
    let (mut even, mut odd) = (1.0, rho_hat[1]);
    let mut t = 1;
    while t + 5 < n && (even + odd) > 0.0 {
        even = rho(t + 1);
        odd = rho(t + 2);
        if even + odd >= 0.0 {
            rho_hat.push(even);
            rho_hat.push(odd);
        }
        t += 2;
    }
    let max_t = rho_hat.len() - 1;
    // enforce a monotone sequence of pair sums
    let mut t = 1;
    while t + 2 <= max_t {
        let prev = rho_hat[t - 1] + rho_hat[t];
        if rho_hat[t + 1] + rho_hat[t + 2] > prev {
            rho_hat[t + 1] = prev / 2.0;
            rho_hat[t + 2] = prev / 2.0;
        }
        t += 2;
    }
    let total = (m * n) as f64;
    let tau = (-1.0 + 2.0 * rho_hat.iter().sum::<f64>()).max(1.0 / total.log10());
    total / tau
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn iid_draws_have_ess_near_n() {
        let mut rng = crate::seed::rng(1);
        let chains: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..2000).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        let refs: Vec<&[f64]> = chains.iter().map(|c| c.as_slice()).collect();
        let ess = effective_sample_size(&refs);
        assert!((6000.0..10000.0).contains(&ess), "{ess}");
    }

    #[test]
    fn ar1_matches_theory() {
        // AR(1) with coefficient a has ESS ratio (1 - a) / (1 + a)
        let a: f64 = 0.8;
        let mut rng = crate::seed::rng(2);
        let chains: Vec<Vec<f64>> = (0..4)
            .map(|_| {
                let mut x = 0.0;
                (0..20000)
                    .map(|_| {
                        let z: f64 = rng.sample(StandardNormal);
                        x = a * x + z;
                        x
                    })
                    .collect()
            })
            .collect();
        let refs: Vec<&[f64]> = chains.iter().map(|c| c.as_slice()).collect();
        let ratio = effective_sample_size(&refs) / 80000.0;
        let theory = (1.0 - a) / (1.0 + a);
        assert!((ratio - theory).abs() / theory < 0.15, "{ratio} vs {theory}");
    }
}
