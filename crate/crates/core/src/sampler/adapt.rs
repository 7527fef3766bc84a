//! Warm-up adaptation: dual-averaging step size and windowed diagonal
//! metric estimation.

#[derive(Debug, Clone)]
pub(crate) struct DualAveraging {
    delta: f64,
    gamma: f64,
    kappa: f64,
    t0: f64,
    mu: f64,
    counter: f64,
    s_bar: f64,
    x_bar: f64,
}

impl DualAveraging {
    pub(crate) fn new(delta: f64) -> Self {
        DualAveraging {
            delta,
            gamma: 0.05,
            kappa: 0.75,
            t0: 10.0,
            mu: 0.0,
            counter: 0.0,
            s_bar: 0.0,
            x_bar: 0.0,
        }
    }

    /// Restart around a new initial step size.
    pub(crate) fn restart(&mut self, epsilon: f64) {
        self.mu = (10.0 * epsilon).ln();
        self.counter = 0.0;
        self.s_bar = 0.0;
        self.x_bar = 0.0;
    }

    /// Next step size given the latest acceptance statistic.
    pub(crate) fn learn(&mut self, accept_stat: f64) -> f64 {
        self.counter += 1.0;
        let stat = accept_stat.min(1.0);
        let eta = 1.0 / (self.counter + self.t0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.delta - stat);
        let x = self.mu - self.s_bar * self.counter.sqrt() / self.gamma;
        let x_eta = self.counter.powf(-self.kappa);
        self.x_bar = (1.0 - x_eta) * self.x_bar + x_eta * x;
        x.exp()
    }

    /// Step size used after warm-up.
    pub(crate) fn final_step_size(&self) -> f64 {
        self.x_bar.exp()
    }
}

/// Welford accumulator for per-coordinate variances.
#[derive(Debug, Clone)]
pub(crate) struct Welford {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    pub(crate) fn new(dim: usize) -> Self {
        Welford { n: 0, mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    pub(crate) fn add(&mut self, x: &[f64]) {
        self.n += 1;
        for i in 0..x.len() {
            let delta = x[i] - self.mean[i];
            self.mean[i] += delta / self.n as f64;
            self.m2[i] += delta * (x[i] - self.mean[i]);
        }
    }

    pub(crate) fn count(&self) -> usize {
        self.n
    }

    pub(crate) fn sample_variance(&self) -> Vec<f64> {
        let denom = (self.n.max(2) - 1) as f64;
        self.m2.iter().map(|m| m / denom).collect()
    }

    pub(crate) fn restart(&mut self) {
        let dim = self.mean.len();
        *self = Welford::new(dim);
    }
}

/// Schedule of slow (metric) adaptation windows inside warm-up: a fast
/// initial buffer, doubling metric windows, and a fast terminal buffer.
#[derive(Debug, Clone)]
pub(crate) struct MetricWindows {
    num_warmup: usize,
    init_buffer: usize,
    term_buffer: usize,
    window_size: usize,
    next_window_end: usize,
    counter: usize,
    estimator: Welford,
}

impl MetricWindows {
    pub(crate) fn new(dim: usize, num_warmup: usize) -> Self {
        let (mut init_buffer, mut term_buffer, mut base_window) = (75, 50, 25);
        if num_warmup < 20 {
            // too short for any metric window
            init_buffer = num_warmup;
            term_buffer = 0;
            base_window = 0;
        } else if init_buffer + base_window + term_buffer > num_warmup {
            init_buffer = (0.15 * num_warmup as f64) as usize;
            term_buffer = (0.1 * num_warmup as f64) as usize;
            base_window = num_warmup - init_buffer - term_buffer;
        }
        MetricWindows {
            num_warmup,
            init_buffer,
            term_buffer,
            window_size: base_window,
            next_window_end: (init_buffer + base_window).saturating_sub(1),
            counter: 0,
            estimator: Welford::new(dim),
        }
    }

    fn in_window(&self) -> bool {
        self.window_size > 0
            && self.counter >= self.init_buffer
            && self.counter < self.num_warmup - self.term_buffer
            && self.counter != self.num_warmup
    }

    fn at_window_end(&self) -> bool {
        self.window_size > 0 && self.counter == self.next_window_end && self.counter != self.num_warmup
    }

    fn advance_window(&mut self) {
        let last = self.num_warmup - self.term_buffer - 1;
        if self.next_window_end == last {
            return;
        }
        self.window_size *= 2;
        self.next_window_end = self.counter + self.window_size;
        if self.next_window_end != last && self.next_window_end + 2 * self.window_size >= self.num_warmup - self.term_buffer {
            self.next_window_end = last;
        }
    }

    /// Record a warm-up draw. Returns a regularised variance estimate when a
    /// window closes.
    pub(crate) fn observe(&mut self, q: &[f64]) -> Option<Vec<f64>> {
        if self.in_window() {
            self.estimator.add(q);
        }
        let update = if self.at_window_end() {
            self.advance_window();
            let n = self.estimator.count() as f64;
            let var = self
                .estimator
                .sample_variance()
                .into_iter()
                .map(|v| (n / (n + 5.0)) * v + 1e-3 * (5.0 / (n + 5.0)))
                .collect();
            self.estimator.restart();
            Some(var)
        } else {
            None
        };
        self.counter += 1;
        update
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_window_schedule() {
        let mut w = MetricWindows::new(1, 1000);
        let ends: Vec<usize> = (0..1000).filter(|&i| w.observe(&[i as f64]).is_some()).collect();
        assert_eq!(ends, vec![99, 149, 249, 449, 949]);
    }

    #[test]
    fn short_warmup_has_no_windows() {
        let mut w = MetricWindows::new(1, 10);
        assert!((0..10).all(|i| w.observe(&[i as f64]).is_none()));
    }

    #[test]
    fn welford_matches_two_pass() {
        let xs = [1.0, 4.0, 2.5, -3.0, 7.25];
        let mut w = Welford::new(1);
        xs.iter().for_each(|&x| w.add(&[x]));
        let m = xs.iter().sum::<f64>() / 5.0;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 4.0;
        assert!((w.sample_variance()[0] - v).abs() < 1e-12);
    }

    #[test]
    fn dual_averaging_moves_toward_target() {
        let mut da = DualAveraging::new(0.8);
        da.restart(1.0);
        let low = da.learn(0.2);
        let mut da2 = DualAveraging::new(0.8);
        da2.restart(1.0);
        let high = da2.learn(1.0);
        assert!(low < high);
    }
}
