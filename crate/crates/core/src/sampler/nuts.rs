//! Hamiltonian transitions with a diagonal metric: multinomial No-U-Turn
//! trajectories with the generalised turning criterion, and static HMC.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::LogDensity;
use crate::math::log_add_exp;

/// Energy error above which a trajectory is divergent.
pub(crate) const MAX_DELTA_H: f64 = 1000.0;

#[derive(Debug, Clone)]
pub(crate) struct State {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub grad: Vec<f64>,
    pub logp: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct TransitionInfo {
    pub accept_stat: f64,
    pub divergent: bool,
    pub depth: usize,
    pub n_leapfrog: u64,
}

#[derive(Default)]
struct TreeStats {
    n_leapfrog: u64,
    sum_metro_prob: f64,
    divergent: bool,
}

pub(crate) struct Integrator<'a, T: LogDensity + ?Sized> {
    pub target: &'a T,
    pub inv_metric: Vec<f64>,
    pub step_size: f64,
    pub rng: ChaCha8Rng,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add_assign(a: &mut [f64], b: &[f64]) {
    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
}

fn sum(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// No-U-Turn check between the two trajectory ends.
fn persists(p_sharp_minus: &[f64], p_sharp_plus: &[f64], rho: &[f64]) -> bool {
    dot(p_sharp_plus, rho) > 0.0 && dot(p_sharp_minus, rho) > 0.0
}

impl<'a, T: LogDensity + ?Sized> Integrator<'a, T> {
    pub fn state_at(&self, q: Vec<f64>) -> State {
        let mut grad = vec![0.0; q.len()];
        let logp = self.target.log_density_grad(&q, &mut grad);
        State { p: vec![0.0; q.len()], q, grad, logp }
    }

    fn energy(&self, s: &State) -> f64 {
        let kinetic: f64 = s.p.iter().zip(&self.inv_metric).map(|(p, m)| p * p * m).sum();
        let h = -s.logp + 0.5 * kinetic;
        if h.is_nan() {
            f64::INFINITY
        } else {
            h
        }
    }

    fn p_sharp(&self, p: &[f64]) -> Vec<f64> {
        p.iter().zip(&self.inv_metric).map(|(p, m)| p * m).collect()
    }

    fn sample_momentum(&mut self, s: &mut State) {
        for (p, m) in s.p.iter_mut().zip(&self.inv_metric) {
            let z: f64 = self.rng.sample(StandardNormal);
            *p = z / m.sqrt();
        }
    }

    fn leapfrog(&self, s: &mut State, eps: f64) {
        for i in 0..s.q.len() {
            s.p[i] += 0.5 * eps * s.grad[i];
        }
        for i in 0..s.q.len() {
            s.q[i] += eps * self.inv_metric[i] * s.p[i];
        }
        s.logp = self.target.log_density_grad(&s.q, &mut s.grad);
        if s.logp.is_finite() {
            for i in 0..s.q.len() {
                s.p[i] += 0.5 * eps * s.grad[i];
            }
        }
    }

    /// Doubling heuristic: move the step size until one leapfrog step
    /// crosses an acceptance of 0.8.
    pub fn init_step_size(&mut self, current: &State) {
        let threshold = 0.8f64.ln();
        let mut probe = current.clone();
        self.sample_momentum(&mut probe);
        let h0 = self.energy(&probe);
        self.leapfrog(&mut probe, self.step_size);
        let direction = if h0 - self.energy(&probe) > threshold { 1.0 } else { -1.0 };
        for _ in 0..100 {
            let mut probe = current.clone();
            self.sample_momentum(&mut probe);
            let h0 = self.energy(&probe);
            self.leapfrog(&mut probe, self.step_size);
            let delta = h0 - self.energy(&probe);
            if (direction > 0.0 && !(delta > threshold)) || (direction < 0.0 && !(delta < threshold)) {
                break;
            }
            self.step_size = if direction > 0.0 { 2.0 * self.step_size } else { 0.5 * self.step_size };
            if !(self.step_size > 1e-300 && self.step_size < 1e7) {
                self.step_size = self.step_size.clamp(1e-300, 1e7);
                break;
            }
        }
    }

    pub fn static_hmc(&mut self, current: &mut State, steps: usize) -> TransitionInfo {
        let mut z = current.clone();
        self.sample_momentum(&mut z);
        let h0 = self.energy(&z);
        for _ in 0..steps {
            self.leapfrog(&mut z, self.step_size);
        }
        let h = self.energy(&z);
        let accept = (h0 - h).exp().min(1.0);
        let divergent = h - h0 > MAX_DELTA_H;
        if self.rng.random::<f64>() < accept {
            *current = z;
        }
        TransitionInfo {
            accept_stat: if accept.is_nan() { 0.0 } else { accept },
            divergent,
            depth: 0,
            n_leapfrog: steps as u64,
        }
    }

    pub fn nuts(&mut self, current: &mut State, max_depth: usize) -> TransitionInfo {
        let mut z = current.clone();
        self.sample_momentum(&mut z);
        let dim = z.q.len();

        let mut z_fwd = z.clone();
        let mut z_bck = z.clone();
        let mut z_sample = z.clone();
        let mut z_propose = z.clone();

        let mut p_fwd_fwd = z.p.clone();
        let mut p_sharp_fwd_fwd = self.p_sharp(&z.p);
        let mut p_fwd_bck = z.p.clone();
        let mut p_sharp_fwd_bck = p_sharp_fwd_fwd.clone();
        let mut p_bck_fwd = z.p.clone();
        let mut p_sharp_bck_fwd = p_sharp_fwd_fwd.clone();
        let mut p_bck_bck = z.p.clone();
        let mut p_sharp_bck_bck = p_sharp_fwd_fwd.clone();

        let mut rho = z.p.clone();
        let mut log_sum_weight = 0.0;
        let h0 = self.energy(&z);
        let mut stats = TreeStats::default();
        let mut depth = 0;

        while depth < max_depth {
            let mut rho_fwd = vec![0.0; dim];
            let mut rho_bck = vec![0.0; dim];
            let mut log_sum_weight_subtree = f64::NEG_INFINITY;
            let valid = if self.rng.random::<f64>() > 0.5 {
                rho_bck.copy_from_slice(&rho);
                p_bck_fwd.copy_from_slice(&p_fwd_bck);
                p_sharp_bck_fwd.copy_from_slice(&p_sharp_fwd_bck);
                let mut zz = z_fwd.clone();
                let ok = self.build_tree(
                    depth,
                    &mut zz,
                    &mut z_propose,
                    &mut p_sharp_fwd_bck,
                    &mut p_sharp_fwd_fwd,
                    &mut rho_fwd,
                    &mut p_fwd_bck,
                    &mut p_fwd_fwd,
                    h0,
                    1.0,
                    &mut stats,
                    &mut log_sum_weight_subtree,
                );
                z_fwd = zz;
                ok
            } else {
                rho_fwd.copy_from_slice(&rho);
                p_fwd_bck.copy_from_slice(&p_bck_fwd);
                p_sharp_fwd_bck.copy_from_slice(&p_sharp_bck_fwd);
                let mut zz = z_bck.clone();
                let ok = self.build_tree(
                    depth,
                    &mut zz,
                    &mut z_propose,
                    &mut p_sharp_bck_fwd,
                    &mut p_sharp_bck_bck,
                    &mut rho_bck,
                    &mut p_bck_fwd,
                    &mut p_bck_bck,
                    h0,
                    -1.0,
                    &mut stats,
                    &mut log_sum_weight_subtree,
                );
                z_bck = zz;
                ok
            };
            if !valid {
                break;
            }
            depth += 1;

            if log_sum_weight_subtree > log_sum_weight {
                z_sample.clone_from(&z_propose);
            } else {
                let accept = (log_sum_weight_subtree - log_sum_weight).exp();
                if self.rng.random::<f64>() < accept {
                    z_sample.clone_from(&z_propose);
                }
            }
            log_sum_weight = log_add_exp(log_sum_weight, log_sum_weight_subtree);

            rho = sum(&rho_bck, &rho_fwd);
            let mut persist = persists(&p_sharp_bck_bck, &p_sharp_fwd_fwd, &rho);
            let rho_extended = sum(&rho_bck, &p_fwd_bck);
            persist &= persists(&p_sharp_bck_bck, &p_sharp_fwd_bck, &rho_extended);
            let rho_extended = sum(&rho_fwd, &p_bck_fwd);
            persist &= persists(&p_sharp_bck_fwd, &p_sharp_fwd_fwd, &rho_extended);
            if !persist {
                break;
            }
        }

        *current = z_sample;
        TransitionInfo {
            accept_stat: if stats.n_leapfrog > 0 {
                stats.sum_metro_prob / stats.n_leapfrog as f64
            } else {
                0.0
            },
            divergent: stats.divergent,
            depth,
            n_leapfrog: stats.n_leapfrog,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn build_tree(
        &mut self,
        depth: usize,
        z: &mut State,
        z_propose: &mut State,
        p_sharp_beg: &mut Vec<f64>,
        p_sharp_end: &mut Vec<f64>,
        rho: &mut Vec<f64>,
        p_beg: &mut Vec<f64>,
        p_end: &mut Vec<f64>,
        h0: f64,
        sign: f64,
        stats: &mut TreeStats,
        log_sum_weight: &mut f64,
    ) -> bool {
        if depth == 0 {
            self.leapfrog(z, sign * self.step_size);
            stats.n_leapfrog += 1;
            let h = self.energy(z);
            if h - h0 > MAX_DELTA_H {
                stats.divergent = true;
            }
            *log_sum_weight = log_add_exp(*log_sum_weight, h0 - h);
            stats.sum_metro_prob += if h0 - h > 0.0 { 1.0 } else { (h0 - h).exp() };
            z_propose.clone_from(z);
            *p_sharp_beg = self.p_sharp(&z.p);
            p_beg.clone_from(&z.p);
            add_assign(rho, &z.p);
            p_sharp_end.clone_from(p_sharp_beg);
            p_end.clone_from(p_beg);
            return !stats.divergent;
        }
        let dim = z.q.len();

        let mut p_init_end = vec![0.0; dim];
        let mut p_sharp_init_end = vec![0.0; dim];
        let mut rho_init = vec![0.0; dim];
        let mut log_sum_weight_init = f64::NEG_INFINITY;
        if !self.build_tree(
            depth - 1,
            z,
            z_propose,
            p_sharp_beg,
            &mut p_sharp_init_end,
            &mut rho_init,
            p_beg,
            &mut p_init_end,
            h0,
            sign,
            stats,
            &mut log_sum_weight_init,
        ) {
            return false;
        }

        let mut z_propose_final = z.clone();
        let mut p_final_beg = vec![0.0; dim];
        let mut p_sharp_final_beg = vec![0.0; dim];
        let mut rho_final = vec![0.0; dim];
        let mut log_sum_weight_final = f64::NEG_INFINITY;
        if !self.build_tree(
            depth - 1,
            z,
            &mut z_propose_final,
            &mut p_sharp_final_beg,
            p_sharp_end,
            &mut rho_final,
            &mut p_final_beg,
            p_end,
            h0,
            sign,
            stats,
            &mut log_sum_weight_final,
        ) {
            return false;
        }

        let log_sum_weight_subtree = log_add_exp(log_sum_weight_init, log_sum_weight_final);
        *log_sum_weight = log_add_exp(*log_sum_weight, log_sum_weight_subtree);
        if log_sum_weight_final > log_sum_weight_subtree {
            *z_propose = z_propose_final;
        } else {
            let accept = (log_sum_weight_final - log_sum_weight_subtree).exp();
            if self.rng.random::<f64>() < accept {
                *z_propose = z_propose_final;
            }
        }

        let rho_subtree = sum(&rho_init, &rho_final);
        add_assign(rho, &rho_subtree);
        let mut persist = persists(p_sharp_beg, p_sharp_end, &rho_subtree);
        let rho_extended = sum(&rho_init, &p_final_beg);
        persist &= persists(p_sharp_beg, &p_sharp_final_beg, &rho_extended);
        let rho_extended = sum(&rho_final, &p_init_end);
        persist &= persists(&p_sharp_init_end, p_sharp_end, &rho_extended);
        persist
    }
}
