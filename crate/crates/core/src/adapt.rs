//! Shared adaptive parameters and their update laws.
//!
//! Scalars live on the `logit_eps` scale so every update keeps them inside
//! `(eps, 1 - eps)`.

use serde::Serialize;

use crate::error::{BvsError, Result};
use crate::proposals::{inv_logit_eps, logistic, logit_eps, optimal_rates, RateVector};
use crate::samplers::StepResult;

pub const DEFAULT_PI0: f64 = 0.001;
pub const DEFAULT_TAU: f64 = 0.65;
pub const DEFAULT_TARGET_K: f64 = 5.0;

/// Robbins-Monro gain `phi_i = i^-0.7`.
pub fn rm_gain(i: usize) -> f64 {
    (i.max(1) as f64).powf(-0.7)
}

/// Kiefer-Wolfowitz step `a_i = i^-1`.
pub fn kw_step(i: usize) -> f64 {
    1.0 / i.max(1) as f64
}

/// Kiefer-Wolfowitz half-width `c_i = i^-0.5`.
pub fn kw_width(i: usize) -> f64 {
    (i.max(1) as f64).powf(-0.5)
}

/// `logit_val + phi_i (signal - target)`.
pub fn rm_update(logit_val: f64, signal: f64, target: f64, phi_i: f64) -> f64 {
    logit_val + phi_i * (signal - target)
}

/// Mean of `hamming_jump^2 * acceptance probability` over the results.
pub fn asjd(results: &[StepResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(BvsError::InvalidInput("ASJD of an empty batch".into()));
    }
    let total: f64 = results.iter().map(StepResult::squared_jump).sum();
    Ok(total / results.len() as f64)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct AdaptTargets {
    /// Target mean acceptance probability.
    pub tau: f64,
    /// Target neighbourhood size.
    pub s: f64,
}

/// Adaptive state shared by all chains.
#[derive(Debug, Clone)]
pub struct AdaptState {
    pip_sum: Vec<f64>,
    rb_count: usize,
    pip_init: Vec<f64>,
    pub pip_hat: Vec<f64>,
    pub pip_tilde: Vec<f64>,
    pub rates: RateVector,
    pub zeta_logit: f64,
    pub xi_logit: f64,
    pub omega_logit: f64,
    /// Completed adaptation iterations.
    pub iter: usize,
    pub pi0: f64,
    pub eps: f64,
    pub targets: AdaptTargets,
    frozen: bool,
}

/// Initial values for a fresh [`AdaptState`].
#[derive(Debug, Clone, Copy)]
pub struct AdaptInit {
    pub pip: f64,
    pub zeta: f64,
    pub xi: f64,
    pub omega: f64,
    pub pi0: f64,
    pub eps: f64,
    pub targets: AdaptTargets,
}

impl AdaptState {
    pub fn new(p: usize, init: AdaptInit) -> Result<Self> {
        if !(init.pi0 > 0.0 && init.pi0 < 0.5) {
            return Err(BvsError::Config(format!("pi0 must lie in (0, 1/2), got {}", init.pi0)));
        }
        let pip_hat = vec![init.pip.clamp(0.0, 1.0); p];
        let mut st = AdaptState {
            pip_sum: vec![0.0; p],
            rb_count: 0,
            pip_init: pip_hat.clone(),
            pip_hat,
            pip_tilde: vec![0.0; p],
            rates: RateVector {
                add: vec![],
                del: vec![],
            },
            zeta_logit: logit_eps(init.zeta, init.eps)?,
            xi_logit: logit_eps(init.xi, init.eps)?,
            omega_logit: logit_eps(init.omega, init.eps)?,
            iter: 0,
            pi0: init.pi0,
            eps: init.eps,
            targets: init.targets,
            frozen: false,
        };
        st.refresh_tilde();
        st.rates = optimal_rates(&st.pip_tilde, st.eps);
        Ok(st)
    }

    fn refresh_tilde(&mut self) {
        let (pi0, scale) = (self.pi0, 1.0 - 2.0 * self.pi0);
        self.pip_tilde = self.pip_hat.iter().map(|v| (pi0 + scale * v).clamp(pi0, 1.0 - pi0)).collect();
    }

    pub fn zeta(&self) -> f64 {
        inv_logit_eps(self.zeta_logit, self.eps)
    }

    pub fn xi(&self) -> f64 {
        inv_logit_eps(self.xi_logit, self.eps)
    }

    pub fn omega(&self) -> f64 {
        inv_logit_eps(self.omega_logit, self.eps)
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Number of chain-iterations averaged into `pip_hat`.
    pub fn rb_count(&self) -> usize {
        self.rb_count
    }

    /// Stops adapting the proposal and restarts the inclusion-probability
    /// average so it only covers post-adaptation draws.
    pub fn freeze(&mut self) {
        self.frozen = true;
        self.pip_sum.iter_mut().for_each(|v| *v = 0.0);
        self.rb_count = 0;
    }

    /// Folds one iteration of conditional inclusion log-odds (one row per
    /// chain) into the running Rao-Blackwellised means.
    pub fn rb_update(&mut self, flip_logits: &[Vec<f64>]) {
        for row in flip_logits {
            for (s, &d) in self.pip_sum.iter_mut().zip(row) {
                *s += logistic(d);
            }
        }
        self.rb_count += flip_logits.len();
        if self.rb_count > 0 {
            let c = self.rb_count as f64;
            self.pip_hat = self.pip_sum.iter().map(|s| s / c).collect();
        } else {
            self.pip_hat = self.pip_init.clone();
        }
        self.refresh_tilde();
        if !self.frozen {
            self.rates = optimal_rates(&self.pip_tilde, self.eps);
        }
    }

    /// One Kiefer-Wolfowitz step on `omega`.
    pub fn kw_update(&mut self, batch: &KwBatch) {
        self.omega_logit += batch.a_i * (batch.asjd_plus - batch.asjd_minus) / (2.0 * batch.c_i);
    }
}

/// Split of the chains into the `+` and `-` finite-difference batches.
#[derive(Debug, Clone)]
pub struct KwBatch {
    pub plus_ids: Vec<usize>,
    pub minus_ids: Vec<usize>,
    pub omega_plus: f64,
    pub omega_minus: f64,
    pub asjd_plus: f64,
    pub asjd_minus: f64,
    pub a_i: f64,
    pub c_i: f64,
}

impl KwBatch {
    /// Batches for iteration `i`. The first `L/2` chains form the `+` batch
    /// and the next `L/2` the `-` batch; with odd `L` the last chain runs at
    /// the centre value and is left out of both.
    pub fn new(i: usize, n_chains: usize, omega_logit: f64, eps: f64) -> Result<Self> {
        if n_chains < 2 {
            return Err(BvsError::Config("Kiefer-Wolfowitz adaptation needs at least 2 chains".into()));
        }
        let half = n_chains / 2;
        let c_i = kw_width(i);
        Ok(KwBatch {
            plus_ids: (0..half).collect(),
            minus_ids: (half..2 * half).collect(),
            omega_plus: inv_logit_eps(omega_logit + c_i, eps),
            omega_minus: inv_logit_eps(omega_logit - c_i, eps),
            asjd_plus: 0.0,
            asjd_minus: 0.0,
            a_i: kw_step(i),
            c_i,
        })
    }

    /// `omega` used by chain `l` this iteration.
    pub fn omega_for(&self, l: usize, centre: f64) -> f64 {
        if self.plus_ids.contains(&l) {
            self.omega_plus
        } else if self.minus_ids.contains(&l) {
            self.omega_minus
        } else {
            centre
        }
    }

    /// Fills the two ASJD estimates from per-chain step results.
    pub fn record(&mut self, results: &[StepResult]) {
        let pick = |ids: &[usize]| -> Vec<StepResult> { ids.iter().map(|&l| results[l].clone()).collect() };
        self.asjd_plus = asjd(&pick(&self.plus_ids)).unwrap_or(0.0);
        self.asjd_minus = asjd(&pick(&self.minus_ids)).unwrap_or(0.0);
    }
}

/// Free-function form of [`AdaptState::kw_update`].
pub fn kw_update(adapt: &mut AdaptState, batch: &KwBatch) {
    adapt.kw_update(batch);
}

/// Free-function form of [`AdaptState::rb_update`].
pub fn rb_update(adapt: &mut AdaptState, flip_logits: &[Vec<f64>]) {
    adapt.rb_update(flip_logits);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linmodel::GammaVector;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn init() -> AdaptInit {
        AdaptInit {
            pip: 0.1,
            zeta: 0.5,
            xi: 0.5,
            omega: 0.5,
            pi0: DEFAULT_PI0,
            eps: 0.001,
            targets: AdaptTargets {
                tau: DEFAULT_TAU,
                s: DEFAULT_TARGET_K,
            },
        }
    }

    fn result(jump: usize, log_accept_prob: f64) -> StepResult {
        StepResult {
            proposed: GammaVector::empty(4),
            accepted: false,
            log_accept_prob,
            hamming_jump: jump,
            k_size: 0,
            models_evaluated: 0,
        }
    }

    #[test]
    fn logistic_zero_gives_half() {
        let mut a = AdaptState::new(3, init()).unwrap();
        a.rb_update(&[vec![0.0, 0.0, 0.0]]);
        assert_eq!(a.pip_hat, vec![0.5; 3]);
    }

    #[test]
    fn constant_logits_keep_mean() {
        let mut a = AdaptState::new(2, init()).unwrap();
        let row = vec![1.3, -2.0];
        a.rb_update(&[row.clone()]);
        let first = a.pip_hat.clone();
        for _ in 0..20 {
            a.rb_update(&[row.clone(), row.clone()]);
        }
        for (x, y) in a.pip_hat.iter().zip(&first) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-14);
        }
    }

    #[test]
    fn running_mean_matches_batch_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut a = AdaptState::new(5, init()).unwrap();
        let mut log = Vec::new();
        for _ in 0..10 {
            let rows: Vec<Vec<f64>> = (0..3)
                .map(|_| (0..5).map(|_| rng.random::<f64>() * 20.0 - 10.0).collect())
                .collect();
            a.rb_update(&rows);
            log.extend(rows);
        }
        for j in 0..5 {
            let batch = log.iter().map(|r| logistic(r[j])).sum::<f64>() / log.len() as f64;
            assert_abs_diff_eq!(a.pip_hat[j], batch, epsilon = 1e-12);
        }
    }

    #[test]
    fn shrinkage_and_rates_track_pip_hat() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut a = AdaptState::new(6, init()).unwrap();
        let mut prev = a.pip_hat.clone();
        for i in 0..200 {
            let rows: Vec<Vec<f64>> = (0..4)
                .map(|_| (0..6).map(|_| if rng.random::<bool>() { f64::INFINITY } else { f64::NEG_INFINITY }).collect())
                .collect();
            a.rb_update(&rows);
            for j in 0..6 {
                assert_abs_diff_eq!(a.pip_tilde[j], a.pi0 + (1.0 - 2.0 * a.pi0) * a.pip_hat[j], epsilon = 1e-15);
                assert!(a.pip_tilde[j] >= a.pi0 && a.pip_tilde[j] <= 1.0 - a.pi0);
                assert!((0.0..=1.0).contains(&a.pip_hat[j]));
                if i > 0 {
                    assert!((a.pip_hat[j] - prev[j]).abs() <= 2.0 / (i as f64 + 1.0));
                }
            }
            assert_eq!(a.rates, optimal_rates(&a.pip_tilde, a.eps));
            prev = a.pip_hat.clone();
        }
    }

    #[test]
    fn frozen_state_keeps_rates() {
        let mut a = AdaptState::new(2, init()).unwrap();
        a.rb_update(&[vec![3.0, -3.0]]);
        let rates = a.rates.clone();
        a.freeze();
        a.rb_update(&[vec![-5.0, 5.0]]);
        assert_eq!(a.rates, rates);
        assert_abs_diff_eq!(a.pip_hat[0], logistic(-5.0), epsilon = 1e-15);
        assert_eq!(a.rb_count(), 1);
    }

    #[test]
    fn rm_fixed_point_and_step() {
        for phi in [1.0, 0.3, rm_gain(17)] {
            assert_eq!(rm_update(0.7, 0.65, 0.65, phi), 0.7);
        }
        assert_abs_diff_eq!(rm_update(0.0, 1.0, 0.65, 0.1), 0.035, epsilon = 1e-15);
        assert_abs_diff_eq!(rm_gain(1), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rm_gain(10), 10f64.powf(-0.7), epsilon = 1e-15);
    }

    #[test]
    fn kw_defaults_and_zero_difference() {
        assert_abs_diff_eq!(kw_step(4), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(kw_width(4), 0.5, epsilon = 1e-15);
        let mut a = AdaptState::new(2, init()).unwrap();
        let before = a.omega_logit;
        let mut b = KwBatch::new(3, 4, a.omega_logit, a.eps).unwrap();
        b.asjd_plus = 2.5;
        b.asjd_minus = 2.5;
        kw_update(&mut a, &b);
        assert_eq!(a.omega_logit, before);
        b.asjd_plus = 3.0;
        kw_update(&mut a, &b);
        assert_abs_diff_eq!(a.omega_logit, before + kw_step(3) * 0.5 / (2.0 * kw_width(3)), epsilon = 1e-15);
    }

    #[test]
    fn kw_sequence_conditions() {
        // sum a_i c_i = sum i^-1.5 converges; sum a_i = sum i^-1 diverges.
        let partial = |n: usize, f: &dyn Fn(usize) -> f64| (1..=n).map(f).sum::<f64>();
        let ac = |i| kw_step(i) * kw_width(i);
        let tail = partial(200_000, &ac) - partial(100_000, &ac);
        assert!(tail < 2.0 * (100_000f64).powf(-0.5));
        let a = |i| kw_step(i);
        assert!(partial(200_000, &a) - partial(100_000, &a) > 0.69);
        assert!(kw_width(1_000_000) < 1e-2);
    }

    #[test]
    fn kw_batch_partition_and_bounds() {
        let b = KwBatch::new(1, 5, 50.0, 0.01).unwrap();
        assert_eq!(b.plus_ids, vec![0, 1]);
        assert_eq!(b.minus_ids, vec![2, 3]);
        assert!(b.omega_plus < 0.99 && b.omega_minus > 0.01);
        assert_eq!(b.omega_for(4, 0.3), 0.3);
        assert!(KwBatch::new(1, 1, 0.0, 0.01).is_err());
    }

    #[test]
    fn asjd_definition() {
        assert_eq!(asjd(&[result(3, f64::NEG_INFINITY), result(1, f64::NEG_INFINITY)]).unwrap(), 0.0);
        assert_eq!(asjd(&[result(3, 0.0)]).unwrap(), 9.0);
        assert_abs_diff_eq!(asjd(&[result(2, 0.5f64.ln()), result(0, 0.0)]).unwrap(), 1.0, epsilon = 1e-15);
        assert!(asjd(&[]).is_err());
    }

    #[test]
    fn scalars_stay_in_open_interval() {
        let mut a = AdaptState::new(1, init()).unwrap();
        for i in 1..500 {
            a.omega_logit = rm_update(a.omega_logit, 1.0, 0.0, rm_gain(i) * 50.0);
            let w = a.omega();
            assert!(w > a.eps - 1e-15 && w < 1.0 - a.eps + 1e-15);
        }
    }
}
