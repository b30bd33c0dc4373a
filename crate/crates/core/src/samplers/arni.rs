//! Adaptive random neighbourhood proposals with an informed, fully enumerated
//! within-neighbourhood step (ARNI).

use rand::Rng;

use super::{accept_draw, clamp_log_accept, move_to, StepParams, StepResult};
use crate::linmodel::enumerate::log_sum_exp;
use crate::linmodel::{make_model_state, Dataset, GammaVector, ModelState, PriorSpec};
use crate::proposals::{sample_k, BalancingFn, RateVector};

pub const DEFAULT_MAX_PK: usize = 12;

/// Hard ceiling on the enumerated neighbourhood, whatever `max_pk` says.
const ENUMERATION_CEILING: usize = 24;

/// Every model of `N(gamma, k)` with its posterior, indexed by a sub-mask over
/// the neighbourhood order (bit `b` flips `order[b]`).
#[derive(Debug, Clone)]
pub struct ArniNeighbourhood {
    order: Vec<usize>,
    base: GammaVector,
    log_post: Vec<f64>,
    /// `log p(k | gamma_m) - log p(k | gamma)`.
    log_k_ratio: Vec<f64>,
    omega: f64,
    balancing: BalancingFn,
}

impl ArniNeighbourhood {
    /// Enumerates the `2^{p_k}` models by Gray-code flips from `state`.
    pub fn build(
        state: &ModelState,
        order: &[usize],
        rates: &RateVector,
        omega: f64,
        balancing: BalancingFn,
        data: &Dataset,
        prior: &PriorSpec,
    ) -> Self {
        let pk = order.len();
        assert!(pk <= ENUMERATION_CEILING, "neighbourhood of {pk} variables is too large to enumerate");
        let total = 1usize << pk;
        let base = state.gamma().clone();
        let mut log_post = vec![f64::NEG_INFINITY; total];
        let mut log_k_ratio = vec![0.0; total];
        log_post[0] = state.log_post();
        let mut gamma = base.clone();
        let mut cur: Option<ModelState> = Some(state.clone());
        let mut mask = 0usize;
        for i in 1..total {
            let b = i.trailing_zeros() as usize;
            let j = order[b];
            let flip_ratio = rates.log_flip_ratio(j, gamma.get(j));
            let prev = mask;
            mask ^= 1 << b;
            gamma.flip(j);
            log_k_ratio[mask] = log_k_ratio[prev] + flip_ratio;
            cur = match cur.take() {
                Some(mut st) => st.flip_in_place(j, data, prior).ok().map(|_| st),
                None => None,
            }
            .or_else(|| make_model_state(data, prior, &gamma).ok());
            log_post[mask] = cur.as_ref().map_or(f64::NEG_INFINITY, |s| s.log_post());
        }
        ArniNeighbourhood {
            order: order.to_vec(),
            base,
            log_post,
            log_k_ratio,
            omega,
            balancing,
        }
    }

    pub fn p_k(&self) -> usize {
        self.order.len()
    }

    /// Number of posterior evaluations spent building the table.
    pub fn models_evaluated(&self) -> usize {
        self.log_post.len() - 1
    }

    pub fn gamma_for(&self, m: usize) -> GammaVector {
        let mut g = self.base.clone();
        for (b, &j) in self.order.iter().enumerate() {
            if m >> b & 1 == 1 {
                g.flip(j);
            }
        }
        g
    }

    pub fn log_post(&self, m: usize) -> f64 {
        self.log_post[m]
    }

    /// Unnormalised log proposal weights out of model `centre`.
    pub fn log_weights(&self, centre: usize) -> Vec<f64> {
        let pk = self.p_k() as f64;
        let (lo, l1o) = (self.omega.ln(), (-self.omega).ln_1p());
        let anchor = self.log_post[centre] + self.log_k_ratio[centre];
        (0..self.log_post.len())
            .map(|m| {
                let d = (m ^ centre).count_ones() as f64;
                let thin = d * lo + (pk - d) * l1o;
                self.balancing.log_balance(self.log_post[m] + self.log_k_ratio[m] - anchor) + thin
            })
            .collect()
    }

    /// Normalised `log q(centre -> m)` within the neighbourhood.
    pub fn log_proposal(&self, centre: usize, m: usize) -> f64 {
        let w = self.log_weights(centre);
        w[m] - log_sum_exp(&w)
    }

    /// Unclamped log acceptance ratio for moving from the base model to `m`,
    /// given the neighbourhood indicator stays fixed.
    pub fn log_accept_ratio(&self, m: usize) -> f64 {
        let fwd = self.log_proposal(0, m);
        let rev = self.log_proposal(m, 0);
        self.log_post[m] + self.log_k_ratio[m] + rev - self.log_post[0] - fwd
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, f64) {
        let w = self.log_weights(0);
        let z = log_sum_exp(&w);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = 0;
        for (m, &lw) in w.iter().enumerate() {
            if lw == f64::NEG_INFINITY {
                continue;
            }
            acc += (lw - z).exp();
            last = m;
            if u < acc {
                return (m, lw - z);
            }
        }
        (last, w[last] - z)
    }
}

/// `P(p_k > max_pk | gamma)` for independent `k_j ~ Bernoulli(xi * rate_j)`.
pub fn kth_tail_prob(rates: &RateVector, xi: f64, gamma: &GammaVector, max_pk: usize) -> f64 {
    // dist[c] = P(count = c) truncated at max_pk; the rest is the tail.
    let mut dist = vec![0.0; max_pk + 1];
    dist[0] = 1.0;
    for j in 0..gamma.len() {
        let r = (xi * rates.rate(j, gamma.get(j))).clamp(0.0, 1.0);
        for c in (0..=max_pk).rev() {
            let from_below = if c > 0 { dist[c - 1] * r } else { 0.0 };
            dist[c] = dist[c] * (1.0 - r) + from_below;
        }
    }
    (1.0 - dist.iter().sum::<f64>()).max(0.0)
}

/// One ARNI step. A neighbourhood larger than `max_pk` is redrawn once; if
/// the redraw is also too large the step is a rejection. The redraw changes
/// the law of `k` by the factor `1 + P(p_k > max_pk | gamma)`, which enters
/// the acceptance ratio so the kernel stays reversible.
pub fn arni_step<R: Rng + ?Sized>(
    state: &mut ModelState,
    params: &StepParams<'_>,
    data: &Dataset,
    prior: &PriorSpec,
    rng: &mut R,
) -> StepResult {
    let p = data.p();
    let max_pk = params.max_pk.min(ENUMERATION_CEILING);
    let mut k = sample_k(params.rates, params.xi, state.gamma(), rng);
    if k.p_k() > max_pk {
        k = sample_k(params.rates, params.xi, state.gamma(), rng);
        if k.p_k() > max_pk {
            return StepResult::rejected(state.gamma(), k.p_k(), 0);
        }
    }
    let nb = ArniNeighbourhood::build(state, &k.order, params.rates, params.omega, params.balancing, data, prior);
    let (m, log_fwd) = nb.sample(rng);
    let proposed = nb.gamma_for(m);
    let mut log_ratio = nb.log_post(m) + nb.log_k_ratio[m] + nb.log_proposal(m, 0) - nb.log_post(0) - log_fwd;
    if max_pk < p {
        let tail_cur = kth_tail_prob(params.rates, params.xi, state.gamma(), max_pk);
        let tail_new = kth_tail_prob(params.rates, params.xi, &proposed, max_pk);
        log_ratio += tail_new.ln_1p() - tail_cur.ln_1p();
    }
    let log_alpha = clamp_log_accept(log_ratio);
    let mut accepted = accept_draw(log_alpha, rng);
    if accepted && m != 0 {
        match move_to(state, &proposed, data, prior).or_else(|| make_model_state(data, prior, &proposed).ok()) {
            Some(st) => *state = st,
            None => accepted = false,
        }
    }
    StepResult {
        hamming_jump: m.count_ones() as usize,
        proposed,
        accepted,
        log_accept_prob: log_alpha,
        k_size: k.p_k(),
        models_evaluated: nb.models_evaluated(),
    }
}
