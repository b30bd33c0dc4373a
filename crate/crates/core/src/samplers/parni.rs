//! Point-wise implementation of the adaptive random neighbourhood informed
//! proposal (PARNI).

use rand::Rng;

use super::{accept_draw, clamp_log_accept, log_sum_exp2, StepParams, StepResult};
use crate::linmodel::{Dataset, ModelState, PriorSpec};
use crate::proposals::{sample_k, BalancingFn, RateVector};

/// Outcome of walking one neighbourhood order.
#[derive(Debug, Clone)]
pub struct ParniWalk {
    pub end: ModelState,
    /// Whether position `r` of the order was flipped.
    pub flips: Vec<bool>,
    /// `log q(gamma -> gamma' | k, K)`.
    pub log_q: f64,
    /// `sum_r log Z(r) - log Z'(r)`, the log acceptance ratio before clamping.
    pub log_z_ratio: f64,
    pub models_evaluated: usize,
}

/// Visits `order` one position at a time, choosing between staying and
/// flipping with probabilities proportional to
/// `g(pi(flip) p(k | flip) / (pi(cur) p(k | cur))) * omega` and `g(1) * (1 - omega)`.
///
/// `decide(r, log_p_flip)` picks the branch at position `r`, so callers can
/// sample (as in [`parni_step`]) or replay a prescribed path.
#[allow(clippy::too_many_arguments)]
pub fn parni_walk(
    state: &ModelState,
    order: &[usize],
    rates: &RateVector,
    omega: f64,
    balancing: BalancingFn,
    data: &Dataset,
    prior: &PriorSpec,
    mut decide: impl FnMut(usize, f64) -> bool,
) -> ParniWalk {
    let log_stay = balancing.log_balance(0.0) + (-omega).ln_1p();
    let log_omega = omega.ln();
    let mut cur = state.clone();
    let mut flips = Vec::with_capacity(order.len());
    let (mut log_q, mut log_z_ratio) = (0.0, 0.0);
    for (r, &j) in order.iter().enumerate() {
        let lp_flip = cur.peek_flip(j, data, prior);
        let log_t = lp_flip - cur.log_post() + rates.log_flip_ratio(j, cur.gamma().get(j));
        let log_flip = balancing.log_balance(log_t) + log_omega;
        let log_z = log_sum_exp2(log_stay, log_flip);
        let log_p_flip = log_flip - log_z;
        let flip = decide(r, log_p_flip);
        flips.push(flip);
        // From the model reached here the reverse walk sees t' = 1/t if
        // we flipped and t' = t otherwise.
        let log_z_rev = if flip && log_t.is_finite() {
            log_q += log_p_flip;
            cur.flip_in_place(j, data, prior).expect("finite flip target");
            log_sum_exp2(log_stay, balancing.log_balance(-log_t) + log_omega)
        } else if flip {
            log_q = f64::NEG_INFINITY;
            log_z
        } else {
            log_q += log_stay - log_z;
            log_z
        };
        log_z_ratio += log_z - log_z_rev;
    }
    ParniWalk {
        end: cur,
        flips,
        log_q,
        log_z_ratio,
        models_evaluated: order.len(),
    }
}

/// One PARNI step; the neighbourhood scale is taken from `params.xi`, which
/// the driver holds at 1.
pub fn parni_step<R: Rng + ?Sized>(
    state: &mut ModelState,
    params: &StepParams<'_>,
    data: &Dataset,
    prior: &PriorSpec,
    rng: &mut R,
) -> StepResult {
    let k = sample_k(params.rates, params.xi, state.gamma(), rng);
    let walk = parni_walk(state, &k.order, params.rates, params.omega, params.balancing, data, prior, |_, lp| {
        accept_draw(lp, rng)
    });
    let log_alpha = clamp_log_accept(walk.log_z_ratio);
    let accepted = accept_draw(log_alpha, rng);
    let proposed = walk.end.gamma().clone();
    let hamming_jump = walk.flips.iter().filter(|&&f| f).count();
    if accepted {
        *state = walk.end;
    }
    StepResult {
        proposed,
        accepted,
        log_accept_prob: log_alpha,
        hamming_jump,
        k_size: k.p_k(),
        models_evaluated: walk.models_evaluated,
    }
}
