//! Adaptively scaled individual (ASI) proposals and their random-neighbourhood
//! form (ARN).

use rand::Rng;

use super::{accept_draw, clamp_log_accept, move_to, StepParams, StepResult};
use crate::linmodel::{Dataset, GammaVector, ModelState, PriorSpec};
use crate::proposals::{logpmf_k, sample_k, thin_logpmf, thin_sample, NeighbourhoodIndicator, RateVector};

/// `log q(from -> to)` of the independent-flip proposal with scale `zeta`.
pub fn asi_log_proposal(rates: &RateVector, zeta: f64, from: &GammaVector, to: &GammaVector) -> f64 {
    (0..from.len())
        .map(|j| {
            let r = zeta * rates.rate(j, from.get(j));
            if from.get(j) != to.get(j) {
                r.ln()
            } else {
                (-r).ln_1p()
            }
        })
        .sum()
}

/// Unclamped log Metropolis-Hastings ratio of an ASI move; `zeta` cancels.
pub fn asi_log_accept(log_post: f64, log_post_new: f64, rates: &RateVector, from: &GammaVector, to: &GammaVector) -> f64 {
    log_post_new - log_post + rates.log_k_ratio(from, to)
}

/// Unclamped log ratio of an ARN move, written with the full neighbourhood
/// and thinning densities. It reduces to [`asi_log_accept`] for any `k`,
/// `xi` and `omega` with `to` in `N(from, k)`.
#[allow(clippy::too_many_arguments)]
pub fn arn_log_accept(
    log_post: f64,
    log_post_new: f64,
    rates: &RateVector,
    xi: f64,
    omega: f64,
    k: &NeighbourhoodIndicator,
    from: &GammaVector,
    to: &GammaVector,
) -> f64 {
    let fwd = logpmf_k(rates, xi, from, &k.k) + thin_logpmf(omega, k, from, to);
    let rev = logpmf_k(rates, xi, to, &k.k) + thin_logpmf(omega, k, to, from);
    log_post_new + rev - log_post - fwd
}

fn finish<R: Rng + ?Sized>(
    state: &mut ModelState,
    proposed: GammaVector,
    log_ratio: impl FnOnce(f64) -> f64,
    k_size: usize,
    data: &Dataset,
    prior: &PriorSpec,
    rng: &mut R,
) -> StepResult {
    let hamming_jump = state.gamma().hamming(&proposed);
    let cand = move_to(state, &proposed, data, prior);
    let log_alpha = match &cand {
        Some(c) => clamp_log_accept(log_ratio(c.log_post())),
        None => f64::NEG_INFINITY,
    };
    let accepted = accept_draw(log_alpha, rng);
    if accepted {
        if let Some(c) = cand {
            *state = c;
        }
    }
    StepResult {
        proposed,
        accepted,
        log_accept_prob: log_alpha,
        hamming_jump,
        k_size,
        models_evaluated: 1,
    }
}

/// Flips each `j` independently with probability `zeta * A_j` (excluded) or
/// `zeta * D_j` (included).
pub fn asi_step<R: Rng + ?Sized>(
    state: &mut ModelState,
    params: &StepParams<'_>,
    data: &Dataset,
    prior: &PriorSpec,
    rng: &mut R,
) -> StepResult {
    let mut proposed = state.gamma().clone();
    for j in 0..proposed.len() {
        if rng.random::<f64>() < params.zeta * params.rates.rate(j, state.gamma().get(j)) {
            proposed.flip(j);
        }
    }
    let lp = state.log_post();
    let from = state.gamma().clone();
    let d = from.hamming(&proposed);
    finish(state, proposed.clone(), |lpn| asi_log_accept(lp, lpn, params.rates, &from, &proposed), d, data, prior, rng)
}

/// Draws `k` with scale `xi`, then flips each member of `k` with probability `omega`.
pub fn arn_step<R: Rng + ?Sized>(
    state: &mut ModelState,
    params: &StepParams<'_>,
    data: &Dataset,
    prior: &PriorSpec,
    rng: &mut R,
) -> StepResult {
    let k = sample_k(params.rates, params.xi, state.gamma(), rng);
    let proposed = thin_sample(params.omega, &k, state.gamma(), rng);
    let lp = state.log_post();
    let from = state.gamma().clone();
    let (xi, omega) = (params.xi, params.omega);
    finish(
        state,
        proposed.clone(),
        |lpn| arn_log_accept(lp, lpn, params.rates, xi, omega, &k, &from, &proposed),
        k.p_k(),
        data,
        prior,
        rng,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linmodel::{center_data, log_posterior_table, make_model_state, GammaPrior, VForm};
    use crate::proposals::{optimal_rates, BalancingFn};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy(p: usize) -> (Dataset, PriorSpec) {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 25;
        let cols: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| rng.random::<f64>() - 0.5).collect()).collect();
        let y: Vec<f64> = (0..n).map(|i| cols[0][i] + 0.5 * (rng.random::<f64>() - 0.5)).collect();
        (
            center_data(&y, &cols).unwrap(),
            PriorSpec::new(9.0, VForm::Identity, GammaPrior::Fixed { h: 0.3 }).unwrap(),
        )
    }

    fn rates(p: usize) -> RateVector {
        let pi: Vec<f64> = (0..p).map(|j| 0.15 + 0.7 * j as f64 / p as f64).collect();
        optimal_rates(&pi, 0.001)
    }

    #[test]
    fn asi_detailed_balance_p3() {
        let (d, pr) = toy(3);
        let table = log_posterior_table(&d, &pr, 20).unwrap();
        let r = rates(3);
        let zeta = 0.7;
        for a in 0..8u64 {
            for b in 0..8u64 {
                if a == b {
                    continue;
                }
                let (ga, gb) = (GammaVector::from_mask(3, a), GammaVector::from_mask(3, b));
                let kern = |x: &GammaVector, y: &GammaVector, lx: f64, ly: f64| {
                    asi_log_proposal(&r, zeta, x, y) + clamp_log_accept(asi_log_accept(lx, ly, &r, x, y))
                };
                let (la, lb) = (table[a as usize], table[b as usize]);
                assert_abs_diff_eq!(la + kern(&ga, &gb, la, lb), lb + kern(&gb, &ga, lb, la), epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn arn_ratio_is_free_of_k_xi_omega() {
        let (d, pr) = toy(5);
        let table = log_posterior_table(&d, &pr, 20).unwrap();
        let r = rates(5);
        let from = GammaVector::from_mask(5, 0b00101);
        let to = GammaVector::from_mask(5, 0b01100);
        let base = asi_log_accept(table[0b00101], table[0b01100], &r, &from, &to);
        for (order, xi, omega) in [
            (vec![0, 2, 3], 0.5, 0.3),
            (vec![0, 1, 2, 3, 4], 0.9, 0.8),
            (vec![3, 0], 0.2, 0.05),
        ] {
            let k = NeighbourhoodIndicator::from_order(5, order);
            let full = arn_log_accept(table[0b00101], table[0b01100], &r, xi, omega, &k, &from, &to);
            assert_abs_diff_eq!(full, base, epsilon = 1e-10);
        }
    }

    #[test]
    fn arn_detailed_balance_p3() {
        let (d, pr) = toy(3);
        let table = log_posterior_table(&d, &pr, 20).unwrap();
        let r = rates(3);
        let (xi, omega) = (0.8, 0.4);
        // Kernel off the diagonal: sum over k of p(k|x) q_omega(y|x,k) alpha.
        let kernel = |x: u64, y: u64| -> f64 {
            let (gx, gy) = (GammaVector::from_mask(3, x), GammaVector::from_mask(3, y));
            (0..8u64)
                .map(|km| {
                    let order: Vec<usize> = (0..3).filter(|j| km >> j & 1 == 1).collect();
                    let k = NeighbourhoodIndicator::from_order(3, order);
                    let lq = logpmf_k(&r, xi, &gx, &k.k) + thin_logpmf(omega, &k, &gx, &gy);
                    let la = clamp_log_accept(arn_log_accept(table[x as usize], table[y as usize], &r, xi, omega, &k, &gx, &gy));
                    (lq + la).exp()
                })
                .sum()
        };
        for a in 0..8u64 {
            for b in (a + 1)..8u64 {
                let lhs = table[a as usize].exp() * kernel(a, b);
                let rhs = table[b as usize].exp() * kernel(b, a);
                assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()).max(1e-300), "{a}->{b}: {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn asi_step_is_consistent() {
        let (d, pr) = toy(6);
        let r = rates(6);
        let params = StepParams {
            rates: &r,
            zeta: 0.5,
            xi: 0.5,
            omega: 0.5,
            balancing: BalancingFn::Hastings,
            max_pk: 12,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut st = make_model_state(&d, &pr, &GammaVector::empty(6)).unwrap();
        for _ in 0..500 {
            let before = st.gamma().clone();
            let res = if rng.random::<bool>() {
                asi_step(&mut st, &params, &d, &pr, &mut rng)
            } else {
                arn_step(&mut st, &params, &d, &pr, &mut rng)
            };
            assert_eq!(res.hamming_jump, before.hamming(&res.proposed));
            let expect = if res.accepted { &res.proposed } else { &before };
            assert_eq!(st.gamma(), expect);
            let fresh = make_model_state(&d, &pr, st.gamma()).unwrap();
            assert_abs_diff_eq!(fresh.log_post(), st.log_post(), epsilon = 1e-8);
        }
    }
}
