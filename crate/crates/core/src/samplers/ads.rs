//! Add-delete-swap random-walk Metropolis-Hastings.

use rand::Rng;

use super::{accept_draw, clamp_log_accept, StepResult};
use crate::linmodel::{Dataset, ModelState, PriorSpec};

fn nth_where(bits: &[bool], want: bool, r: usize) -> usize {
    bits.iter()
        .enumerate()
        .filter(|(_, &b)| b == want)
        .nth(r)
        .map(|(j, _)| j)
        .expect("index within count")
}

/// Picks add, delete or swap with probability 1/3 each. An infeasible move
/// (add at the full model, delete or swap at the empty one, swap at the
/// full one) is an automatic rejection.
pub fn ads_step<R: Rng + ?Sized>(state: &mut ModelState, data: &Dataset, prior: &PriorSpec, rng: &mut R) -> StepResult {
    let p = data.p();
    let pg = state.p_gamma();
    let bits = state.gamma().bits().to_vec();
    let (flips, log_q_ratio): (Vec<usize>, f64) = match rng.random_range(0..3u8) {
        0 => {
            if pg == p {
                return StepResult::rejected(state.gamma(), 0, 0);
            }
            let j = nth_where(&bits, false, rng.random_range(0..p - pg));
            (vec![j], ((p - pg) as f64).ln() - ((pg + 1) as f64).ln())
        }
        1 => {
            if pg == 0 {
                return StepResult::rejected(state.gamma(), 0, 0);
            }
            let j = nth_where(&bits, true, rng.random_range(0..pg));
            (vec![j], (pg as f64).ln() - ((p - pg + 1) as f64).ln())
        }
        _ => {
            if pg == 0 || pg == p {
                return StepResult::rejected(state.gamma(), 0, 0);
            }
            let i = nth_where(&bits, true, rng.random_range(0..pg));
            let j = nth_where(&bits, false, rng.random_range(0..p - pg));
            (vec![i, j], 0.0)
        }
    };

    let mut cand = state.clone();
    let ok = flips.iter().all(|&j| cand.flip_in_place(j, data, prior).is_ok());
    let proposed = {
        let mut g = state.gamma().clone();
        flips.iter().for_each(|&j| g.flip(j));
        g
    };
    let log_alpha = if ok {
        clamp_log_accept(cand.log_post() - state.log_post() + log_q_ratio)
    } else {
        f64::NEG_INFINITY
    };
    let accepted = accept_draw(log_alpha, rng);
    if accepted {
        *state = cand;
    }
    StepResult {
        proposed,
        accepted,
        log_accept_prob: log_alpha,
        hamming_jump: flips.len(),
        k_size: flips.len(),
        models_evaluated: 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linmodel::{center_data, enumerate_posterior, make_model_state, GammaPrior, GammaVector, VForm};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy() -> (Dataset, PriorSpec) {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (n, p) = (30, 4);
        let cols: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| rng.random::<f64>() - 0.5).collect()).collect();
        let y: Vec<f64> = (0..n).map(|i| cols[0][i] - 0.6 * cols[2][i] + 0.4 * (rng.random::<f64>() - 0.5)).collect();
        let d = center_data(&y, &cols).unwrap();
        let pr = PriorSpec::new(9.0, VForm::Identity, GammaPrior::Fixed { h: 0.4 }).unwrap();
        (d, pr)
    }

    #[test]
    fn infeasible_moves_reject() {
        let (d, pr) = toy();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut st = make_model_state(&d, &pr, &GammaVector::empty(4)).unwrap();
        for _ in 0..200 {
            let before = st.gamma().clone();
            let r = ads_step(&mut st, &d, &pr, &mut rng);
            if r.hamming_jump == 0 {
                assert!(!r.accepted);
                assert_eq!(r.log_accept_prob, f64::NEG_INFINITY);
                assert_eq!(st.gamma(), &before);
            }
            assert!(r.log_accept_prob <= 0.0);
        }
    }

    #[test]
    fn stationary_distribution_matches_enumeration() {
        let (d, pr) = toy();
        let exact = enumerate_posterior(&d, &pr, 20).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut st = make_model_state(&d, &pr, &GammaVector::empty(4)).unwrap();
        let mut counts = [0usize; 16];
        let iters = 400_000;
        for _ in 0..iters {
            ads_step(&mut st, &d, &pr, &mut rng);
            counts[st.gamma().to_mask() as usize] += 1;
        }
        let tv: f64 = counts
            .iter()
            .zip(&exact.log_probs)
            .map(|(&c, lp)| (c as f64 / iters as f64 - lp.exp()).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.01, "total variation {tv}");
    }
}
