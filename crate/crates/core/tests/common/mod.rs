//! Exact transition matrices of the samplers on tiny problems, built by
//! summing over every auxiliary choice a step can make.

#![allow(dead_code)]

use bvs_core::linmodel::{center_data, log_posterior_table, make_model_state, Dataset, GammaVector, PriorSpec};
use bvs_core::proposals::{logpmf_k, optimal_rates, thin_logpmf, BalancingFn, NeighbourhoodIndicator, RateVector};
use bvs_core::samplers::{
    arn_log_accept, asi_log_accept, asi_log_proposal, kth_tail_prob, parni_walk, ArniNeighbourhood,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Matrix = Vec<Vec<f64>>;

pub fn toy_data(n: usize, p: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cols: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| rng.random::<f64>() - 0.5).collect()).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| cols[0][i] - 0.7 * cols[p - 1][i] + 0.5 * (rng.random::<f64>() - 0.5))
        .collect();
    center_data(&y, &cols).unwrap()
}

pub fn random_rates(p: usize, rng: &mut impl Rng) -> RateVector {
    let pi: Vec<f64> = (0..p).map(|_| 0.05 + 0.9 * rng.random::<f64>()).collect();
    optimal_rates(&pi, 0.001)
}

fn clamp(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v.min(0.0)
    }
}

fn fill_diagonal(mut k: Matrix) -> Matrix {
    for (x, row) in k.iter_mut().enumerate() {
        let off: f64 = row.iter().enumerate().filter(|(y, _)| *y != x).map(|(_, v)| v).sum();
        row[x] = 1.0 - off;
    }
    k
}

fn gammas(p: usize) -> Vec<GammaVector> {
    (0..1u64 << p).map(|m| GammaVector::from_mask(p, m)).collect()
}

fn masks(p: usize) -> impl Iterator<Item = (u64, Vec<usize>, NeighbourhoodIndicator)> {
    (0..1u64 << p).map(move |km| {
        let order: Vec<usize> = (0..p).filter(|j| km >> j & 1 == 1).collect();
        (km, order.clone(), NeighbourhoodIndicator::from_order(p, order))
    })
}

/// Independent-flip proposal with scale `zeta`.
pub fn asi_kernel(table: &[f64], rates: &RateVector, zeta: f64) -> Matrix {
    let p = rates.len();
    let g = gammas(p);
    let k = (0..g.len())
        .map(|x| {
            (0..g.len())
                .map(|y| {
                    if x == y {
                        return 0.0;
                    }
                    let lq = asi_log_proposal(rates, zeta, &g[x], &g[y]);
                    (lq + clamp(asi_log_accept(table[x], table[y], rates, &g[x], &g[y]))).exp()
                })
                .collect()
        })
        .collect();
    fill_diagonal(k)
}

/// Random neighbourhood with thinning, summed over every `k`.
pub fn arn_kernel(table: &[f64], rates: &RateVector, xi: f64, omega: f64) -> Matrix {
    let p = rates.len();
    let g = gammas(p);
    let mut k = vec![vec![0.0; g.len()]; g.len()];
    for x in 0..g.len() {
        for (_, _, nb) in masks(p) {
            let lpk = logpmf_k(rates, xi, &g[x], &nb.k);
            for y in 0..g.len() {
                if x == y {
                    continue;
                }
                let lq = thin_logpmf(omega, &nb, &g[x], &g[y]);
                if lq == f64::NEG_INFINITY {
                    continue;
                }
                let la = clamp(arn_log_accept(table[x], table[y], rates, xi, omega, &nb, &g[x], &g[y]));
                k[x][y] += (lpk + lq + la).exp();
            }
        }
    }
    fill_diagonal(k)
}

/// Informed within-neighbourhood proposal, including the size guard.
#[allow(clippy::too_many_arguments)]
pub fn arni_kernel(
    data: &Dataset,
    prior: &PriorSpec,
    rates: &RateVector,
    xi: f64,
    omega: f64,
    f: BalancingFn,
    max_pk: usize,
) -> Matrix {
    let p = data.p();
    let g = gammas(p);
    let mut k = vec![vec![0.0; g.len()]; g.len()];
    for x in 0..g.len() {
        let st = make_model_state(data, prior, &g[x]).unwrap();
        let tail_x = kth_tail_prob(rates, xi, &g[x], max_pk);
        for (_, order, nb) in masks(p) {
            if order.len() > max_pk {
                continue;
            }
            let lpk = logpmf_k(rates, xi, &g[x], &nb.k) + tail_x.ln_1p();
            let arni = ArniNeighbourhood::build(&st, &order, rates, omega, f, data, prior);
            for m in 1..1usize << order.len() {
                let gy = arni.gamma_for(m);
                let mut lr = arni.log_accept_ratio(m);
                if max_pk < p {
                    lr += kth_tail_prob(rates, xi, &gy, max_pk).ln_1p() - tail_x.ln_1p();
                }
                k[x][gy.to_mask() as usize] += (lpk + arni.log_proposal(0, m) + clamp(lr)).exp();
            }
        }
    }
    fill_diagonal(k)
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.is_empty() {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

/// Point-wise informed proposal (neighbourhood scale 1), summed over `k`,
/// every ordering of its members and every stay/flip path.
pub fn parni_kernel(data: &Dataset, prior: &PriorSpec, rates: &RateVector, omega: f64, f: BalancingFn) -> Matrix {
    let p = data.p();
    let g = gammas(p);
    let mut k = vec![vec![0.0; g.len()]; g.len()];
    for x in 0..g.len() {
        let st = make_model_state(data, prior, &g[x]).unwrap();
        for (_, members, nb) in masks(p) {
            let lpk = logpmf_k(rates, 1.0, &g[x], &nb.k);
            let perms = permutations(&members);
            let lperm = -(perms.len() as f64).ln();
            for order in &perms {
                for path in 0..1usize << order.len() {
                    let w = parni_walk(&st, order, rates, omega, f, data, prior, |r, _| path >> r & 1 == 1);
                    let y = w.end.gamma().to_mask() as usize;
                    if w.log_q == f64::NEG_INFINITY || y == x {
                        continue;
                    }
                    k[x][y] += (lpk + lperm + w.log_q + clamp(w.log_z_ratio)).exp();
                }
            }
        }
    }
    fill_diagonal(k)
}

/// Largest `|pi_x P_xy - pi_y P_yx|` relative to the larger flow.
pub fn balance_violation(log_post: &[f64], k: &Matrix) -> f64 {
    let m = log_post.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pi: Vec<f64> = log_post.iter().map(|v| (v - m).exp()).collect();
    let mut worst: f64 = 0.0;
    for x in 0..pi.len() {
        for y in (x + 1)..pi.len() {
            let (a, b) = (pi[x] * k[x][y], pi[y] * k[y][x]);
            let scale = a.abs().max(b.abs());
            if scale > 0.0 {
                worst = worst.max((a - b).abs() / scale);
            }
        }
    }
    worst
}

pub fn max_entry_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(r, s)| r.iter().zip(s).map(|(u, v)| (u - v).abs()))
        .fold(0.0, f64::max)
}

pub fn table(data: &Dataset, prior: &PriorSpec) -> Vec<f64> {
    log_posterior_table(data, prior, 20).unwrap()
}

/// Largest gap between the reduced and the full log acceptance ratio of a
/// point-wise informed move over `instances` random problems with `p <= 6`.
pub fn reduced_acceptance_max_error(instances: usize, seed: u64, priors: &[PriorSpec]) -> f64 {
    use rand::seq::SliceRandom;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fns = [BalancingFn::Hastings, BalancingFn::Barker, BalancingFn::Sqrt];
    let mut worst: f64 = 0.0;
    for inst in 0..instances {
        let p = rng.random_range(1..=6);
        let data = toy_data(15 + p, p, seed.wrapping_add(inst as u64));
        let prior = &priors[inst % priors.len()];
        let rates = random_rates(p, &mut rng);
        let omega = 0.02 + 0.96 * rng.random::<f64>();
        let f = fns[inst % fns.len()];
        let gamma = GammaVector::from_mask(p, rng.random_range(0..1u64 << p));
        let st = make_model_state(&data, prior, &gamma).unwrap();
        let mut order: Vec<usize> = (0..p).filter(|_| rng.random::<bool>()).collect();
        order.shuffle(&mut rng);
        let fwd = parni_walk(&st, &order, &rates, omega, f, &data, prior, |_, lp| rng.random::<f64>().ln() < lp);
        let rev_order: Vec<usize> = order.iter().rev().copied().collect();
        let rev_flips: Vec<bool> = fwd.flips.iter().rev().copied().collect();
        let rev = parni_walk(&fwd.end, &rev_order, &rates, omega, f, &data, prior, |r, _| rev_flips[r]);
        assert_eq!(rev.end.gamma(), st.gamma());
        let full = fwd.end.log_post() - st.log_post() + rates.log_k_ratio(st.gamma(), fwd.end.gamma()) + rev.log_q - fwd.log_q;
        let reduced = fwd.log_z_ratio;
        // Both sides are clamped at zero in the acceptance probability.
        worst = worst.max((clamp(reduced) - clamp(full)).abs()).max((reduced - full).abs());
    }
    worst
}
