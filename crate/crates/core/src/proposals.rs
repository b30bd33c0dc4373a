//! Neighbourhood construction, thinning and balancing functions shared by the
//! adaptive samplers. All masses are handled on the log scale; `-inf` means
//! zero mass.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{BvsError, Result};
use crate::linmodel::GammaVector;

/// Default bound keeping adaptive parameters away from 0 and 1.
pub const DEFAULT_EPS: f64 = 0.001;

const LOGIT_BOUND: f64 = 30.0;

/// `log(x - eps) - log(1 - x - eps)` on `(eps, 1 - eps)`.
pub fn logit_eps(x: f64, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(BvsError::Domain {
            value: eps,
            lo: 0.0,
            hi: 0.5,
        });
    }
    if !(x > eps && x < 1.0 - eps) {
        return Err(BvsError::Domain {
            value: x,
            lo: eps,
            hi: 1.0 - eps,
        });
    }
    Ok((x - eps).ln() - (1.0 - x - eps).ln())
}

/// Inverse of [`logit_eps`]; maps the real line into `(eps, 1 - eps)`.
///
/// `u` is held to `[-30, 30]` so the result stays strictly inside
/// `(eps, 1 - eps)` in floating point.
pub fn inv_logit_eps(u: f64, eps: f64) -> f64 {
    eps + (1.0 - 2.0 * eps) * logistic(u.clamp(-LOGIT_BOUND, LOGIT_BOUND))
}

pub fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Addition and deletion rates `eta = (A, D)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateVector {
    pub add: Vec<f64>,
    pub del: Vec<f64>,
}

impl RateVector {
    pub fn len(&self) -> usize {
        self.add.len()
    }

    pub fn is_empty(&self) -> bool {
        self.add.is_empty()
    }

    /// Rate for position `j` given its current state.
    #[inline]
    pub fn rate(&self, j: usize, active: bool) -> f64 {
        if active {
            self.del[j]
        } else {
            self.add[j]
        }
    }

    /// `log p(k_j = 1 | 1 - gamma_j) - log p(k_j = 1 | gamma_j)`, which is
    /// free of the scaling applied to the rates.
    #[inline]
    pub fn log_flip_ratio(&self, j: usize, active: bool) -> f64 {
        if active {
            self.add[j].ln() - self.del[j].ln()
        } else {
            self.del[j].ln() - self.add[j].ln()
        }
    }

    /// Sum of the `log_flip_ratio` terms along the positions where `from`
    /// and `to` differ: `log p(k | to) - log p(k | from)` for any `k`
    /// covering those positions.
    pub fn log_k_ratio(&self, from: &GammaVector, to: &GammaVector) -> f64 {
        from.diff(to).into_iter().map(|j| self.log_flip_ratio(j, from.get(j))).sum()
    }
}

/// `A_j = min(1, pi_j / (1 - pi_j))`, `D_j = min(1, (1 - pi_j) / pi_j)`,
/// each clipped to `[eps, 1 - eps]`.
pub fn optimal_rates(pi_tilde: &[f64], eps: f64) -> RateVector {
    let clip = |v: f64| v.clamp(eps, 1.0 - eps);
    let add = pi_tilde.iter().map(|&q| clip((q / (1.0 - q)).min(1.0))).collect();
    let del = pi_tilde.iter().map(|&q| clip(((1.0 - q) / q).min(1.0))).collect();
    RateVector { add, del }
}

/// Neighbourhood indicator `k` plus the visiting order of its set positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighbourhoodIndicator {
    pub k: Vec<bool>,
    pub order: Vec<usize>,
}

impl NeighbourhoodIndicator {
    pub fn from_order(p: usize, order: Vec<usize>) -> Self {
        let mut k = vec![false; p];
        for &j in &order {
            k[j] = true;
        }
        NeighbourhoodIndicator { k, order }
    }

    pub fn p_k(&self) -> usize {
        self.order.len()
    }

    /// `gamma'` lies in `N(gamma, k)`.
    pub fn contains(&self, gamma: &GammaVector, other: &GammaVector) -> bool {
        (0..gamma.len()).all(|j| self.k[j] || gamma.get(j) == other.get(j))
    }
}

/// Draws `k_j ~ Bernoulli(xi * rate_j(gamma_j))` independently, then shuffles
/// the set positions uniformly.
pub fn sample_k<R: Rng + ?Sized>(rates: &RateVector, xi: f64, gamma: &GammaVector, rng: &mut R) -> NeighbourhoodIndicator {
    let p = gamma.len();
    let mut k = vec![false; p];
    let mut order = Vec::new();
    for (j, kj) in k.iter_mut().enumerate() {
        if rng.random::<f64>() < xi * rates.rate(j, gamma.get(j)) {
            *kj = true;
            order.push(j);
        }
    }
    order.shuffle(rng);
    NeighbourhoodIndicator { k, order }
}

/// Exact `log p(k | gamma)` of the product-Bernoulli neighbourhood law.
pub fn logpmf_k(rates: &RateVector, xi: f64, gamma: &GammaVector, k: &[bool]) -> f64 {
    (0..gamma.len())
        .map(|j| {
            let r = xi * rates.rate(j, gamma.get(j));
            if k[j] {
                r.ln()
            } else {
                (-r).ln_1p()
            }
        })
        .sum()
}

/// Flips each position in the neighbourhood independently with probability `omega`.
pub fn thin_sample<R: Rng + ?Sized>(omega: f64, k: &NeighbourhoodIndicator, gamma: &GammaVector, rng: &mut R) -> GammaVector {
    let mut out = gamma.clone();
    for (j, &kj) in k.k.iter().enumerate() {
        if kj && rng.random::<f64>() < omega {
            out.flip(j);
        }
    }
    out
}

/// `d_H log(omega) + (p_k - d_H) log(1 - omega)`, or `-inf` outside `N(gamma, k)`.
pub fn thin_logpmf(omega: f64, k: &NeighbourhoodIndicator, gamma: &GammaVector, gamma_prime: &GammaVector) -> f64 {
    if !k.contains(gamma, gamma_prime) {
        return f64::NEG_INFINITY;
    }
    let d = gamma.hamming(gamma_prime) as f64;
    d * omega.ln() + (k.p_k() as f64 - d) * (-omega).ln_1p()
}

/// Balancing function `g` with `g(t) = t g(1/t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BalancingFn {
    /// `min(1, t)`.
    #[default]
    Hastings,
    /// `t / (1 + t)`.
    Barker,
    /// `sqrt(t)`.
    Sqrt,
}

impl BalancingFn {
    /// `log g(t)` given `log t`.
    pub fn log_balance(self, log_t: f64) -> f64 {
        if log_t == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        match self {
            BalancingFn::Hastings => log_t.min(0.0),
            BalancingFn::Barker => {
                // log t - log(1 + t), stable in both tails.
                if log_t > 0.0 {
                    -(-log_t).exp().ln_1p()
                } else {
                    log_t - log_t.exp().ln_1p()
                }
            }
            BalancingFn::Sqrt => 0.5 * log_t,
        }
    }
}

/// Free-function form of [`BalancingFn::log_balance`].
pub fn balance(f: BalancingFn, log_t: f64) -> f64 {
    f.log_balance(log_t)
}
