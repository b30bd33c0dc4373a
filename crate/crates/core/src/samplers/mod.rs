//! Metropolis-Hastings kernels over inclusion indicators and the multi-chain
//! driver.
//!
//! Every kernel mutates a [`ModelState`] in place and reports a
//! [`StepResult`]. Acceptance uses `log U < log alpha`.

mod ads;
mod arni;
mod driver;
mod individual;
mod parni;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::BvsError;
use crate::linmodel::{Dataset, GammaVector, ModelState, PriorSpec};
use crate::proposals::{BalancingFn, RateVector};

pub use ads::ads_step;
pub use arni::{arni_step, kth_tail_prob, ArniNeighbourhood, DEFAULT_MAX_PK};
pub use driver::{run_chains, ChainEnsemble, RunConfig};
pub use individual::{arn_log_accept, arn_step, asi_log_accept, asi_log_proposal, asi_step};
pub use parni::{parni_step, parni_walk, ParniWalk};

/// Per-step quantities feeding acceptance and jumping-distance statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub proposed: GammaVector,
    pub accepted: bool,
    /// `log alpha`, always `<= 0`; `-inf` for forced rejections.
    pub log_accept_prob: f64,
    /// Hamming distance between the current state and the proposal.
    pub hamming_jump: usize,
    pub k_size: usize,
    pub models_evaluated: usize,
}

impl StepResult {
    pub fn accept_prob(&self) -> f64 {
        self.log_accept_prob.exp()
    }

    /// `hamming_jump^2` weighted by the acceptance probability.
    pub fn squared_jump(&self) -> f64 {
        let h = self.hamming_jump as f64;
        h * h * self.accept_prob()
    }

    pub(crate) fn rejected(current: &GammaVector, k_size: usize, models_evaluated: usize) -> Self {
        StepResult {
            proposed: current.clone(),
            accepted: false,
            log_accept_prob: f64::NEG_INFINITY,
            hamming_jump: 0,
            k_size,
            models_evaluated,
        }
    }
}

/// Frozen tuning parameters seen by one chain for one step.
#[derive(Debug, Clone, Copy)]
pub struct StepParams<'a> {
    pub rates: &'a RateVector,
    pub zeta: f64,
    pub xi: f64,
    pub omega: f64,
    pub balancing: BalancingFn,
    pub max_pk: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Ads,
    Asi,
    Arn,
    Arni,
    ParniRm,
    ParniKw,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 6] = [
        SamplerKind::Ads,
        SamplerKind::Asi,
        SamplerKind::Arn,
        SamplerKind::Arni,
        SamplerKind::ParniRm,
        SamplerKind::ParniKw,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Ads => "ads",
            SamplerKind::Asi => "asi",
            SamplerKind::Arn => "arn",
            SamplerKind::Arni => "arni",
            SamplerKind::ParniRm => "parni_rm",
            SamplerKind::ParniKw => "parni_kw",
        }
    }

    pub fn is_parni(self) -> bool {
        matches!(self, SamplerKind::ParniRm | SamplerKind::ParniKw)
    }

    /// Default target acceptance rate.
    pub fn default_tau(self) -> f64 {
        match self {
            SamplerKind::Asi | SamplerKind::Arn => 0.234,
            _ => crate::adapt::DEFAULT_TAU,
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SamplerKind {
    type Err = BvsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SamplerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| BvsError::Config(format!("unknown sampler `{s}` (expected one of ads, asi, arn, arni, parni_rm, parni_kw)")))
    }
}

/// One step of `kind` on `state`.
pub fn step<R: Rng + ?Sized>(
    kind: SamplerKind,
    state: &mut ModelState,
    params: &StepParams<'_>,
    data: &Dataset,
    prior: &PriorSpec,
    rng: &mut R,
) -> StepResult {
    match kind {
        SamplerKind::Ads => ads_step(state, data, prior, rng),
        SamplerKind::Asi => asi_step(state, params, data, prior, rng),
        SamplerKind::Arn => arn_step(state, params, data, prior, rng),
        SamplerKind::Arni => arni_step(state, params, data, prior, rng),
        SamplerKind::ParniRm | SamplerKind::ParniKw => parni_step(state, params, data, prior, rng),
    }
}

#[inline]
pub(crate) fn accept_draw<R: Rng + ?Sized>(log_alpha: f64, rng: &mut R) -> bool {
    rng.random::<f64>().ln() < log_alpha
}

/// `min(0, log_ratio)` with NaN mapped to `-inf`.
#[inline]
pub(crate) fn clamp_log_accept(log_ratio: f64) -> f64 {
    if log_ratio.is_nan() {
        f64::NEG_INFINITY
    } else {
        log_ratio.min(0.0)
    }
}

/// State for `target` reached by flipping the differing positions of `state`.
/// `None` when an intermediate or final model is singular.
pub(crate) fn move_to(state: &ModelState, target: &GammaVector, data: &Dataset, prior: &PriorSpec) -> Option<ModelState> {
    let mut st = state.clone();
    // Deletions first keeps the factor small while adding.
    let diff = state.gamma().diff(target);
    for &j in diff.iter().filter(|&&j| state.gamma().get(j)) {
        st.flip_in_place(j, data, prior).ok()?;
    }
    for &j in diff.iter().filter(|&&j| !state.gamma().get(j)) {
        st.flip_in_place(j, data, prior).ok()?;
    }
    Some(st)
}

pub(crate) fn log_sum_exp2(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}
