//! Exact posterior over all `2^p` models for small `p`.

use super::{make_model_state, Dataset, GammaVector, ModelState, PriorSpec};
use crate::error::{BvsError, Result};

pub const DEFAULT_MAX_ENUMERATE_P: usize = 20;

/// Normalised model probabilities indexed by bit mask (bit `j` = `gamma_j`)
/// and the implied inclusion probabilities.
#[derive(Debug, Clone)]
pub struct ExactPosterior {
    pub log_probs: Vec<f64>,
    pub pips: Vec<f64>,
}

impl ExactPosterior {
    /// Exact posterior mean of `p_gamma`.
    pub fn mean_model_size(&self) -> f64 {
        self.pips.iter().sum()
    }
}

/// Unnormalised `log pi(gamma | y)` for every mask, visited in Gray-code order
/// so that consecutive models differ by one flip. Models that are singular
/// under the g-prior get `-inf`.
pub fn log_posterior_table(data: &Dataset, prior: &PriorSpec, max_p: usize) -> Result<Vec<f64>> {
    let p = data.p();
    if p > max_p || p >= 64 {
        return Err(BvsError::EnumerationCap { p, max_p });
    }
    let total = 1usize << p;
    let mut table = vec![f64::NEG_INFINITY; total];
    let mut gamma = GammaVector::empty(p);
    let mut state: Option<ModelState> = Some(make_model_state(data, prior, &gamma)?);
    table[0] = state.as_ref().map_or(f64::NEG_INFINITY, |s| s.log_post());
    for i in 1..total {
        let j = i.trailing_zeros() as usize;
        gamma.flip(j);
        state = match state.take() {
            Some(mut st) => st.flip_in_place(j, data, prior).ok().map(|_| st),
            None => None,
        }
        .or_else(|| make_model_state(data, prior, &gamma).ok());
        let mask = gamma.to_mask() as usize;
        table[mask] = state.as_ref().map_or(f64::NEG_INFINITY, |s| s.log_post());
    }
    Ok(table)
}

/// Exact posterior by Gray-code enumeration. Refuses `p > max_p`.
pub fn enumerate_posterior(data: &Dataset, prior: &PriorSpec, max_p: usize) -> Result<ExactPosterior> {
    let table = log_posterior_table(data, prior, max_p)?;
    Ok(normalise(data.p(), &table))
}

pub(crate) fn normalise(p: usize, table: &[f64]) -> ExactPosterior {
    let lse = log_sum_exp(table);
    let log_probs: Vec<f64> = table.iter().map(|v| v - lse).collect();
    let mut pips = vec![0.0; p];
    for (mask, lp) in log_probs.iter().enumerate() {
        let w = lp.exp();
        for (j, pip) in pips.iter_mut().enumerate() {
            if mask >> j & 1 == 1 {
                *pip += w;
            }
        }
    }
    pips.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    ExactPosterior { log_probs, pips }
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
