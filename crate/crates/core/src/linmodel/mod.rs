//! Conjugate spike-and-slab linear model: data, priors and the marginal
//! posterior over inclusion indicators.
//!
//! The likelihood is `y = alpha 1 + X_gamma beta_gamma + e` with a flat prior
//! on the intercept, `beta_gamma | sigma^2 ~ N(0, g sigma^2 V_gamma)` and
//! `p(sigma^2) ∝ 1/sigma^2`. Centering `y` and the columns of `X` removes the
//! intercept, which leaves the exponent `(n - 1) / 2` on the residual sum of
//! squares `S_gamma`.

pub(crate) mod enumerate;
mod state;

use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;

use crate::error::{BvsError, Result};

pub use enumerate::{enumerate_posterior, log_posterior_table, ExactPosterior, DEFAULT_MAX_ENUMERATE_P};
pub use state::{flip_model_state, make_model_state, rb_flip_logits, rb_flip_logits_naive, ModelState};

/// Above this many variables `X^T X` is not cached and Gram entries are
/// computed from the columns on demand.
pub const GRAM_CACHE_MAX_P: usize = 2000;

/// Centered regression data. `X` is stored column-major.
#[derive(Debug, Clone)]
pub struct Dataset {
    y: Vec<f64>,
    x: Vec<f64>,
    n: usize,
    p: usize,
    column_names: Option<Vec<String>>,
    yty: f64,
    xty: Vec<f64>,
    col_sq: Vec<f64>,
    gram: Option<Vec<f64>>,
}

impl Dataset {
    /// Builds a dataset from already-centered data given as columns.
    ///
    /// Fails unless `y` and every column sum to zero within `1e-9 * n`.
    pub fn from_centered(
        y: Vec<f64>,
        columns: Vec<Vec<f64>>,
        column_names: Option<Vec<String>>,
    ) -> Result<Self> {
        let n = y.len();
        validate_shape(&y, &columns)?;
        let tol = 1e-9 * n as f64;
        let ysum: f64 = y.iter().sum();
        if ysum.abs() > tol {
            return Err(BvsError::InvalidInput(format!(
                "response is not centered (sum = {ysum:e})"
            )));
        }
        for (j, col) in columns.iter().enumerate() {
            let s: f64 = col.iter().sum();
            if s.abs() > tol {
                return Err(BvsError::InvalidInput(format!(
                    "column {j} is not centered (sum = {s:e})"
                )));
            }
        }
        if let Some(names) = &column_names {
            if names.len() != columns.len() {
                return Err(BvsError::DimensionMismatch(format!(
                    "{} column names for {} columns",
                    names.len(),
                    columns.len()
                )));
            }
        }
        Ok(Self::assemble(y, columns, column_names))
    }

    fn assemble(y: Vec<f64>, columns: Vec<Vec<f64>>, column_names: Option<Vec<String>>) -> Self {
        let n = y.len();
        let p = columns.len();
        let mut x = Vec::with_capacity(n * p);
        for col in &columns {
            x.extend_from_slice(col);
        }
        let yty = dot(&y, &y);
        let xty: Vec<f64> = columns.iter().map(|c| dot(c, &y)).collect();
        let col_sq: Vec<f64> = columns.iter().map(|c| dot(c, c)).collect();
        let gram = (p <= GRAM_CACHE_MAX_P).then(|| {
            let mut g = vec![0.0; p * p];
            for i in 0..p {
                g[i * p + i] = col_sq[i];
                for j in (i + 1)..p {
                    let v = dot(&columns[i], &columns[j]);
                    g[i * p + j] = v;
                    g[j * p + i] = v;
                }
            }
            g
        });
        Dataset {
            y,
            x,
            n,
            p,
            column_names,
            yty,
            xty,
            col_sq,
            gram,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.x[j * self.n..(j + 1) * self.n]
    }

    pub fn column_names(&self) -> Option<&[String]> {
        self.column_names.as_deref()
    }

    /// Name of column `j`, falling back to `x{j}`.
    pub fn column_name(&self, j: usize) -> String {
        match &self.column_names {
            Some(names) => names[j].clone(),
            None => format!("x{j}"),
        }
    }

    pub fn yty(&self) -> f64 {
        self.yty
    }

    /// `x_j^T y`.
    pub fn xty(&self, j: usize) -> f64 {
        self.xty[j]
    }

    /// `x_i^T x_j`, served from the cached Gram matrix when available.
    pub fn gram(&self, i: usize, j: usize) -> f64 {
        match &self.gram {
            Some(g) => g[i * self.p + j],
            None if i == j => self.col_sq[i],
            None => dot(self.column(i), self.column(j)),
        }
    }

    pub fn has_gram_cache(&self) -> bool {
        self.gram.is_some()
    }
}

fn validate_shape(y: &[f64], columns: &[Vec<f64>]) -> Result<()> {
    let n = y.len();
    if n < 2 {
        return Err(BvsError::InvalidInput(format!("need n >= 2 observations, got {n}")));
    }
    if columns.is_empty() {
        return Err(BvsError::InvalidInput("need at least one covariate".into()));
    }
    for (j, col) in columns.iter().enumerate() {
        if col.len() != n {
            return Err(BvsError::DimensionMismatch(format!(
                "column {j} has {} rows, response has {n}",
                col.len()
            )));
        }
        if let Some(i) = col.iter().position(|v| !v.is_finite()) {
            return Err(BvsError::NonFinite {
                what: "design matrix",
                index: j * n + i,
            });
        }
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(BvsError::NonFinite {
            what: "response",
            index: i,
        });
    }
    Ok(())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Subtracts the mean from `raw_y` and from every column of `raw_x`.
///
/// Zero-variance columns are kept (they become all-zero) and logged.
pub fn center_data(raw_y: &[f64], raw_x: &[Vec<f64>]) -> Result<Dataset> {
    center_data_named(raw_y, raw_x, None)
}

pub(crate) fn center_data_named(
    raw_y: &[f64],
    raw_x: &[Vec<f64>],
    names: Option<Vec<String>>,
) -> Result<Dataset> {
    validate_shape(raw_y, raw_x)?;
    let y = centered(raw_y);
    let columns: Vec<Vec<f64>> = raw_x
        .iter()
        .enumerate()
        .map(|(j, col)| {
            let c = centered(col);
            if c.iter().all(|v| *v == 0.0) {
                log::warn!("column {j} has zero variance; retained as an all-zero column");
            }
            c
        })
        .collect();
    if let Some(names) = &names {
        if names.len() != columns.len() {
            return Err(BvsError::DimensionMismatch(format!(
                "{} column names for {} columns",
                names.len(),
                columns.len()
            )));
        }
    }
    Ok(Dataset::assemble(y, columns, names))
}

fn centered(v: &[f64]) -> Vec<f64> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| x - mean).collect()
}

/// Inclusion indicator `gamma` with a cached count of active variables.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct GammaVector {
    bits: Vec<bool>,
    p_gamma: usize,
}

impl GammaVector {
    pub fn empty(p: usize) -> Self {
        GammaVector {
            bits: vec![false; p],
            p_gamma: 0,
        }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        let p_gamma = bits.iter().filter(|b| **b).count();
        GammaVector { bits, p_gamma }
    }

    pub fn from_indices(p: usize, active: &[usize]) -> Self {
        let mut g = Self::empty(p);
        for &j in active {
            if !g.bits[j] {
                g.flip(j);
            }
        }
        g
    }

    /// Bit `j` of `mask` gives `gamma_j`. Requires `p <= 64`.
    pub fn from_mask(p: usize, mask: u64) -> Self {
        assert!(p <= 64);
        Self::from_bits((0..p).map(|j| mask >> j & 1 == 1).collect())
    }

    pub fn to_mask(&self) -> u64 {
        assert!(self.bits.len() <= 64);
        self.bits
            .iter()
            .enumerate()
            .fold(0u64, |m, (j, &b)| if b { m | 1 << j } else { m })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn p_gamma(&self) -> usize {
        self.p_gamma
    }

    pub fn get(&self, j: usize) -> bool {
        self.bits[j]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn flip(&mut self, j: usize) {
        self.bits[j] = !self.bits[j];
        if self.bits[j] {
            self.p_gamma += 1;
        } else {
            self.p_gamma -= 1;
        }
    }

    pub fn flipped(&self, j: usize) -> Self {
        let mut g = self.clone();
        g.flip(j);
        g
    }

    pub fn active(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter(|(_, b)| **b).map(|(j, _)| j)
    }

    pub fn inactive(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter(|(_, b)| !**b).map(|(j, _)| j)
    }

    /// Positions where `self` and `other` differ.
    pub fn diff(&self, other: &GammaVector) -> Vec<usize> {
        assert_eq!(self.len(), other.len());
        (0..self.len()).filter(|&j| self.bits[j] != other.bits[j]).collect()
    }

    pub fn hamming(&self, other: &GammaVector) -> usize {
        self.bits.iter().zip(&other.bits).filter(|(a, b)| a != b).count()
    }
}

impl fmt::Debug for GammaVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = self.bits.iter().map(|b| if *b { '1' } else { '0' }).collect();
        write!(f, "GammaVector({s})")
    }
}

/// Form of the slab covariance `V_gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VForm {
    /// `V_gamma = (X_gamma^T X_gamma)^{-1}`.
    Gprior,
    /// `V_gamma = I`.
    Identity,
}

/// Prior on the inclusion indicators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GammaPrior {
    /// Independent Bernoulli(h) inclusion.
    Fixed { h: f64 },
    /// `h ~ Beta(a, b)` integrated out.
    Betabinomial { a: f64, b: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub g: f64,
    pub v_form: VForm,
    pub gamma_prior: GammaPrior,
}

impl PriorSpec {
    pub fn new(g: f64, v_form: VForm, gamma_prior: GammaPrior) -> Result<Self> {
        let prior = PriorSpec {
            g,
            v_form,
            gamma_prior,
        };
        prior.validate()?;
        Ok(prior)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.g.is_finite() && self.g > 0.0) {
            return Err(BvsError::Config(format!("g must be positive, got {}", self.g)));
        }
        match self.gamma_prior {
            GammaPrior::Fixed { h } if !(h > 0.0 && h < 1.0) => {
                Err(BvsError::Config(format!("h must lie in (0, 1), got {h}")))
            }
            GammaPrior::Betabinomial { a, b } if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) => Err(
                BvsError::Config(format!("beta-binomial needs a, b > 0, got a = {a}, b = {b}")),
            ),
            _ => Ok(()),
        }
    }

    /// Prior mean inclusion probability.
    pub fn prior_inclusion(&self) -> f64 {
        match self.gamma_prior {
            GammaPrior::Fixed { h } => h,
            GammaPrior::Betabinomial { a, b } => a / (a + b),
        }
    }

    /// Multiplier `c` with `F_gamma = c X_gamma^T X_gamma + r I`.
    pub(crate) fn gram_scale(&self) -> f64 {
        match self.v_form {
            VForm::Identity => 1.0,
            VForm::Gprior => (1.0 + self.g) / self.g,
        }
    }

    /// Ridge `r` with `F_gamma = c X_gamma^T X_gamma + r I`.
    pub(crate) fn ridge(&self) -> f64 {
        match self.v_form {
            VForm::Identity => 1.0 / self.g,
            VForm::Gprior => 0.0,
        }
    }

    /// `log p(y | gamma)` from the size, `log det F_gamma` and `S_gamma`.
    pub(crate) fn log_ml_from_parts(&self, n: usize, p_gamma: usize, log_det_f: f64, s_gamma: f64) -> f64 {
        let resid = -0.5 * (n as f64 - 1.0) * s_gamma.ln();
        match self.v_form {
            VForm::Identity => -0.5 * p_gamma as f64 * self.g.ln() - 0.5 * log_det_f + resid,
            VForm::Gprior => -0.5 * p_gamma as f64 * (1.0 + self.g).ln() + resid,
        }
    }

    /// `log p(gamma)` for a model of the given size among `p` variables.
    pub fn log_prior_for_size(&self, p_gamma: usize, p: usize) -> f64 {
        let k = p_gamma as f64;
        let rest = (p - p_gamma) as f64;
        match self.gamma_prior {
            GammaPrior::Fixed { h } => k * h.ln() + rest * (-h).ln_1p(),
            GammaPrior::Betabinomial { a, b } => ln_beta(a + k, b + rest) - ln_beta(a, b),
        }
    }
}

/// `log p(gamma)` under `prior`.
pub fn log_model_prior(prior: &PriorSpec, gamma: &GammaVector, p: usize) -> f64 {
    prior.log_prior_for_size(gamma.p_gamma(), p)
}

/// `log p(y | gamma)` up to a `gamma`-independent constant.
pub fn log_marginal_likelihood(data: &Dataset, prior: &PriorSpec, gamma: &GammaVector) -> Result<f64> {
    Ok(make_model_state(data, prior, gamma)?.log_ml())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn centering_subtracts_means() {
        let d = center_data(&[1.0, 2.0, 3.0], &[vec![4.0, 6.0, 8.0]]).unwrap();
        assert_eq!(d.y(), &[-1.0, 0.0, 1.0]);
        assert_eq!(d.column(0), &[-2.0, 0.0, 2.0]);
    }

    #[test]
    fn centering_is_idempotent_on_centered_response() {
        let y = [-1.5, 0.5, 1.0];
        let d = center_data(&y, &[vec![1.0, 2.0, 4.0]]).unwrap();
        assert_eq!(d.y(), &y);
    }

    #[test]
    fn centered_random_columns_have_tiny_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y: Vec<f64> = (0..10).map(|_| rng.random::<f64>() * 5.0).collect();
        let cols: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..10).map(|_| rng.random::<f64>() * 100.0 - 20.0).collect())
            .collect();
        let d = center_data(&y, &cols).unwrap();
        for j in 0..3 {
            let m = d.column(j).iter().sum::<f64>() / 10.0;
            assert!(m.abs() < 1e-12, "column {j} mean {m}");
        }
    }

    #[test]
    fn centering_rejects_bad_input() {
        assert!(matches!(
            center_data(&[1.0, 2.0], &[vec![1.0, 2.0, 3.0]]),
            Err(BvsError::DimensionMismatch(_))
        ));
        assert!(matches!(
            center_data(&[1.0, f64::NAN], &[vec![1.0, 2.0]]),
            Err(BvsError::NonFinite { .. })
        ));
        assert!(matches!(
            center_data(&[1.0], &[vec![1.0]]),
            Err(BvsError::InvalidInput(_))
        ));
    }

    #[test]
    fn constant_column_is_retained() {
        let d = center_data(&[1.0, 2.0, 4.0], &[vec![3.0, 3.0, 3.0], vec![1.0, 0.0, 2.0]]).unwrap();
        assert_eq!(d.p(), 2);
        assert_eq!(d.column(0), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn from_centered_checks_invariant() {
        assert!(Dataset::from_centered(vec![1.0, 1.0], vec![vec![1.0, -1.0]], None).is_err());
        assert!(Dataset::from_centered(vec![1.0, -1.0], vec![vec![1.0, -1.0]], None).is_ok());
    }

    #[test]
    fn symmetric_fixed_prior_ignores_gamma() {
        let prior = PriorSpec::new(1.0, VForm::Identity, GammaPrior::Fixed { h: 0.5 }).unwrap();
        for mask in [0u64, 1, 0b1011, 0x3ff] {
            let g = GammaVector::from_mask(10, mask);
            assert_abs_diff_eq!(log_model_prior(&prior, &g, 10), 10.0 * 0.5f64.ln(), epsilon = 1e-12);
        }
    }

    #[test]
    fn empty_model_prior_under_sim_setting() {
        let p = 500;
        let h = 10.0 / p as f64;
        let prior = PriorSpec::new(9.0, VForm::Identity, GammaPrior::Fixed { h }).unwrap();
        let lp = log_model_prior(&prior, &GammaVector::empty(p), p);
        assert_abs_diff_eq!(lp, p as f64 * (1.0 - h).ln(), epsilon = 1e-10);
    }

    #[test]
    fn betabinomial_prior_normalizes() {
        for p in 1..=12usize {
            let prior = PriorSpec::new(1.0, VForm::Identity, GammaPrior::Betabinomial { a: 1.0, b: 1.0 }).unwrap();
            let total: f64 = (0..1u64 << p)
                .map(|m| log_model_prior(&prior, &GammaVector::from_mask(p, m), p).exp())
                .sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-10);
            let prior = PriorSpec::new(1.0, VForm::Identity, GammaPrior::Betabinomial { a: 2.5, b: 0.7 }).unwrap();
            let total: f64 = (0..1u64 << p)
                .map(|m| log_model_prior(&prior, &GammaVector::from_mask(p, m), p).exp())
                .sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn prior_validation() {
        assert!(PriorSpec::new(0.0, VForm::Identity, GammaPrior::Fixed { h: 0.1 }).is_err());
        assert!(PriorSpec::new(1.0, VForm::Identity, GammaPrior::Fixed { h: 1.0 }).is_err());
        assert!(PriorSpec::new(1.0, VForm::Gprior, GammaPrior::Betabinomial { a: 0.0, b: 1.0 }).is_err());
    }

    #[test]
    fn gamma_vector_bookkeeping() {
        let mut g = GammaVector::from_indices(6, &[1, 4]);
        assert_eq!(g.p_gamma(), 2);
        g.flip(1);
        g.flip(5);
        assert_eq!(g.p_gamma(), 2);
        assert_eq!(g.active().collect::<Vec<_>>(), vec![4, 5]);
        assert_eq!(GammaVector::from_mask(6, g.to_mask()), g);
        assert_eq!(g.hamming(&GammaVector::empty(6)), 2);
    }
}
