//! Incremental Cholesky bookkeeping for `F_gamma = X_gamma^T X_gamma + (g V_gamma)^{-1}`.

use std::sync::atomic::{AtomicBool, Ordering};

use super::{Dataset, GammaVector, PriorSpec, VForm};
use crate::error::{BvsError, Result};

/// Deletions from factors up to this size use a column-removal update;
/// larger factors are rebuilt from scratch.
pub const DOWNDATE_MAX_SIZE: usize = 64;

/// Squared pivots below this fraction of the diagonal are treated as singular
/// under the g-prior.
const SINGULAR_RTOL: f64 = 1e-10;

const S_FLOOR: f64 = 1e-300;

static S_CLAMP_WARNED: AtomicBool = AtomicBool::new(false);

fn clamp_residual(s: f64) -> f64 {
    if s > S_FLOOR {
        return s;
    }
    if !S_CLAMP_WARNED.swap(true, Ordering::Relaxed) {
        log::warn!("residual quadratic form S_gamma = {s:e} clamped to {S_FLOOR:e}; near-perfect fit");
    }
    S_FLOOR
}

#[inline]
fn row_start(i: usize) -> usize {
    i * (i + 1) / 2
}

/// Posterior state of one model, kept consistent under single-variable flips.
///
/// `chol` is the packed lower-triangular factor of `F_gamma` with rows in the
/// order of `active()`.
#[derive(Debug, Clone)]
pub struct ModelState {
    gamma: GammaVector,
    active: Vec<usize>,
    chol: Vec<f64>,
    xty: Vec<f64>,
    z: Vec<f64>,
    s_gamma: f64,
    log_det: f64,
    log_ml: f64,
    log_prior: f64,
    log_post: f64,
}

impl ModelState {
    pub fn gamma(&self) -> &GammaVector {
        &self.gamma
    }

    /// Active variables in factor order.
    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn p_gamma(&self) -> usize {
        self.active.len()
    }

    /// Packed lower-triangular Cholesky factor, row `i` holding `i + 1` entries.
    pub fn chol_packed(&self) -> &[f64] {
        &self.chol
    }

    /// Dense copy of the Cholesky factor (row-major, `p_gamma x p_gamma`).
    pub fn chol_dense(&self) -> Vec<Vec<f64>> {
        let k = self.p_gamma();
        (0..k)
            .map(|i| {
                let mut row = vec![0.0; k];
                row[..=i].copy_from_slice(&self.chol[row_start(i)..row_start(i) + i + 1]);
                row
            })
            .collect()
    }

    /// `X_gamma^T y` in factor order.
    pub fn xty(&self) -> &[f64] {
        &self.xty
    }

    pub fn s_gamma(&self) -> f64 {
        self.s_gamma
    }

    pub fn log_det_f(&self) -> f64 {
        self.log_det
    }

    pub fn log_ml(&self) -> f64 {
        self.log_ml
    }

    pub fn log_prior(&self) -> f64 {
        self.log_prior
    }

    pub fn log_post(&self) -> f64 {
        self.log_post
    }

    fn empty(data: &Dataset, prior: &PriorSpec) -> Self {
        let mut st = ModelState {
            gamma: GammaVector::empty(data.p()),
            active: Vec::new(),
            chol: Vec::new(),
            xty: Vec::new(),
            z: Vec::new(),
            s_gamma: 0.0,
            log_det: 0.0,
            log_ml: 0.0,
            log_prior: 0.0,
            log_post: 0.0,
        };
        st.refresh(data, prior);
        st
    }

    fn refresh(&mut self, data: &Dataset, prior: &PriorSpec) {
        let k = self.active.len();
        self.s_gamma = clamp_residual(data.yty() - self.z.iter().map(|v| v * v).sum::<f64>());
        self.log_det = 2.0 * (0..k).map(|i| self.chol[row_start(i) + i].ln()).sum::<f64>();
        self.log_ml = prior.log_ml_from_parts(data.n(), k, self.log_det, self.s_gamma);
        self.log_prior = prior.log_prior_for_size(k, data.p());
        self.log_post = self.log_ml + self.log_prior;
    }

    fn check_size(&self, data: &Dataset, prior: &PriorSpec, new_size: usize) -> Result<()> {
        if prior.v_form == VForm::Gprior && new_size + 1 >= data.n() {
            return Err(BvsError::ModelTooLarge {
                p_gamma: new_size,
                limit: data.n().saturating_sub(1),
            });
        }
        Ok(())
    }

    /// `F` entries between variable `j` and the active set, in factor order.
    fn f_column(&self, j: usize, data: &Dataset, prior: &PriorSpec) -> Vec<f64> {
        let c = prior.gram_scale();
        self.active.iter().map(|&i| c * data.gram(i, j)).collect()
    }

    fn f_diag(j: usize, data: &Dataset, prior: &PriorSpec) -> f64 {
        prior.gram_scale() * data.gram(j, j) + prior.ridge()
    }

    /// Forward substitution `L x = b` against the packed factor.
    fn forward_solve(&self, b: &mut [f64]) {
        for i in 0..b.len() {
            let row = &self.chol[row_start(i)..row_start(i) + i + 1];
            let mut acc = b[i];
            for c in 0..i {
                acc -= row[c] * b[c];
            }
            b[i] = acc / row[i];
        }
    }

    /// Pivot and new factor row for adding variable `j`.
    fn extension(&self, j: usize, data: &Dataset, prior: &PriorSpec) -> Option<(Vec<f64>, f64)> {
        let mut l = self.f_column(j, data, prior);
        self.forward_solve(&mut l);
        let fjj = Self::f_diag(j, data, prior);
        let d2 = fjj - l.iter().map(|v| v * v).sum::<f64>();
        let tol = match prior.v_form {
            VForm::Gprior => SINGULAR_RTOL * fjj,
            VForm::Identity => 0.0,
        };
        (d2 > tol).then_some((l, d2))
    }

    fn add_in_place(&mut self, j: usize, data: &Dataset, prior: &PriorSpec) -> Result<()> {
        self.check_size(data, prior, self.active.len() + 1)?;
        let (l, d2) = self
            .extension(j, data, prior)
            .ok_or(BvsError::Singular { variable: j })?;
        let d = d2.sqrt();
        let b = data.xty(j);
        let zj = (b - l.iter().zip(&self.z).map(|(a, z)| a * z).sum::<f64>()) / d;
        self.chol.extend_from_slice(&l);
        self.chol.push(d);
        self.active.push(j);
        self.xty.push(b);
        self.z.push(zj);
        self.gamma.flip(j);
        self.refresh(data, prior);
        Ok(())
    }

    fn remove_in_place(&mut self, j: usize, data: &Dataset, prior: &PriorSpec, downdate: bool) {
        let m = self
            .active
            .iter()
            .position(|&v| v == j)
            .expect("variable is active");
        self.active.remove(m);
        self.xty.remove(m);
        self.gamma.flip(j);
        if downdate {
            self.remove_row_col(m);
            let k = self.active.len();
            // z is unchanged above the removed row; redo the trailing solve.
            self.z.truncate(m);
            for i in m..k {
                let row = &self.chol[row_start(i)..row_start(i) + i + 1];
                let mut acc = self.xty[i];
                for c in 0..i {
                    acc -= row[c] * self.z[c];
                }
                self.z.push(acc / row[i]);
            }
        } else {
            self.refactor(data, prior);
        }
        self.refresh(data, prior);
    }

    /// Drops row and column `m` from the packed factor and restores the
    /// trailing block with a rank-one update by the removed column.
    fn remove_row_col(&mut self, m: usize) {
        let k = self.active.len() + 1;
        let mut packed = Vec::with_capacity(row_start(k - 1));
        let mut v = Vec::with_capacity(k - m - 1);
        for i in 0..k {
            if i == m {
                continue;
            }
            let row = &self.chol[row_start(i)..row_start(i) + i + 1];
            if i < m {
                packed.extend_from_slice(row);
            } else {
                packed.extend_from_slice(&row[..m]);
                packed.extend_from_slice(&row[m + 1..]);
                v.push(row[m]);
            }
        }
        // Trailing block occupies new rows/cols m..k-1.
        let kk = k - 1;
        for c in m..kk {
            let vi = c - m;
            let lcc = packed[row_start(c) + c];
            let r = lcc.hypot(v[vi]);
            let cs = r / lcc;
            let sn = v[vi] / lcc;
            packed[row_start(c) + c] = r;
            for i in (c + 1)..kk {
                let idx = row_start(i) + c;
                let vr = i - m;
                packed[idx] = (packed[idx] + sn * v[vr]) / cs;
                v[vr] = cs * v[vr] - sn * packed[idx];
            }
        }
        self.chol = packed;
    }

    /// Rebuilds the factor and `z` for the current active order.
    fn refactor(&mut self, data: &Dataset, prior: &PriorSpec) {
        let k = self.active.len();
        let c = prior.gram_scale();
        let r = prior.ridge();
        let mut packed = vec![0.0; row_start(k)];
        for i in 0..k {
            for jj in 0..=i {
                let mut acc = c * data.gram(self.active[i], self.active[jj]);
                if i == jj {
                    acc += r;
                }
                for t in 0..jj {
                    acc -= packed[row_start(i) + t] * packed[row_start(jj) + t];
                }
                if i == jj {
                    packed[row_start(i) + i] = acc.max(f64::MIN_POSITIVE).sqrt();
                } else {
                    packed[row_start(i) + jj] = acc / packed[row_start(jj) + jj];
                }
            }
        }
        self.chol = packed;
        self.z = self.xty.clone();
        let mut z = std::mem::take(&mut self.z);
        self.forward_solve(&mut z);
        self.z = z;
    }

    /// Toggles variable `j`. On error the state is left untouched.
    pub fn flip_in_place(&mut self, j: usize, data: &Dataset, prior: &PriorSpec) -> Result<()> {
        if j >= data.p() {
            return Err(BvsError::InvalidInput(format!("variable {j} out of range (p = {})", data.p())));
        }
        if self.gamma.get(j) {
            let downdate = self.active.len() <= DOWNDATE_MAX_SIZE;
            self.remove_in_place(j, data, prior, downdate);
            Ok(())
        } else {
            self.add_in_place(j, data, prior)
        }
    }

    /// Removes active variable `j` choosing the update path explicitly.
    #[doc(hidden)]
    pub fn remove_with(&mut self, j: usize, data: &Dataset, prior: &PriorSpec, downdate: bool) {
        self.remove_in_place(j, data, prior, downdate);
    }

    /// `log pi(gamma with j toggled)` without materialising the new state.
    ///
    /// Returns `-inf` when the toggled model is singular or too large under
    /// the g-prior.
    pub fn peek_flip(&self, j: usize, data: &Dataset, prior: &PriorSpec) -> f64 {
        let k = self.active.len();
        if self.gamma.get(j) {
            let mut st = self.clone();
            st.remove_in_place(j, data, prior, k <= DOWNDATE_MAX_SIZE);
            return st.log_post;
        }
        if self.check_size(data, prior, k + 1).is_err() {
            return f64::NEG_INFINITY;
        }
        let Some((l, d2)) = self.extension(j, data, prior) else {
            return f64::NEG_INFINITY;
        };
        let zj = (data.xty(j) - l.iter().zip(&self.z).map(|(a, z)| a * z).sum::<f64>()) / d2.sqrt();
        let s = clamp_residual(data.yty() - self.z.iter().map(|v| v * v).sum::<f64>() - zj * zj);
        prior.log_ml_from_parts(data.n(), k + 1, self.log_det + d2.ln(), s) + prior.log_prior_for_size(k + 1, data.p())
    }
}

/// Builds the state of `gamma` from scratch with a dense Cholesky of `F_gamma`.
pub fn make_model_state(data: &Dataset, prior: &PriorSpec, gamma: &GammaVector) -> Result<ModelState> {
    if gamma.len() != data.p() {
        return Err(BvsError::DimensionMismatch(format!(
            "gamma has length {}, data has p = {}",
            gamma.len(),
            data.p()
        )));
    }
    let mut st = ModelState::empty(data, prior);
    st.check_size(data, prior, gamma.p_gamma())?;
    for j in gamma.active() {
        st.add_in_place(j, data, prior)?;
    }
    // Re-factor the assembled active set densely so the result does not depend
    // on the incremental path.
    st.refactor(data, prior);
    st.refresh(data, prior);
    Ok(st)
}

/// State of `gamma` with bit `j` toggled.
pub fn flip_model_state(state: &ModelState, j: usize, data: &Dataset, prior: &PriorSpec) -> Result<ModelState> {
    let mut st = state.clone();
    st.flip_in_place(j, data, prior)?;
    Ok(st)
}

/// Conditional log-odds of inclusion for every variable,
/// `d_j = log pi(gamma_j = 1, gamma_-j) - log pi(gamma_j = 0, gamma_-j)`.
///
/// Shares one inverse of the factor across all `j`: deletions use the
/// diagonal of `F^{-1}` and `F^{-1} X_gamma^T y`, additions one triangular
/// product per inactive variable.
pub fn rb_flip_logits(state: &ModelState, data: &Dataset, prior: &PriorSpec) -> Vec<f64> {
    let p = data.p();
    let n = data.n();
    let k = state.active.len();
    let lp = state.log_post;

    // Packed inverse of the factor, also lower triangular.
    let mut linv = vec![0.0; row_start(k)];
    for col in 0..k {
        for i in col..k {
            let row = &state.chol[row_start(i)..row_start(i) + i + 1];
            let mut acc = if i == col { 1.0 } else { 0.0 };
            for t in col..i {
                acc -= row[t] * linv[row_start(t) + col];
            }
            linv[row_start(i) + col] = acc / row[i];
        }
    }
    let mut w = vec![0.0; k];
    let mut gdiag = vec![0.0; k];
    for r in 0..k {
        let zr = state.z[r];
        let base = row_start(r);
        for i in 0..=r {
            let v = linv[base + i];
            w[i] += v * zr;
            gdiag[i] += v * v;
        }
    }

    let prior_minus = if k > 0 { prior.log_prior_for_size(k - 1, p) } else { 0.0 };
    let prior_plus = if k < p { prior.log_prior_for_size(k + 1, p) } else { 0.0 };
    let plus_allowed = !(prior.v_form == VForm::Gprior && k + 2 >= n);
    let s_now = data.yty() - state.z.iter().map(|v| v * v).sum::<f64>();

    let mut out = vec![0.0; p];
    for (m, &j) in state.active.iter().enumerate() {
        let s = clamp_residual(s_now + w[m] * w[m] / gdiag[m]);
        let ld = state.log_det + gdiag[m].ln();
        let lpost_minus = prior.log_ml_from_parts(n, k - 1, ld, s) + prior_minus;
        out[j] = lp - lpost_minus;
    }

    let c = prior.gram_scale();
    let r = prior.ridge();
    let mut f = vec![0.0; k];
    for j in 0..p {
        if state.gamma.get(j) {
            continue;
        }
        if !plus_allowed {
            out[j] = f64::NEG_INFINITY;
            continue;
        }
        for (fi, &a) in f.iter_mut().zip(&state.active) {
            *fi = c * data.gram(a, j);
        }
        let fjj = c * data.gram(j, j) + r;
        let mut lsq = 0.0;
        let mut lz = 0.0;
        for i in 0..k {
            let base = row_start(i);
            let li: f64 = linv[base..base + i + 1].iter().zip(&f).map(|(a, b)| a * b).sum();
            lsq += li * li;
            lz += li * state.z[i];
        }
        let d2 = fjj - lsq;
        let tol = match prior.v_form {
            VForm::Gprior => SINGULAR_RTOL * fjj,
            VForm::Identity => 0.0,
        };
        if d2 <= tol {
            out[j] = f64::NEG_INFINITY;
            continue;
        }
        let zj = (data.xty(j) - lz) / d2.sqrt();
        let s = clamp_residual(s_now - zj * zj);
        let lpost_plus = prior.log_ml_from_parts(n, k + 1, state.log_det + d2.ln(), s) + prior_plus;
        out[j] = lpost_plus - lp;
    }
    out
}

/// Reference implementation of [`rb_flip_logits`] that flips every variable
/// through [`flip_model_state`].
pub fn rb_flip_logits_naive(state: &ModelState, data: &Dataset, prior: &PriorSpec) -> Vec<f64> {
    (0..data.p())
        .map(|j| {
            let other = flip_model_state(state, j, data, prior).map(|s| s.log_post);
            match (state.gamma.get(j), other) {
                (true, Ok(lp)) => state.log_post - lp,
                (false, Ok(lp)) => lp - state.log_post,
                (_, Err(_)) => f64::NEG_INFINITY,
            }
        })
        .collect()
}
