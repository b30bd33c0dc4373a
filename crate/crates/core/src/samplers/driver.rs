//! Multi-chain driver with shared adaptation.
//!
//! Chains step concurrently against a frozen snapshot of the adaptive state;
//! the snapshot is updated once per iteration after all chains finish, with
//! contributions summed in chain order. Each chain owns a ChaCha stream
//! derived from the master seed and its index, so output does not depend on
//! the number of worker threads.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{step, SamplerKind, StepParams, StepResult, DEFAULT_MAX_PK};
use crate::adapt::{rm_gain, rm_update, AdaptInit, AdaptState, AdaptTargets, KwBatch, DEFAULT_PI0, DEFAULT_TARGET_K};
use crate::diagnostics::{RunOutput, TraceRecord};
use crate::error::{BvsError, Result};
use crate::linmodel::{make_model_state, rb_flip_logits, Dataset, GammaVector, ModelState, PriorSpec};
use crate::proposals::{BalancingFn, DEFAULT_EPS};

/// Settings for one multi-chain run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub sampler: SamplerKind,
    pub balancing: BalancingFn,
    pub n_chains: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Target acceptance rate; `None` uses [`SamplerKind::default_tau`].
    pub tau: Option<f64>,
    /// Target neighbourhood size for ARNI.
    pub s: f64,
    pub pi0: f64,
    pub eps: f64,
    pub max_pk: usize,
    pub zeta_init: f64,
    pub xi_init: f64,
    pub omega_init: f64,
    /// Starting value of every inclusion-probability estimate; `None` uses
    /// the prior inclusion probability.
    pub pip_init: Option<f64>,
    /// Keep `omega` at `omega_init` throughout.
    pub freeze_omega: bool,
    pub threads: Option<usize>,
    /// Stop early once this much wall-clock time has elapsed.
    pub time_budget_s: Option<f64>,
    pub record_trace: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            sampler: SamplerKind::ParniRm,
            balancing: BalancingFn::Hastings,
            n_chains: 25,
            iterations: 5000,
            burn_in: 1000,
            seed: 0,
            tau: None,
            s: DEFAULT_TARGET_K,
            pi0: DEFAULT_PI0,
            eps: DEFAULT_EPS,
            max_pk: DEFAULT_MAX_PK,
            zeta_init: 0.5,
            xi_init: 0.5,
            omega_init: 0.5,
            pip_init: None,
            freeze_omega: false,
            threads: None,
            time_budget_s: None,
            record_trace: true,
        }
    }
}

impl RunConfig {
    pub fn tau(&self) -> f64 {
        self.tau.unwrap_or_else(|| self.sampler.default_tau())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(BvsError::Config(m));
        if self.n_chains == 0 {
            return bad("L must be at least 1".into());
        }
        if self.sampler == SamplerKind::ParniKw && self.n_chains < 2 && !self.freeze_omega {
            return bad("parni_kw needs L >= 2".into());
        }
        if self.iterations == 0 {
            return bad("iterations must be positive".into());
        }
        if self.burn_in >= self.iterations {
            return bad(format!("burn_in ({}) must be less than iterations ({})", self.burn_in, self.iterations));
        }
        if !(self.eps > 0.0 && self.eps < 0.5) {
            return bad(format!("eps must lie in (0, 1/2), got {}", self.eps));
        }
        if !(self.pi0 > 0.0 && self.pi0 < 0.5) {
            return bad(format!("pi0 must lie in (0, 1/2), got {}", self.pi0));
        }
        let tau = self.tau();
        if !(tau > 0.0 && tau < 1.0) {
            return bad(format!("tau must lie in (0, 1), got {tau}"));
        }
        if !(self.s > 0.0 && self.s.is_finite()) {
            return bad(format!("s must be positive, got {}", self.s));
        }
        for (name, v) in [("zeta_init", self.zeta_init), ("xi_init", self.xi_init), ("omega_init", self.omega_init)] {
            if !(v > self.eps && v < 1.0 - self.eps) {
                return bad(format!("{name} must lie in (eps, 1 - eps), got {v}"));
            }
        }
        if let Some(v) = self.pip_init {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("pip_init must lie in [0, 1], got {v}"));
            }
        }
        if self.threads == Some(0) {
            return bad("threads must be positive".into());
        }
        if let Some(t) = self.time_budget_s {
            if !(t > 0.0) {
                return bad(format!("time budget must be positive, got {t}"));
            }
        }
        Ok(())
    }
}

/// Chain states, their random streams and the shared adaptive state.
#[derive(Debug, Clone)]
pub struct ChainEnsemble {
    pub states: Vec<ModelState>,
    rngs: Vec<ChaCha8Rng>,
    pub adapt: AdaptState,
}

impl ChainEnsemble {
    /// Every chain starts from the empty model.
    pub fn new(config: &RunConfig, data: &Dataset, prior: &PriorSpec) -> Result<Self> {
        config.validate()?;
        prior.validate()?;
        let p = data.p();
        let start = make_model_state(data, prior, &GammaVector::empty(p))?;
        let rngs = (0..config.n_chains)
            .map(|l| {
                let mut r = ChaCha8Rng::seed_from_u64(config.seed);
                r.set_stream(l as u64);
                r
            })
            .collect();
        let adapt = AdaptState::new(
            p,
            AdaptInit {
                pip: config.pip_init.unwrap_or_else(|| prior.prior_inclusion()),
                zeta: config.zeta_init,
                xi: config.xi_init,
                omega: config.omega_init,
                pi0: config.pi0,
                eps: config.eps,
                targets: AdaptTargets {
                    tau: config.tau(),
                    s: config.s,
                },
            },
        )?;
        Ok(ChainEnsemble {
            states: vec![start; config.n_chains],
            rngs,
            adapt,
        })
    }
}

#[derive(Default)]
struct Tally {
    steps: usize,
    accepted: usize,
    accept_prob: f64,
    squared_jump: f64,
    k_size: usize,
    models_evaluated: usize,
    inclusions: Vec<usize>,
}

fn mean(v: impl Iterator<Item = f64>, n: usize) -> f64 {
    v.sum::<f64>() / n as f64
}

fn apply_adaptation(adapt: &mut AdaptState, config: &RunConfig, i: usize, results: &[StepResult], kw: Option<&mut KwBatch>) {
    let n = results.len();
    let acc = mean(results.iter().map(StepResult::accept_prob), n);
    let phi = rm_gain(i);
    let tau = adapt.targets.tau;
    match config.sampler {
        SamplerKind::Ads => {}
        SamplerKind::Asi => adapt.zeta_logit = rm_update(adapt.zeta_logit, acc, tau, phi),
        SamplerKind::Arn => adapt.xi_logit = rm_update(adapt.xi_logit, acc, tau, phi),
        SamplerKind::Arni => {
            let mean_k = mean(results.iter().map(|r| r.k_size as f64), n);
            adapt.xi_logit = rm_update(adapt.xi_logit, mean_k, adapt.targets.s, phi);
            if !config.freeze_omega {
                adapt.omega_logit = rm_update(adapt.omega_logit, acc, tau, phi);
            }
        }
        SamplerKind::ParniRm => {
            if !config.freeze_omega {
                adapt.omega_logit = rm_update(adapt.omega_logit, acc, tau, phi);
            }
        }
        SamplerKind::ParniKw => {
            if let Some(batch) = kw {
                batch.record(results);
                adapt.kw_update(batch);
            }
        }
    }
    adapt.iter = i;
}

/// Runs `config.iterations` iterations (or until the time budget is spent),
/// adapting during burn-in and freezing afterwards.
///
/// Reported inclusion probabilities are the Rao-Blackwellised means over the
/// post-burn-in iterations of all chains.
pub fn run_chains(ensemble: &mut ChainEnsemble, config: &RunConfig, data: &Dataset, prior: &PriorSpec) -> Result<RunOutput> {
    config.validate()?;
    if ensemble.states.len() != config.n_chains {
        return Err(BvsError::Config(format!(
            "ensemble has {} chains but the configuration asks for {}",
            ensemble.states.len(),
            config.n_chains
        )));
    }
    match config.threads {
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| BvsError::Config(format!("cannot build thread pool: {e}")))?;
            pool.install(|| run_inner(ensemble, config, data, prior))
        }
        None => run_inner(ensemble, config, data, prior),
    }
}

fn run_inner(ens: &mut ChainEnsemble, config: &RunConfig, data: &Dataset, prior: &PriorSpec) -> Result<RunOutput> {
    let started = Instant::now();
    let p = data.p();
    let kind = config.sampler;
    let mut tally = Tally {
        inclusions: vec![0; p],
        ..Tally::default()
    };
    let mut trace = Vec::new();
    let mut omega_trace = Vec::with_capacity(config.iterations);
    let mut completed = 0;

    for i in 1..=config.iterations {
        let adapting = i <= config.burn_in;
        if !adapting && !ens.adapt.is_frozen() {
            ens.adapt.freeze();
        }
        let zeta = ens.adapt.zeta();
        let xi = if kind.is_parni() { 1.0 } else { ens.adapt.xi() };
        let omega_c = ens.adapt.omega();
        let mut kw = if kind == SamplerKind::ParniKw && adapting && !config.freeze_omega {
            Some(KwBatch::new(i, config.n_chains, ens.adapt.omega_logit, ens.adapt.eps)?)
        } else {
            None
        };

        let adapt = &ens.adapt;
        let kw_ref = kw.as_ref();
        let outcomes: Vec<(StepResult, Vec<f64>, f64)> = ens
            .states
            .par_iter_mut()
            .zip(ens.rngs.par_iter_mut())
            .enumerate()
            .map(|(l, (st, rng))| {
                let omega = kw_ref.map_or(omega_c, |b| b.omega_for(l, omega_c));
                let params = StepParams {
                    rates: &adapt.rates,
                    zeta,
                    xi,
                    omega,
                    balancing: config.balancing,
                    max_pk: config.max_pk,
                };
                let res = step(kind, st, &params, data, prior, rng);
                let logits = rb_flip_logits(st, data, prior);
                (res, logits, omega)
            })
            .collect();

        let mut results = Vec::with_capacity(outcomes.len());
        let mut logits = Vec::with_capacity(outcomes.len());
        for (l, (res, lg, omega)) in outcomes.into_iter().enumerate() {
            if config.record_trace {
                let st = &ens.states[l];
                let (omega_rec, scale_rec) = match kind {
                    SamplerKind::Ads => (None, None),
                    SamplerKind::Asi => (None, Some(zeta)),
                    _ => (Some(omega), Some(xi)),
                };
                trace.push(TraceRecord {
                    iteration: i,
                    chain: l,
                    log_post: st.log_post(),
                    p_gamma: st.p_gamma(),
                    accepted: res.accepted,
                    log_accept_prob: res.log_accept_prob.is_finite().then_some(res.log_accept_prob),
                    omega: omega_rec,
                    zeta_or_xi: scale_rec,
                });
            }
            results.push(res);
            logits.push(lg);
        }
        ens.adapt.rb_update(&logits);

        if adapting {
            apply_adaptation(&mut ens.adapt, config, i, &results, kw.as_mut());
        } else {
            for (res, st) in results.iter().zip(&ens.states) {
                tally.steps += 1;
                tally.accepted += res.accepted as usize;
                tally.accept_prob += res.accept_prob();
                tally.squared_jump += res.squared_jump();
                tally.k_size += res.k_size;
                tally.models_evaluated += res.models_evaluated;
                for j in st.active() {
                    tally.inclusions[*j] += 1;
                }
            }
        }
        omega_trace.push(omega_c);
        completed = i;
        if let Some(budget) = config.time_budget_s {
            if started.elapsed().as_secs_f64() >= budget {
                log::info!("time budget of {budget}s reached after {i} iterations");
                break;
            }
        }
    }

    let steps = tally.steps.max(1) as f64;
    Ok(RunOutput {
        sampler: kind,
        n_chains: config.n_chains,
        pip_estimate: ens.adapt.pip_hat.clone(),
        pip_freq: tally.inclusions.iter().map(|&c| c as f64 / steps).collect(),
        acceptance_rate: tally.accepted as f64 / steps,
        mean_accept_prob: tally.accept_prob / steps,
        mean_asjd: tally.squared_jump / steps,
        mean_k_size: tally.k_size as f64 / steps,
        models_evaluated: tally.models_evaluated,
        post_burn_in_steps: tally.steps,
        iterations_completed: completed,
        omega_trace,
        final_zeta: ens.adapt.zeta(),
        final_xi: if kind.is_parni() { 1.0 } else { ens.adapt.xi() },
        final_omega: ens.adapt.omega(),
        trace,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}
