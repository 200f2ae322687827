//! Per-sample checks of closed-form identities for atomic priors. Each
//! report carries the sample with the largest deviation.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::report::{IdentityReport, Relation, ReportMeta, ToleranceProfile, ToleranceRule};
use crate::error::{Error, Result};
use crate::estimators::PosteriorEngine;
use crate::estimators::{conditional_moment, moment_recursion_check, noncausal_estimate};
use crate::likelihood::LikelihoodModel;
use crate::malliavin::{
    divergence, gradient_fd, hess_trace_fd, likelihood_functional, likelihood_provider,
    log_likelihood_functional, number_operator, posterior_mean_field, tilde_divergence,
};
use crate::mc::{aux_rng, Estimate};
use crate::priors::SignalPrior;
use crate::wiener_space::{check_rho, dot, fill_noise, HVector, Observation};

pub const GRADIENT_FD_STEP: f64 = 1e-5;
pub const HESSIAN_FD_STEP: f64 = 1e-4;

const TAG_GRADIENT: u64 = 1;
const TAG_HESSIAN: u64 = 2;
const TAG_RECURSION: u64 = 3;
const TAG_NUMBER: u64 = 4;
const TAG_FISHER: u64 = 5;

/// Largest deviation seen so far.
struct Worst {
    lhs: f64,
    rhs: f64,
    dev: f64,
}

impl Default for Worst {
    fn default() -> Self {
        Self {
            lhs: f64::NAN,
            rhs: f64::NAN,
            dev: f64::NEG_INFINITY,
        }
    }
}

impl Worst {
    fn update(&mut self, lhs: f64, rhs: f64, dev: f64) {
        if dev > self.dev || dev.is_nan() {
            *self = Self { lhs, rhs, dev };
        }
    }

    fn report(&self, name: &str, rule: ToleranceRule, meta: ReportMeta) -> IdentityReport {
        IdentityReport::compare(
            name,
            Relation::Equal,
            Estimate::exact(self.lhs),
            Estimate::exact(self.rhs),
            Some(0.0),
            rule,
            meta,
        )
    }
}

struct Setup {
    model: LikelihoodModel,
    meta: ReportMeta,
}

fn setup(prior: &SignalPrior, rho: f64, samples: usize, seed: u64) -> Result<Setup> {
    check_rho(rho)?;
    if samples == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    Ok(Setup {
        model: LikelihoodModel::enumerable(prior)?,
        meta: ReportMeta {
            rho,
            n: prior.dim(),
            samples,
            seed,
        },
    })
}

fn draw_observation(prior: &SignalPrior, rho: f64, rng: &mut ChaCha8Rng) -> Result<Observation> {
    let x = prior.sample(rng);
    let mut v = vec![0.0; x.dim()];
    fill_noise(&mut v, rng);
    for (vi, xi) in v.iter_mut().zip(x.iter()) {
        *vi += rho * xi;
    }
    Observation::new(v, rho)
}

fn sup_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// `grad log l = rho xbar` per sample (analytic both sides), and the
/// analytic gradient against central differences, relative to
/// `1 + |grad|_inf`.
pub fn gradient_identity_check(
    prior: &SignalPrior,
    rho: f64,
    samples: usize,
    seed: u64,
    profile: &ToleranceProfile,
) -> Result<Vec<IdentityReport>> {
    let s = setup(prior, rho, samples, seed)?;
    let f = log_likelihood_functional(&s.model, rho);
    let mut rng = aux_rng(seed, TAG_GRADIENT);
    let (mut an, mut fd) = (Worst::default(), Worst::default());
    for _ in 0..samples {
        let obs = draw_observation(prior, rho, &mut rng)?;
        let grad = s.model.eval(&obs)?.grad_log;
        let xbar = noncausal_estimate(prior, &obs)?;
        for (g, x) in grad.iter().zip(xbar.iter()) {
            an.update(*g, rho * x, (g - rho * x).abs());
        }
        let num = gradient_fd(&f, obs.v(), GRADIENT_FD_STEP)?;
        let diff: Vec<f64> = num.iter().zip(grad.iter()).map(|(a, b)| a - b).collect();
        let rel = sup_norm(&diff) / (1.0 + sup_norm(&grad));
        fd.update(rel, 0.0, rel);
    }
    Ok(vec![
        an.report("gradient_identity", profile.analytic(), s.meta),
        fd.report("gradient_finite_difference", profile.fd_gradient(), s.meta),
    ])
}

/// `trace grad^2 log l = rho^2 (E[|x|^2 | v] - |xbar|^2)` per sample, with
/// the conditional second moment summed over basis directions, and the
/// analytic trace against second differences.
pub fn hessian_trace_check(
    prior: &SignalPrior,
    rho: f64,
    samples: usize,
    seed: u64,
    profile: &ToleranceProfile,
) -> Result<Vec<IdentityReport>> {
    let s = setup(prior, rho, samples, seed)?;
    let n = prior.dim();
    let f = log_likelihood_functional(&s.model, rho);
    let units: Vec<HVector> = (0..n)
        .map(|i| {
            let mut e = HVector::zeros(n);
            e.as_mut_slice()[i] = 1.0;
            e
        })
        .collect();
    let mut rng = aux_rng(seed, TAG_HESSIAN);
    let (mut an, mut fd) = (Worst::default(), Worst::default());
    for _ in 0..samples {
        let obs = draw_observation(prior, rho, &mut rng)?;
        let tr = s.model.eval(&obs)?.trace_hess_log;
        let xbar = noncausal_estimate(prior, &obs)?;
        let second: f64 = units
            .iter()
            .map(|e| conditional_moment(prior, &obs, &[e.clone(), e.clone()]))
            .sum::<Result<f64>>()?;
        let rhs = rho * rho * (second - xbar.norm_sq());
        an.update(tr, rhs, (tr - rhs).abs());
        let num = hess_trace_fd(&f, obs.v(), HESSIAN_FD_STEP)?;
        let rel = (num - tr).abs() / (1.0 + tr.abs());
        fd.update(rel, 0.0, rel);
    }
    Ok(vec![
        an.report("hessian_trace_identity", profile.analytic(), s.meta),
        fd.report(
            "hessian_trace_finite_difference",
            ToleranceRule::exact(profile.finite_difference),
            s.meta,
        ),
    ])
}

/// Conditional-moment recursion for products of length `2..=max_len` with
/// random Gaussian directions.
pub fn moment_recursion_battery(
    prior: &SignalPrior,
    rho: f64,
    samples: usize,
    max_len: usize,
    seed: u64,
    profile: &ToleranceProfile,
) -> Result<IdentityReport> {
    let s = setup(prior, rho, samples, seed)?;
    if max_len < 2 {
        return Err(Error::InvalidArgument(
            "products need length at least 2".into(),
        ));
    }
    let n = prior.dim();
    let mut rng = aux_rng(seed, TAG_RECURSION);
    let mut worst = Worst::default();
    for _ in 0..samples {
        let obs = draw_observation(prior, rho, &mut rng)?;
        for len in 2..=max_len {
            let hs: Vec<HVector> = (0..len)
                .map(|_| HVector::new((0..n).map(|_| rng.sample(StandardNormal)).collect()))
                .collect();
            let r = moment_recursion_check(prior, &obs, &hs)?;
            worst.update(r, 0.0, r);
        }
    }
    Ok(worst.report("moment_recursion", profile.analytic(), s.meta))
}

/// Per-sample `L log l = rho delta xbar` and
/// `delta~ xbar = L l / (rho l)`, analytic on both sides.
pub fn number_identity_check(
    prior: &SignalPrior,
    rho: f64,
    samples: usize,
    seed: u64,
    profile: &ToleranceProfile,
) -> Result<Vec<IdentityReport>> {
    let s = setup(prior, rho, samples, seed)?;
    if rho == 0.0 {
        return Ok(["number_operator_log_likelihood", "tilde_divergence_lemma"]
            .into_iter()
            .map(|name| IdentityReport::suppressed(name, s.meta, "undefined at rho = 0"))
            .collect());
    }
    let engine = PosteriorEngine::new(prior)?;
    let log_f = log_likelihood_functional(&s.model, rho);
    let xbar = posterior_mean_field(&s.model, rho)?;
    let mut rng = aux_rng(seed, TAG_NUMBER);
    let (mut first, mut lemma) = (Worst::default(), Worst::default());
    for _ in 0..samples {
        let obs = draw_observation(prior, rho, &mut rng)?;
        let v = obs.v();
        let lhs = number_operator(&log_f, v)?;
        let rhs = rho * divergence(&xbar, v)?;
        first.update(lhs, rhs, (lhs - rhs).abs());

        let td = tilde_divergence(&xbar, likelihood_provider(&engine, rho), v)?;
        let scale = s.model.log_ell(v, rho, &mut Vec::new());
        let ell = likelihood_functional(&s.model, rho, scale);
        let ratio = number_operator(&ell, v)? / (rho * ell.value(v));
        lemma.update(td, ratio, (td - ratio).abs());
    }
    Ok(vec![
        first.report("number_operator_log_likelihood", profile.analytic(), s.meta),
        lemma.report("tilde_divergence_lemma", profile.analytic(), s.meta),
    ])
}

/// Per-sample `rho |xbar|^2 = |grad log l|^2 / rho`.
pub fn debruijn_fisher_check(
    prior: &SignalPrior,
    rho: f64,
    samples: usize,
    seed: u64,
    profile: &ToleranceProfile,
) -> Result<IdentityReport> {
    let s = setup(prior, rho, samples, seed)?;
    if rho == 0.0 {
        return Ok(IdentityReport::suppressed(
            "debruijn_fisher_per_sample",
            s.meta,
            "undefined at rho = 0",
        ));
    }
    let mut rng = aux_rng(seed, TAG_FISHER);
    let mut worst = Worst::default();
    for _ in 0..samples {
        let obs = draw_observation(prior, rho, &mut rng)?;
        let g = s.model.eval(&obs)?.grad_log;
        let xbar = noncausal_estimate(prior, &obs)?;
        let b = rho * xbar.norm_sq();
        let c = dot(&g, &g) / rho;
        worst.update(b, c, (b - c).abs());
    }
    Ok(worst.report("debruijn_fisher_per_sample", profile.analytic(), s.meta))
}
