//! The likelihood ratio `l = d mu_Y / d mu_W` and its first two Malliavin
//! derivatives.
//!
//! For a prior `mu_X`,
//! `l(v) = E exp(rho <v, x> - rho^2 |x|^2 / 2)`,
//! `grad log l = rho * E[x | v]` and
//! `trace grad^2 log l = rho^2 * trace Cov[x | v]`.
//! Atomic priors are summed exactly with a max-shifted log-sum-exp; the two
//! conjugate Gaussian families use their closed forms; sampler-only priors go
//! through [`eval_mc`].

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::PosteriorState;
use crate::mc::{self, batch_stderr, McConfig};
use crate::priors::{AmplitudeLaw, SignalPrior};
use crate::wiener_space::{check_rho, dot, HVector, Observation};

/// `l(v)` with its log, gradient of the log and Hessian trace of the log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LikelihoodEval {
    pub value: f64,
    pub log_value: f64,
    pub grad_log: HVector,
    pub trace_hess_log: f64,
    pub stderr_value: f64,
    pub stderr_grad_log: f64,
    pub stderr_trace: f64,
}

/// `log sum_k exp(s_k)`, shifted by the maximum.
pub(crate) fn log_sum_exp(s: &[f64]) -> f64 {
    let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + s.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Posterior summary at one observation: `log l`, `E[x|v]` and
/// `trace Cov[x|v]`.
#[derive(Debug, Clone, Default)]
pub struct PointSummary {
    pub log_ell: f64,
    pub mean: Vec<f64>,
    pub cov_trace: f64,
}

impl PointSummary {
    pub fn with_dim(n: usize) -> Self {
        Self {
            log_ell: 0.0,
            mean: vec![0.0; n],
            cov_trace: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
enum Kind {
    Atomic {
        atoms: Arc<Vec<HVector>>,
        weights: Vec<f64>,
        ln_w: Vec<f64>,
        norms: Vec<f64>,
    },
    Diagonal {
        mean: Vec<f64>,
        var: Vec<f64>,
    },
    Shape {
        shape: HVector,
        norm_sq: f64,
        mean: f64,
        var: f64,
    },
}

/// A prior prepared for repeated closed-form likelihood evaluation.
#[derive(Debug, Clone)]
pub struct LikelihoodModel {
    kind: Kind,
    dim: usize,
}

impl LikelihoodModel {
    /// Accepts every prior with a closed-form likelihood.
    pub fn new(prior: &SignalPrior) -> Result<Self> {
        let dim = prior.dim();
        let kind = match prior {
            SignalPrior::Atomic(_) => Self::atomic_kind(prior)?,
            SignalPrior::ScaledShape(p) => match p.amplitude() {
                AmplitudeLaw::Atomic { .. } => Self::atomic_kind(prior)?,
                AmplitudeLaw::Gaussian { mean, var } => Kind::Shape {
                    shape: p.shape().clone(),
                    norm_sq: p.shape().norm_sq(),
                    mean: *mean,
                    var: *var,
                },
            },
            SignalPrior::GaussianDiagonal(p) => Kind::Diagonal {
                mean: p.mean().to_vec(),
                var: p.variances().to_vec(),
            },
            SignalPrior::SamplerOnly(_) => return Err(Error::ExactnessRequired("sampler_only")),
        };
        Ok(Self { kind, dim })
    }

    /// Accepts enumerable priors only.
    pub fn enumerable(prior: &SignalPrior) -> Result<Self> {
        Ok(Self {
            kind: Self::atomic_kind(prior)?,
            dim: prior.dim(),
        })
    }

    fn atomic_kind(prior: &SignalPrior) -> Result<Kind> {
        let a = prior.to_atomic()?;
        Ok(Kind::Atomic {
            ln_w: a.weights().iter().map(|w| w.ln()).collect(),
            norms: a.atoms().iter().map(HVector::norm_sq).collect(),
            atoms: Arc::new(a.atoms().to_vec()),
            weights: a.weights().to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self.kind, Kind::Atomic { .. })
    }

    /// Atoms and prior weights, for atomic models.
    pub fn atoms(&self) -> Option<(&[HVector], &[f64])> {
        match &self.kind {
            Kind::Atomic { atoms, weights, .. } => Some((atoms.as_slice(), weights.as_slice())),
            _ => None,
        }
    }

    /// Unnormalized log posterior weights of an atomic model; `None` otherwise.
    pub fn log_weights_into(&self, v: &[f64], rho: f64, s: &mut Vec<f64>) -> Option<()> {
        let Kind::Atomic {
            atoms, ln_w, norms, ..
        } = &self.kind
        else {
            return None;
        };
        s.clear();
        let half = 0.5 * rho * rho;
        s.extend(
            atoms
                .iter()
                .zip(ln_w)
                .zip(norms)
                .map(|((a, lw), nrm)| lw + rho * dot(v, a) - half * nrm),
        );
        Some(())
    }

    /// `log l(v)`.
    pub fn log_ell(&self, v: &[f64], rho: f64, scratch: &mut Vec<f64>) -> f64 {
        match &self.kind {
            Kind::Atomic { .. } => {
                self.log_weights_into(v, rho, scratch);
                log_sum_exp(scratch)
            }
            Kind::Diagonal { mean, var } => v
                .iter()
                .zip(mean)
                .zip(var)
                .map(|((&v, &m), &s2)| diag_log_ell(v, m, s2, rho))
                .sum(),
            Kind::Shape {
                shape,
                norm_sq,
                mean,
                var,
            } => {
                let (u, g) = shape_stat(v, shape, *norm_sq, rho);
                diag_log_ell(u, *mean, *var, g)
            }
        }
    }

    /// Fills `out` with `log l`, the posterior mean and the posterior
    /// covariance trace at `v`. `scratch` holds normalized atom weights on
    /// return for atomic models.
    pub fn summarize(&self, v: &[f64], rho: f64, scratch: &mut Vec<f64>, out: &mut PointSummary) {
        out.mean.resize(self.dim, 0.0);
        match &self.kind {
            Kind::Atomic { atoms, .. } => {
                self.log_weights_into(v, rho, scratch);
                let lse = log_sum_exp(scratch);
                out.log_ell = lse;
                out.mean.iter_mut().for_each(|m| *m = 0.0);
                for (q, a) in scratch.iter_mut().zip(atoms.iter()) {
                    *q = (*q - lse).exp();
                    for (m, ai) in out.mean.iter_mut().zip(a.iter()) {
                        *m += *q * ai;
                    }
                }
                out.cov_trace = scratch
                    .iter()
                    .zip(atoms.iter())
                    .map(|(q, a)| {
                        q * a
                            .iter()
                            .zip(&out.mean)
                            .map(|(ai, mi)| (ai - mi).powi(2))
                            .sum::<f64>()
                    })
                    .sum();
            }
            Kind::Diagonal { mean, var } => {
                let mut log_ell = 0.0;
                let mut tr = 0.0;
                for i in 0..self.dim {
                    let (m, s2) = (mean[i], var[i]);
                    log_ell += diag_log_ell(v[i], m, s2, rho);
                    let c = 1.0 + rho * rho * s2;
                    out.mean[i] = m + rho * s2 * (v[i] - rho * m) / c;
                    tr += s2 / c;
                }
                out.log_ell = log_ell;
                out.cov_trace = tr;
            }
            Kind::Shape {
                shape,
                norm_sq,
                mean,
                var,
            } => {
                let (u, g) = shape_stat(v, shape, *norm_sq, rho);
                out.log_ell = diag_log_ell(u, *mean, *var, g);
                let c = 1.0 + g * g * var;
                let amp = mean + g * var * (u - g * mean) / c;
                for (m, s) in out.mean.iter_mut().zip(shape.iter()) {
                    *m = amp * s;
                }
                out.cov_trace = var / c * norm_sq;
            }
        }
    }

    /// Full evaluation at an observation.
    pub fn eval(&self, obs: &Observation) -> Result<LikelihoodEval> {
        check_dim(self.dim, obs.dim())?;
        let rho = obs.rho();
        let mut scratch = Vec::new();
        let mut s = PointSummary::with_dim(self.dim);
        self.summarize(obs.v(), rho, &mut scratch, &mut s);
        Ok(LikelihoodEval {
            value: s.log_ell.exp(),
            log_value: s.log_ell,
            grad_log: HVector::new(s.mean.iter().map(|m| rho * m).collect()),
            trace_hess_log: rho * rho * s.cov_trace,
            stderr_value: 0.0,
            stderr_grad_log: 0.0,
            stderr_trace: 0.0,
        })
    }

    /// The conditional law of `x` given the observation.
    pub fn posterior(&self, obs: &Observation) -> Result<PosteriorState> {
        check_dim(self.dim, obs.dim())?;
        let rho = obs.rho();
        let mut scratch = Vec::new();
        let mut s = PointSummary::with_dim(self.dim);
        self.summarize(obs.v(), rho, &mut scratch, &mut s);
        Ok(match &self.kind {
            Kind::Atomic { atoms, .. } => PosteriorState::AtomicWeights {
                atoms: Arc::clone(atoms),
                weights: scratch,
            },
            Kind::Diagonal { var, .. } => PosteriorState::GaussianParams {
                mean: HVector::new(s.mean),
                variances: var.iter().map(|s2| s2 / (1.0 + rho * rho * s2)).collect(),
            },
            Kind::Shape {
                shape,
                norm_sq,
                var,
                ..
            } => {
                let g2 = rho * rho * norm_sq;
                let amp_var = var / (1.0 + g2 * var);
                PosteriorState::GaussianParams {
                    mean: HVector::new(s.mean),
                    variances: shape.iter().map(|c| amp_var * c * c).collect(),
                }
            }
        })
    }
}

/// `log` of the N(rho m, 1 + rho^2 s2) density over the N(0, 1) density.
#[inline]
fn diag_log_ell(v: f64, m: f64, s2: f64, rho: f64) -> f64 {
    let c = 1.0 + rho * rho * s2;
    let r = v - rho * m;
    -0.5 * c.ln() - r * r / (2.0 * c) + 0.5 * v * v
}

/// Normalized sufficient statistic `<v, s>/|s|` and effective gain `rho |s|`.
#[inline]
fn shape_stat(v: &[f64], shape: &HVector, norm_sq: f64, rho: f64) -> (f64, f64) {
    let norm = norm_sq.sqrt();
    (dot(v, shape) / norm, rho * norm)
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// Exact evaluation for an enumerable prior.
pub fn eval_exact(prior: &SignalPrior, obs: &Observation) -> Result<LikelihoodEval> {
    check_rho(obs.rho())?;
    LikelihoodModel::enumerable(prior)?.eval(obs)
}

/// Closed-form evaluation for atomic and conjugate Gaussian priors.
pub fn eval_closed_form(prior: &SignalPrior, obs: &Observation) -> Result<LikelihoodEval> {
    LikelihoodModel::new(prior)?.eval(obs)
}

/// Posterior weights of an enumerable prior.
pub fn posterior(prior: &SignalPrior, obs: &Observation) -> Result<PosteriorState> {
    LikelihoodModel::enumerable(prior)?.posterior(obs)
}

/// Importance-sampling estimate of `l(v)` from prior draws.
///
/// `l` is estimated by the plain mean of the Cameron-Martin weights (unbiased);
/// the gradient and Hessian trace use self-normalized weighted moments.
/// Error bars are batch means over `mc.batches` streams.
pub fn eval_mc(prior: &SignalPrior, obs: &Observation, mc: &McConfig) -> Result<LikelihoodEval> {
    mc.validate()?;
    check_dim(prior.dim(), obs.dim())?;
    let rho = obs.rho();
    let v = obs.v();
    let n = prior.dim();

    struct Batch {
        shift: f64,
        s0: f64,
        s1: Vec<f64>,
        s2: f64,
        len: usize,
    }

    let batches: Vec<Batch> = {
        use rayon::prelude::*;
        (0..mc.batches)
            .into_par_iter()
            .map(|b| {
                let mut rng = mc::batch_rng(mc.seed, b);
                let len = mc.batch_len(b);
                let mut x = vec![0.0; n];
                let mut lws = Vec::with_capacity(len);
                let mut draws = Vec::with_capacity(len * n);
                for _ in 0..len {
                    prior.sample_into(&mut rng, &mut x);
                    let lw = rho * dot(v, &x) - 0.5 * rho * rho * dot(&x, &x);
                    if lw.is_nan() {
                        return Err(Error::WeightsUnderflow);
                    }
                    lws.push(lw);
                    draws.extend_from_slice(&x);
                }
                let shift = lws.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if shift.is_infinite() {
                    return Err(Error::WeightsUnderflow);
                }
                let mut s0 = 0.0;
                let mut s1 = vec![0.0; n];
                let mut s2 = 0.0;
                for (lw, x) in lws.iter().zip(draws.chunks(n.max(1))) {
                    let w = (lw - shift).exp();
                    s0 += w;
                    for (a, xi) in s1.iter_mut().zip(x) {
                        *a += w * xi;
                    }
                    s2 += w * dot(x, x);
                }
                Ok(Batch {
                    shift,
                    s0,
                    s1,
                    s2,
                    len,
                })
            })
            .collect::<Result<_>>()?
    };

    let log_b: Vec<f64> = batches
        .iter()
        .map(|b| b.shift + (b.s0 / b.len as f64).ln())
        .collect();
    let total = mc.samples as f64;
    let shift = batches
        .iter()
        .map(|b| b.shift)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut s0 = 0.0;
    let mut s1 = vec![0.0; n];
    let mut s2 = 0.0;
    for b in &batches {
        let f = (b.shift - shift).exp();
        s0 += f * b.s0;
        for (a, x) in s1.iter_mut().zip(&b.s1) {
            *a += f * x;
        }
        s2 += f * b.s2;
    }
    if !(s0 > 0.0) {
        return Err(Error::WeightsUnderflow);
    }
    let log_value = shift + (s0 / total).ln();
    let mean: Vec<f64> = s1.iter().map(|x| x / s0).collect();
    let trace = rho * rho * (s2 / s0 - dot(&mean, &mean));

    let rel: Vec<f64> = log_b.iter().map(|l| (l - log_value).exp()).collect();
    let value = log_value.exp();
    let grad_se = (0..n)
        .map(|i| {
            let per: Vec<f64> = batches.iter().map(|b| rho * b.s1[i] / b.s0).collect();
            batch_stderr(&per)
        })
        .fold(0.0, f64::max);
    let per_trace: Vec<f64> = batches
        .iter()
        .map(|b| {
            let m: Vec<f64> = b.s1.iter().map(|x| x / b.s0).collect();
            rho * rho * (b.s2 / b.s0 - dot(&m, &m))
        })
        .collect();

    Ok(LikelihoodEval {
        value,
        log_value,
        grad_log: HVector::new(mean.iter().map(|m| rho * m).collect()),
        trace_hess_log: trace,
        stderr_value: value * batch_stderr(&rel),
        stderr_grad_log: grad_se,
        stderr_trace: batch_stderr(&per_trace),
    })
}
