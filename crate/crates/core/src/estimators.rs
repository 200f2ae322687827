//! Conditional-mean estimators: the non-causal (smoothing) estimate
//! `E[x | v]`, the causal predictable estimate `E[a_i | v_1..v_{i-1}]`,
//! their mean-square errors, and higher conditional moments.

use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::likelihood::{eval_mc, LikelihoodModel, PointSummary};
use crate::mc::{self, Estimate, McConfig};
use crate::priors::{AmplitudeLaw, SignalPrior};
use crate::wiener_space::{check_rho, dot, fill_noise, HVector, Observation};

/// Conditional law of the signal given (part of) the observation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum PosteriorState {
    AtomicWeights {
        atoms: Arc<Vec<HVector>>,
        weights: Vec<f64>,
    },
    GaussianParams {
        mean: HVector,
        variances: Vec<f64>,
    },
    ParticleSet {
        particles: Vec<HVector>,
        weights: Vec<f64>,
    },
}

impl PosteriorState {
    pub fn weights(&self) -> Option<&[f64]> {
        match self {
            Self::AtomicWeights { weights, .. } | Self::ParticleSet { weights, .. } => {
                Some(weights)
            }
            Self::GaussianParams { .. } => None,
        }
    }

    /// `E[x | .]`.
    pub fn mean(&self) -> HVector {
        match self {
            Self::GaussianParams { mean, .. } => mean.clone(),
            Self::AtomicWeights { atoms, weights } => weighted_mean(atoms, weights),
            Self::ParticleSet { particles, weights } => weighted_mean(particles, weights),
        }
    }

    /// `E[|x|_H^2 | .]`.
    pub fn second_moment_trace(&self) -> f64 {
        match self {
            Self::GaussianParams { mean, variances } => {
                mean.norm_sq() + variances.iter().sum::<f64>()
            }
            Self::AtomicWeights { atoms, weights } => weighted_energy(atoms, weights),
            Self::ParticleSet { particles, weights } => weighted_energy(particles, weights),
        }
    }

    /// `trace Cov[x | .]`.
    pub fn cov_trace(&self) -> f64 {
        self.second_moment_trace() - self.mean().norm_sq()
    }
}

fn weighted_mean(points: &[HVector], w: &[f64]) -> HVector {
    let mut m = vec![0.0; points.first().map_or(0, HVector::dim)];
    for (p, q) in points.iter().zip(w) {
        for (mi, pi) in m.iter_mut().zip(p.iter()) {
            *mi += q * pi;
        }
    }
    HVector::new(m)
}

fn weighted_energy(points: &[HVector], w: &[f64]) -> f64 {
    points.iter().zip(w).map(|(p, q)| q * p.norm_sq()).sum()
}

/// Non-causal estimate `E[x | v]` for closed-form priors.
///
/// At `rho = 0` this is the prior mean; no division by `rho` is involved.
pub fn noncausal_estimate(prior: &SignalPrior, obs: &Observation) -> Result<HVector> {
    let model = LikelihoodModel::new(prior)?;
    let mut s = PointSummary::with_dim(model.dim());
    model.summarize(obs.v(), obs.rho(), &mut Vec::new(), &mut s);
    Ok(HVector::new(s.mean))
}

/// Self-normalized importance-sampling estimate of `E[x | v]`.
pub fn noncausal_estimate_mc(
    prior: &SignalPrior,
    obs: &Observation,
    mc: &McConfig,
) -> Result<(HVector, f64)> {
    if obs.rho() == 0.0 {
        let m = prior.moments(mc)?;
        return Ok((m.mean, m.energy_stderr));
    }
    let e = eval_mc(prior, obs, mc)?;
    let inv = obs.rho().recip();
    Ok((e.grad_log.scaled(inv), e.stderr_grad_log * inv))
}

/// Inner sample count for nested Monte-Carlo posteriors of sampler-only
/// priors.
pub const NESTED_INNER_SAMPLES: usize = 4_096;

/// Posterior summaries either in closed form or by nested importance
/// sampling (biased for finite inner sample counts).
#[derive(Debug, Clone)]
pub enum PosteriorEngine<'a> {
    Closed(LikelihoodModel),
    Nested {
        prior: &'a SignalPrior,
        inner: usize,
    },
}

impl<'a> PosteriorEngine<'a> {
    pub fn new(prior: &'a SignalPrior) -> Result<Self> {
        match prior {
            SignalPrior::SamplerOnly(_) => Ok(Self::Nested {
                prior,
                inner: NESTED_INNER_SAMPLES,
            }),
            _ => Ok(Self::Closed(LikelihoodModel::new(prior)?)),
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Self::Closed(_))
    }

    pub fn summarize<R: Rng>(
        &self,
        v: &[f64],
        rho: f64,
        rng: &mut R,
        scratch: &mut Vec<f64>,
        out: &mut PointSummary,
    ) -> Result<()> {
        match self {
            Self::Closed(m) => {
                m.summarize(v, rho, scratch, out);
                Ok(())
            }
            Self::Nested { prior, inner } => nested_summary(prior, v, rho, *inner, rng, out),
        }
    }
}

fn nested_summary<R: Rng>(
    prior: &SignalPrior,
    v: &[f64],
    rho: f64,
    inner: usize,
    rng: &mut R,
    out: &mut PointSummary,
) -> Result<()> {
    let n = prior.dim();
    let mut draws = vec![0.0; inner * n];
    let mut lws = Vec::with_capacity(inner);
    for x in draws.chunks_mut(n) {
        prior.sample_into(rng, x);
        lws.push(rho * dot(v, x) - 0.5 * rho * rho * dot(x, x));
    }
    let shift = lws.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return Err(Error::WeightsUnderflow);
    }
    let mut s0 = 0.0;
    let mut s2 = 0.0;
    out.mean.clear();
    out.mean.resize(n, 0.0);
    for (lw, x) in lws.iter().zip(draws.chunks(n)) {
        let w = (lw - shift).exp();
        s0 += w;
        s2 += w * dot(x, x);
        for (m, xi) in out.mean.iter_mut().zip(x) {
            *m += w * xi;
        }
    }
    out.mean.iter_mut().for_each(|m| *m /= s0);
    out.log_ell = shift + (s0 / inner as f64).ln();
    out.cov_trace = s2 / s0 - dot(&out.mean, &out.mean);
    Ok(())
}

/// Mean-square error estimated two ways from the same draws:
/// `naive = E|x - xhat|^2` and `conditional = E[trace Cov]`, the
/// Rao-Blackwellized form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MmseEstimate {
    pub naive: Estimate,
    pub conditional: Estimate,
    /// `E|x|^2 - E|xhat|^2`.
    pub energy_gap: Estimate,
}

/// Non-causal MMSE `E|x - E[x|v]|_H^2` over the joint law.
pub fn noncausal_mmse(prior: &SignalPrior, rho: f64, mc: &McConfig) -> Result<MmseEstimate> {
    check_rho(rho)?;
    let engine = PosteriorEngine::new(prior)?;
    let n = prior.dim();
    let bm = mc::run(mc, 4, |rng, out| {
        let mut x = vec![0.0; n];
        let mut v = vec![0.0; n];
        prior.sample_into(rng, &mut x);
        fill_noise(&mut v, rng);
        for (vi, xi) in v.iter_mut().zip(&x) {
            *vi += rho * xi;
        }
        let mut s = PointSummary::with_dim(n);
        engine.summarize(&v, rho, rng, &mut Vec::new(), &mut s)?;
        out[0] = x.iter().zip(&s.mean).map(|(a, b)| (a - b).powi(2)).sum();
        out[1] = s.cov_trace;
        out[2] = dot(&x, &x);
        out[3] = dot(&s.mean, &s.mean);
        Ok(())
    })?;
    Ok(MmseEstimate {
        naive: bm.stat(0),
        conditional: bm.stat(1),
        energy_gap: bm.derived(|m| m[2] - m[3]),
    })
}

/// `E[prod_i (h_i, x)_H | v]` for an enumerable prior.
pub fn conditional_moment(prior: &SignalPrior, obs: &Observation, hs: &[HVector]) -> Result<f64> {
    let (atoms, q) = atomic_posterior(prior, obs)?;
    check_directions(hs, obs.dim(), 1)?;
    Ok(moment_from_weights(&atoms, &q, hs))
}

fn atomic_posterior(
    prior: &SignalPrior,
    obs: &Observation,
) -> Result<(Arc<Vec<HVector>>, Vec<f64>)> {
    match LikelihoodModel::enumerable(prior)?.posterior(obs)? {
        PosteriorState::AtomicWeights { atoms, weights } => Ok((atoms, weights)),
        _ => unreachable!("enumerable model yields atomic posterior"),
    }
}

fn check_directions(hs: &[HVector], n: usize, min_len: usize) -> Result<()> {
    if hs.len() < min_len {
        return Err(Error::InvalidArgument(format!(
            "need at least {min_len} directions, got {}",
            hs.len()
        )));
    }
    if let Some(h) = hs.iter().find(|h| h.dim() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: h.dim(),
        });
    }
    Ok(())
}

fn moment_from_weights(atoms: &[HVector], q: &[f64], hs: &[HVector]) -> f64 {
    atoms
        .iter()
        .zip(q)
        .map(|(a, qk)| qk * hs.iter().map(|h| dot(h, a)).product::<f64>())
        .sum()
}

/// Directional derivative `grad_h E[prod_i (h_i, x) | v]` in `v`, from the
/// weight derivatives `grad_h q_k = rho q_k ((h, a_k) - (h, xbar))`.
pub fn conditional_moment_gradient(
    prior: &SignalPrior,
    obs: &Observation,
    hs: &[HVector],
    h: &HVector,
) -> Result<f64> {
    let (atoms, q) = atomic_posterior(prior, obs)?;
    check_directions(hs, obs.dim(), 0)?;
    check_directions(std::slice::from_ref(h), obs.dim(), 1)?;
    Ok(obs.rho() * centered_moment(&atoms, &q, hs, h))
}

/// `sum_k q_k ((h, a_k) - (h, xbar)) prod_i (h_i, a_k)`, i.e. the weight
/// derivative divided by `rho`.
fn centered_moment(atoms: &[HVector], q: &[f64], hs: &[HVector], h: &HVector) -> f64 {
    let h_bar: f64 = atoms.iter().zip(q).map(|(a, qk)| qk * dot(h, a)).sum();
    atoms
        .iter()
        .zip(q)
        .map(|(a, qk)| qk * (dot(h, a) - h_bar) * hs.iter().map(|g| dot(g, a)).product::<f64>())
        .sum()
}

/// Absolute residual of the conditional-moment recursion
///
/// `M_n = (h_n, xbar) M_{n-1} + rho^{-1} grad_{h_n} M_{n-1}`,
///
/// with `M_j = E[prod_{i<=j} (h_i, x) | v]` and the gradient taken
/// analytically from the posterior weights. The `rho^{-1}` is carried inside
/// the weight derivative, so the check is also defined at `rho = 0`.
pub fn moment_recursion_check(
    prior: &SignalPrior,
    obs: &Observation,
    hs: &[HVector],
) -> Result<f64> {
    check_directions(hs, obs.dim(), 2)?;
    let (atoms, q) = atomic_posterior(prior, obs)?;
    let (last, head) = hs.split_last().expect("length checked");
    let m_n = moment_from_weights(&atoms, &q, hs);
    let m_prev = moment_from_weights(&atoms, &q, head);
    let xbar_h: f64 = atoms.iter().zip(&q).map(|(a, qk)| qk * dot(last, a)).sum();
    let grad_term = centered_moment(&atoms, &q, head, last);
    Ok((m_n - (xbar_h * m_prev + grad_term)).abs())
}

/// Output of a left-to-right causal scan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterTrajectory {
    /// `E[a_i | v_1..v_{i-1}]`.
    pub predictable: Vec<f64>,
    /// `E[a_i | v_1..v_i]`.
    pub filtered: Vec<f64>,
    /// Posterior after observing `v_1..v_i`, for `i = 1..n`.
    pub states: Vec<PosteriorState>,
}

#[derive(Debug, Clone)]
enum FilterKind {
    Atomic {
        atoms: Arc<Vec<HVector>>,
        weights: Vec<f64>,
    },
    Diagonal {
        mean: Vec<f64>,
        var: Vec<f64>,
    },
    Shape {
        shape: HVector,
        mean: f64,
        var: f64,
    },
}

/// Per-coordinate output of a [`CausalFilter`] scan.
#[derive(Debug, Clone, Default)]
pub struct ScanBuffers {
    pub predictable: Vec<f64>,
    pub filtered: Vec<f64>,
    /// `Var[a_i | v_1..v_{i-1}]`.
    pub predictable_var: Vec<f64>,
    log_w: Vec<f64>,
    q: Vec<f64>,
}

/// Recursive Bayes filter over coordinates for closed-form priors.
#[derive(Debug, Clone)]
pub struct CausalFilter {
    kind: FilterKind,
    dim: usize,
}

impl CausalFilter {
    pub fn new(prior: &SignalPrior) -> Result<Self> {
        let dim = prior.dim();
        let kind = if let Ok(a) = prior.to_atomic() {
            FilterKind::Atomic {
                atoms: Arc::new(a.atoms().to_vec()),
                weights: a.weights().to_vec(),
            }
        } else {
            match prior {
                SignalPrior::ScaledShape(p) => match p.amplitude() {
                    AmplitudeLaw::Gaussian { mean, var } => FilterKind::Shape {
                        shape: p.shape().clone(),
                        mean: *mean,
                        var: *var,
                    },
                    AmplitudeLaw::Atomic { .. } => unreachable!("atomic amplitudes enumerate"),
                },
                SignalPrior::GaussianDiagonal(p) => FilterKind::Diagonal {
                    mean: p.mean().to_vec(),
                    var: p.variances().to_vec(),
                },
                SignalPrior::SamplerOnly(_) => return Err(Error::UnsupportedPrior("sampler_only")),
                SignalPrior::Atomic(_) => unreachable!("atomic priors enumerate"),
            }
        };
        Ok(Self { kind, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Runs the scan over `v`; `states` collects per-step posteriors when
    /// given.
    pub fn scan(
        &self,
        v: &[f64],
        rho: f64,
        buf: &mut ScanBuffers,
        mut states: Option<&mut Vec<PosteriorState>>,
    ) {
        let n = self.dim;
        buf.predictable.resize(n, 0.0);
        buf.filtered.resize(n, 0.0);
        buf.predictable_var.resize(n, 0.0);
        let half = 0.5 * rho * rho;
        match &self.kind {
            FilterKind::Atomic { atoms, weights } => {
                let k = atoms.len();
                buf.q.clear();
                buf.q.extend_from_slice(weights);
                buf.log_w.clear();
                buf.log_w.extend(weights.iter().map(|w| w.ln()));
                for i in 0..n {
                    let (mut m1, mut m2) = (0.0, 0.0);
                    for (a, q) in atoms.iter().zip(&buf.q) {
                        m1 += q * a[i];
                        m2 += q * a[i] * a[i];
                    }
                    buf.predictable[i] = m1;
                    buf.predictable_var[i] = (m2 - m1 * m1).max(0.0);
                    for (lw, a) in buf.log_w.iter_mut().zip(atoms.iter()) {
                        *lw += rho * a[i] * v[i] - half * a[i] * a[i];
                    }
                    let shift = buf.log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let mut total = 0.0;
                    for j in 0..k {
                        buf.q[j] = (buf.log_w[j] - shift).exp();
                        total += buf.q[j];
                    }
                    let mut f = 0.0;
                    for (q, a) in buf.q.iter_mut().zip(atoms.iter()) {
                        *q /= total;
                        f += *q * a[i];
                    }
                    buf.filtered[i] = f;
                    if let Some(st) = states.as_deref_mut() {
                        st.push(PosteriorState::AtomicWeights {
                            atoms: Arc::clone(atoms),
                            weights: buf.q.clone(),
                        });
                    }
                }
            }
            FilterKind::Diagonal { mean, var } => {
                for i in 0..n {
                    let (m, s2) = (mean[i], var[i]);
                    let c = 1.0 + rho * rho * s2;
                    buf.predictable[i] = m;
                    buf.predictable_var[i] = s2;
                    buf.filtered[i] = m + rho * s2 * (v[i] - rho * m) / c;
                    if let Some(st) = states.as_deref_mut() {
                        let mut pm = mean.clone();
                        let mut pv = var.clone();
                        for j in 0..=i {
                            let c = 1.0 + rho * rho * var[j];
                            pm[j] = mean[j] + rho * var[j] * (v[j] - rho * mean[j]) / c;
                            pv[j] = var[j] / c;
                        }
                        st.push(PosteriorState::GaussianParams {
                            mean: HVector::new(pm),
                            variances: pv,
                        });
                    }
                }
            }
            FilterKind::Shape { shape, mean, var } => {
                let (mut mu, mut p) = (*mean, *var);
                for i in 0..n {
                    let s = shape[i];
                    buf.predictable[i] = mu * s;
                    buf.predictable_var[i] = p * s * s;
                    let g = rho * s;
                    let c = 1.0 + g * g * p;
                    mu += p * g * (v[i] - g * mu) / c;
                    p /= c;
                    buf.filtered[i] = mu * s;
                    if let Some(st) = states.as_deref_mut() {
                        st.push(PosteriorState::GaussianParams {
                            mean: shape.scaled(mu),
                            variances: shape.iter().map(|c| p * c * c).collect(),
                        });
                    }
                }
            }
        }
    }
}

/// Causal scan of one observation.
pub fn causal_filter(prior: &SignalPrior, obs: &Observation) -> Result<FilterTrajectory> {
    let f = CausalFilter::new(prior)?;
    if obs.dim() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            found: obs.dim(),
        });
    }
    let mut buf = ScanBuffers::default();
    let mut states = Vec::with_capacity(f.dim());
    f.scan(obs.v(), obs.rho(), &mut buf, Some(&mut states));
    Ok(FilterTrajectory {
        predictable: buf.predictable,
        filtered: buf.filtered,
        states,
    })
}

/// Causal MMSE `E|x - xhat|_H^2` with the predictable estimate.
pub fn causal_mmse(prior: &SignalPrior, rho: f64, mc: &McConfig) -> Result<MmseEstimate> {
    check_rho(rho)?;
    let filter = CausalFilter::new(prior)?;
    let n = prior.dim();
    let bm = mc::run(mc, 4, |rng, out| {
        let mut x = vec![0.0; n];
        let mut v = vec![0.0; n];
        prior.sample_into(rng, &mut x);
        fill_noise(&mut v, rng);
        for (vi, xi) in v.iter_mut().zip(&x) {
            *vi += rho * xi;
        }
        let mut buf = ScanBuffers::default();
        filter.scan(&v, rho, &mut buf, None);
        out[0] = x
            .iter()
            .zip(&buf.predictable)
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        out[1] = buf.predictable_var.iter().sum();
        out[2] = dot(&x, &x);
        out[3] = dot(&buf.predictable, &buf.predictable);
        Ok(())
    })?;
    Ok(MmseEstimate {
        naive: bm.stat(0),
        conditional: bm.stat(1),
        energy_gap: bm.derived(|m| m[2] - m[3]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::eval_exact;
    use crate::priors::{AtomicPrior, GaussianDiagonalPrior, ScaledShapePrior};
    use crate::wiener_space::{Basis, Truncate};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn hv(c: &[f64]) -> HVector {
        HVector::new(c.to_vec())
    }

    fn obs(v: &[f64], rho: f64) -> Observation {
        Observation::new(v.to_vec(), rho).unwrap()
    }

    fn binary() -> SignalPrior {
        AtomicPrior::new(vec![hv(&[1.0]), hv(&[-1.0])], vec![0.5, 0.5])
            .unwrap()
            .into()
    }

    fn gauss1() -> SignalPrior {
        GaussianDiagonalPrior::new(hv(&[0.0]), vec![1.0])
            .unwrap()
            .into()
    }

    #[test]
    fn noncausal_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p: SignalPrior = AtomicPrior::random(3, 3, 1.0, &mut rng).unwrap().into();
        let mean = p.to_atomic().unwrap().mean();
        let est = noncausal_estimate(&p, &obs(&[1.0, 2.0, -3.0], 0.0)).unwrap();
        for i in 0..3 {
            assert!((est[i] - mean[i]).abs() < 1e-15);
        }
        assert!((noncausal_estimate(&gauss1(), &obs(&[2.0], 1.0)).unwrap()[0] - 1.0).abs() < 1e-15);
        for v in [-2.0, 0.1, 1.7] {
            let e = noncausal_estimate(&binary(), &obs(&[v], 1.3)).unwrap()[0];
            assert!((e - (1.3 * v).tanh()).abs() < 1e-14);
            let g = eval_exact(&binary(), &obs(&[v], 1.3)).unwrap().grad_log[0];
            assert!((e - g / 1.3).abs() < 1e-14);
        }
    }

    #[test]
    fn noncausal_mc_estimate() {
        let p = binary();
        let mc = McConfig::new(60_000, 30, 2).unwrap();
        let (e, se) = noncausal_estimate_mc(&p, &obs(&[0.5], 1.0), &mc).unwrap();
        assert!((e[0] - 0.5f64.tanh()).abs() < 4.0 * se);
    }

    #[test]
    fn noncausal_mmse_examples() {
        let mc = McConfig::new(100_000, 50, 5).unwrap();
        let g = noncausal_mmse(&gauss1(), 1.0, &mc).unwrap();
        assert!((g.naive.value - 0.5).abs() < 4.0 * g.naive.stderr);
        assert!((g.conditional.value - 0.5).abs() < 1e-15);
        assert!((g.energy_gap.value - 0.5).abs() < 4.0 * g.energy_gap.stderr);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p: SignalPrior = AtomicPrior::random(2, 3, 1.0, &mut rng).unwrap().into();
        let at0 = noncausal_mmse(&p, 0.0, &mc).unwrap();
        let vt = p.moments(&mc).unwrap().variance_trace();
        assert!((at0.naive.value - vt).abs() < 4.0 * at0.naive.stderr);
        assert!((at0.conditional.value - vt).abs() < 1e-12);
    }

    #[test]
    fn conditional_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p: SignalPrior = AtomicPrior::random(3, 4, 1.0, &mut rng).unwrap().into();
        let o = obs(&[0.2, -0.5, 1.0], 0.9);
        let h = hv(&[1.0, 2.0, -1.0]);
        let xbar = noncausal_estimate(&p, &o).unwrap();
        let m1 = conditional_moment(&p, &o, std::slice::from_ref(&h)).unwrap();
        assert!((m1 - dot(&h, &xbar)).abs() < 1e-14);

        // Second moment against the Hessian of log l along h.
        let m2 = conditional_moment(&p, &o, &[h.clone(), h.clone()]).unwrap();
        let model = LikelihoodModel::new(&p).unwrap();
        let f = |t: f64| {
            let v: Vec<f64> = o.v().iter().zip(h.iter()).map(|(a, b)| a + t * b).collect();
            model.log_ell(&v, 0.9, &mut Vec::new())
        };
        let step = 1e-4;
        let hess = (f(step) - 2.0 * f(0.0) + f(-step)) / (step * step);
        assert!((hess / 0.81 + dot(&h, &xbar).powi(2) - m2).abs() < 1e-5);

        let single: SignalPrior = AtomicPrior::point_mass(hv(&[1.0, -2.0, 0.5]))
            .unwrap()
            .into();
        let hs = [h.clone(), hv(&[0.0, 1.0, 0.0])];
        assert!(
            (conditional_moment(&single, &o, &hs).unwrap() - (1.0 - 4.0 - 0.5) * -2.0).abs()
                < 1e-14
        );
        assert!(conditional_moment(&gauss1(), &obs(&[0.0], 1.0), &[hv(&[1.0])]).is_err());
    }

    #[test]
    fn weight_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let p: SignalPrior = AtomicPrior::random(2, 3, 1.0, &mut rng).unwrap().into();
        let o = obs(&[0.4, -0.3], 1.7);
        let hs = [hv(&[1.0, 0.5]), hv(&[-0.2, 1.0])];
        let h = hv(&[0.3, 0.9]);
        let an = conditional_moment_gradient(&p, &o, &hs, &h).unwrap();
        let step = 1e-5;
        let at = |t: f64| {
            let v: Vec<f64> = o.v().iter().zip(h.iter()).map(|(a, b)| a + t * b).collect();
            conditional_moment(&p, &o.with_coords(v), &hs).unwrap()
        };
        let fd = (at(step) - at(-step)) / (2.0 * step);
        assert!((an - fd).abs() < 1e-6 * (1.0 + an.abs()));
    }

    #[test]
    fn recursion_examples() {
        let single: SignalPrior = AtomicPrior::point_mass(hv(&[1.3])).unwrap().into();
        let e1 = hv(&[1.0]);
        assert_eq!(
            moment_recursion_check(&single, &obs(&[0.3], 1.0), &[e1.clone(), e1.clone()]).unwrap(),
            0.0
        );
        let r = moment_recursion_check(&binary(), &obs(&[0.7], 1.0), &[e1.clone(), e1.clone()])
            .unwrap();
        assert!(r <= 1e-10);
        let r = moment_recursion_check(&binary(), &obs(&[0.7], 2.5), &[e1.clone(), e1]).unwrap();
        assert!(r <= 1e-10);
        assert!(moment_recursion_check(&binary(), &obs(&[0.7], 1.0), &[hv(&[1.0])]).is_err());
    }

    #[test]
    fn recursion_random_atoms() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p: SignalPrior = AtomicPrior::random(4, 3, 1.0, &mut rng).unwrap().into();
        let hs: Vec<HVector> = (0..3).map(|_| p.sample(&mut rng).scaled(0.5)).collect();
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let rho = rng.random_range(0.1..2.5);
            let x = p.sample(&mut rng);
            let v: Vec<f64> = x
                .iter()
                .map(|a| rho * a + rng.sample::<f64, _>(rand_distr::StandardNormal))
                .collect();
            worst = worst.max(moment_recursion_check(&p, &obs(&v, rho), &hs).unwrap());
        }
        assert!(worst <= 1e-8, "{worst}");
    }

    #[test]
    fn causal_filter_basics() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let p: SignalPrior = AtomicPrior::random(5, 3, 1.0, &mut rng).unwrap().into();
        let mean = p.to_atomic().unwrap().mean();
        let o = obs(&[0.1, 2.0, -1.0, 0.5, 0.3], 1.2);
        let tr = causal_filter(&p, &o).unwrap();
        assert_eq!(tr.predictable[0], mean[0]);
        assert_eq!(tr.states.len(), 5);
        for st in &tr.states {
            assert!((st.weights().unwrap().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        let quiet = causal_filter(&p, &obs(o.v(), 0.0)).unwrap();
        for i in 0..5 {
            assert!((quiet.predictable[i] - mean[i]).abs() < 1e-14);
        }

        // Adaptedness: predictable values up to i only see v_1..v_{i-1}.
        for k in 0..=5 {
            let t = o.truncate(k as f64 / 5.0).unwrap();
            let cut = causal_filter(&p, &t).unwrap();
            for i in 0..k {
                assert_eq!(cut.predictable[i], tr.predictable[i]);
            }
        }
    }

    #[test]
    fn single_coordinate_filter_is_smoother() {
        for (p, v) in [(binary(), 0.8), (gauss1(), -1.1)] {
            let o = obs(&[v], 1.4);
            let tr = causal_filter(&p, &o).unwrap();
            let nc = noncausal_estimate(&p, &o).unwrap();
            assert!((tr.filtered[0] - nc[0]).abs() < 1e-14);
        }
    }

    #[test]
    fn shape_filter_agrees_with_atomic_scan_structure() {
        // The final filtered amplitude equals the smoothed amplitude for a
        // scaled-shape Gaussian prior.
        let basis = Basis::new(8, 1.0).unwrap();
        let p: SignalPrior = ScaledShapePrior::new(
            basis.constant_shape(),
            AmplitudeLaw::Gaussian {
                mean: 0.2,
                var: 1.5,
            },
        )
        .unwrap()
        .into();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x = p.sample(&mut rng);
        let z = crate::wiener_space::sample_noise(&basis, &mut rng);
        let o = crate::wiener_space::channel(&x, &z, 0.9).unwrap();
        let tr = causal_filter(&p, &o).unwrap();
        let nc = noncausal_estimate(&p, &o).unwrap();
        assert!((tr.filtered[7] - nc[7]).abs() < 1e-13);
        let last = tr.states.last().unwrap().mean();
        for i in 0..8 {
            assert!((last[i] - nc[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn causal_mmse_at_zero_snr() {
        let mc = McConfig::new(30_000, 30, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let p: SignalPrior = AtomicPrior::random(3, 3, 1.0, &mut rng).unwrap().into();
        let c = causal_mmse(&p, 0.0, &mc).unwrap();
        let vt = p.moments(&mc).unwrap().variance_trace();
        assert!((c.naive.value - vt).abs() < 4.0 * c.naive.stderr);
        assert!((c.conditional.value - vt).abs() < 1e-12);
        let s = SignalPrior::SamplerOnly(crate::priors::SamplerPrior::new(1, |_| hv(&[0.0])));
        assert!(matches!(
            causal_filter(&s, &obs(&[0.0], 1.0)),
            Err(Error::UnsupportedPrior(_))
        ));
    }

    #[test]
    fn causal_dominates_noncausal() {
        let mc = McConfig::new(40_000, 40, 15).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..3 {
            let p: SignalPrior = AtomicPrior::random(4, 3, 1.0, &mut rng).unwrap().into();
            let c = causal_mmse(&p, 1.0, &mc).unwrap().conditional;
            let nc = noncausal_mmse(&p, 1.0, &mc).unwrap().conditional;
            assert!(c.value >= nc.value - 4.0 * c.stderr.hypot(nc.stderr));
        }
    }

    #[test]
    fn tower_property() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let p: SignalPrior = AtomicPrior::random(2, 3, 1.0, &mut rng).unwrap().into();
        let mean = p.to_atomic().unwrap().mean();
        let model = LikelihoodModel::new(&p).unwrap();
        let mc = McConfig::new(60_000, 30, 6).unwrap();
        let bm = mc::run(&mc, 2, |rng, out| {
            let x = p.sample(rng);
            let mut v = vec![0.0; 2];
            fill_noise(&mut v, rng);
            for (vi, xi) in v.iter_mut().zip(x.iter()) {
                *vi += 1.1 * xi;
            }
            let mut s = PointSummary::with_dim(2);
            model.summarize(&v, 1.1, &mut Vec::new(), &mut s);
            out.copy_from_slice(&s.mean);
            Ok(())
        })
        .unwrap();
        for i in 0..2 {
            let e = bm.stat(i);
            assert!((e.value - mean[i]).abs() < 4.0 * e.stderr);
        }
    }
}
