//! Finite-dimensional Malliavin calculus on the coordinate Wiener space.
//!
//! With `v` the noise coordinates, `grad F` is the ordinary gradient in `v`,
//! the divergence of a vector field is `delta u = <v, u> - trace grad u`,
//! and the number (Ornstein-Uhlenbeck) operator is `L = delta grad`.

use crate::error::{Error, Result};
use crate::estimators::PosteriorEngine;
use crate::likelihood::{LikelihoodEval, LikelihoodModel, PointSummary};
use crate::wiener_space::{dot, HVector};

pub type ScalarFn<'a> = Box<dyn Fn(&[f64]) -> f64 + Send + Sync + 'a>;
pub type VectorFn<'a> = Box<dyn Fn(&[f64]) -> HVector + Send + Sync + 'a>;

/// A smooth Wiener functional `F(v)` with optional analytic derivatives.
pub struct SmoothFunctional<'a> {
    eval: ScalarFn<'a>,
    gradient: Option<VectorFn<'a>>,
    hess_trace: Option<ScalarFn<'a>>,
}

impl<'a> SmoothFunctional<'a> {
    pub fn new(eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'a) -> Self {
        Self {
            eval: Box::new(eval),
            gradient: None,
            hess_trace: None,
        }
    }

    pub fn with_gradient(mut self, g: impl Fn(&[f64]) -> HVector + Send + Sync + 'a) -> Self {
        self.gradient = Some(Box::new(g));
        self
    }

    pub fn with_hess_trace(mut self, t: impl Fn(&[f64]) -> f64 + Send + Sync + 'a) -> Self {
        self.hess_trace = Some(Box::new(t));
        self
    }

    pub fn value(&self, v: &[f64]) -> f64 {
        (self.eval)(v)
    }

    pub fn gradient(&self, v: &[f64]) -> Result<HVector> {
        self.gradient
            .as_ref()
            .map(|g| g(v))
            .ok_or(Error::MissingAnalytic("gradient"))
    }

    pub fn hess_trace(&self, v: &[f64]) -> Result<f64> {
        self.hess_trace
            .as_ref()
            .map(|t| t(v))
            .ok_or(Error::MissingAnalytic("Hessian trace"))
    }
}

/// An H-valued functional `u(v)` with an optional analytic `trace grad u`.
pub struct VectorField<'a> {
    eval: VectorFn<'a>,
    jacobian_trace: Option<ScalarFn<'a>>,
}

impl<'a> VectorField<'a> {
    pub fn new(eval: impl Fn(&[f64]) -> HVector + Send + Sync + 'a) -> Self {
        Self {
            eval: Box::new(eval),
            jacobian_trace: None,
        }
    }

    /// The constant field `u = h`.
    pub fn constant(h: HVector) -> Self {
        Self::new(move |_| h.clone()).with_jacobian_trace(|_| 0.0)
    }

    pub fn with_jacobian_trace(mut self, t: impl Fn(&[f64]) -> f64 + Send + Sync + 'a) -> Self {
        self.jacobian_trace = Some(Box::new(t));
        self
    }

    pub fn value(&self, v: &[f64]) -> HVector {
        (self.eval)(v)
    }

    pub fn jacobian_trace(&self, v: &[f64]) -> Result<f64> {
        self.jacobian_trace
            .as_ref()
            .map(|t| t(v))
            .ok_or(Error::MissingAnalytic("Jacobian trace"))
    }
}

fn check_step(step: f64) -> Result<()> {
    if step.is_finite() && step > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "step must be positive, got {step}"
        )))
    }
}

/// Central-difference gradient along each basis vector.
pub fn gradient_fd(f: &SmoothFunctional<'_>, v: &[f64], step: f64) -> Result<HVector> {
    check_step(step)?;
    let mut w = v.to_vec();
    let g = (0..v.len())
        .map(|i| {
            w[i] = v[i] + step;
            let up = f.value(&w);
            w[i] = v[i] - step;
            let down = f.value(&w);
            w[i] = v[i];
            (up - down) / (2.0 * step)
        })
        .collect();
    Ok(HVector::new(g))
}

/// Sum of central second differences along each basis vector.
pub fn hess_trace_fd(f: &SmoothFunctional<'_>, v: &[f64], step: f64) -> Result<f64> {
    check_step(step)?;
    let mut w = v.to_vec();
    let f0 = f.value(v);
    Ok((0..v.len())
        .map(|i| {
            w[i] = v[i] + step;
            let up = f.value(&w);
            w[i] = v[i] - step;
            let down = f.value(&w);
            w[i] = v[i];
            (up - 2.0 * f0 + down) / (step * step)
        })
        .sum())
}

/// `trace grad u` by central differences of the diagonal components.
pub fn jacobian_trace_fd(u: &VectorField<'_>, v: &[f64], step: f64) -> Result<f64> {
    check_step(step)?;
    let mut w = v.to_vec();
    Ok((0..v.len())
        .map(|i| {
            w[i] = v[i] + step;
            let up = u.value(&w)[i];
            w[i] = v[i] - step;
            let down = u.value(&w)[i];
            w[i] = v[i];
            (up - down) / (2.0 * step)
        })
        .sum())
}

/// `delta u = <v, u(v)> - trace grad u(v)`.
pub fn divergence(u: &VectorField<'_>, v: &[f64]) -> Result<f64> {
    let tr = u.jacobian_trace(v)?;
    Ok(divergence_with_trace(u, v, tr))
}

/// Divergence with a caller-supplied Jacobian trace.
pub fn divergence_with_trace(u: &VectorField<'_>, v: &[f64], trace: f64) -> f64 {
    dot(v, &u.value(v)) - trace
}

/// `L F = delta grad F = <v, grad F> - trace grad^2 F`.
pub fn number_operator(f: &SmoothFunctional<'_>, v: &[f64]) -> Result<f64> {
    let g = f.gradient(v)?;
    let t = f.hess_trace(v)?;
    Ok(dot(v, &g) - t)
}

/// Divergence under the observation law:
/// `delta~ u = delta u - (grad log l, u)_H`.
pub fn tilde_divergence(
    u: &VectorField<'_>,
    ell: impl Fn(&[f64]) -> Result<LikelihoodEval>,
    v: &[f64],
) -> Result<f64> {
    let e = ell(v)?;
    if !(e.value > 0.0) && !e.log_value.is_finite() {
        return Err(Error::InvalidArgument("likelihood must be positive".into()));
    }
    let d = divergence(u, v)?;
    Ok(d - dot(&e.grad_log, &u.value(v)))
}

fn summary(model: &LikelihoodModel, v: &[f64], rho: f64) -> PointSummary {
    let mut s = PointSummary::with_dim(model.dim());
    model.summarize(v, rho, &mut Vec::new(), &mut s);
    s
}

/// `log l` with gradient `rho E[x|v]` and Hessian trace
/// `rho^2 trace Cov[x|v]`.
pub fn log_likelihood_functional(model: &LikelihoodModel, rho: f64) -> SmoothFunctional<'_> {
    SmoothFunctional::new(move |v| model.log_ell(v, rho, &mut Vec::new()))
        .with_gradient(move |v| HVector::new(summary(model, v, rho).mean).scaled(rho))
        .with_hess_trace(move |v| rho * rho * summary(model, v, rho).cov_trace)
}

/// `c * l` with `c = exp(-log_scale)`; gradient `rho c l E[x|v]` and Hessian
/// trace `rho^2 c l E[|x|^2 | v]`. The constant keeps values representable
/// and cancels in `L l / l`.
pub fn likelihood_functional(
    model: &LikelihoodModel,
    rho: f64,
    log_scale: f64,
) -> SmoothFunctional<'_> {
    let scaled = move |v: &[f64]| (model.log_ell(v, rho, &mut Vec::new()) - log_scale).exp();
    SmoothFunctional::new(scaled)
        .with_gradient(move |v| {
            let s = summary(model, v, rho);
            let l = (s.log_ell - log_scale).exp();
            HVector::new(s.mean).scaled(rho * l)
        })
        .with_hess_trace(move |v| {
            let s = summary(model, v, rho);
            let l = (s.log_ell - log_scale).exp();
            rho * rho * l * (s.cov_trace + dot(&s.mean, &s.mean))
        })
}

/// The field `v -> E[x | v]` of an atomic prior. Its Jacobian trace is taken
/// from the posterior weight derivatives,
/// `sum_i grad_{e_i} E[(e_i, x) | v] = rho sum_k q_k (a_k - xbar, a_k)`.
pub fn posterior_mean_field(model: &LikelihoodModel, rho: f64) -> Result<VectorField<'_>> {
    if !model.is_atomic() {
        return Err(Error::EnumerationUnavailable("non-atomic"));
    }
    Ok(
        VectorField::new(move |v| HVector::new(summary(model, v, rho).mean)).with_jacobian_trace(
            move |v| {
                let (atoms, _) = model.atoms().expect("atomic model");
                let mut q = Vec::new();
                model.log_weights_into(v, rho, &mut q);
                let m = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                q.iter_mut().for_each(|s| *s = (*s - m).exp());
                let total: f64 = q.iter().sum();
                q.iter_mut().for_each(|s| *s /= total);
                let n = model.dim();
                let mut xbar = vec![0.0; n];
                for (a, qk) in atoms.iter().zip(&q) {
                    for (x, ai) in xbar.iter_mut().zip(a.iter()) {
                        *x += qk * ai;
                    }
                }
                rho * atoms
                    .iter()
                    .zip(&q)
                    .map(|(a, qk)| {
                        qk * a
                            .iter()
                            .zip(&xbar)
                            .map(|(ai, xi)| (ai - xi) * ai)
                            .sum::<f64>()
                    })
                    .sum::<f64>()
            },
        ),
    )
}

/// `grad log l` provider for [`tilde_divergence`].
pub fn likelihood_provider<'a>(
    engine: &'a PosteriorEngine<'a>,
    rho: f64,
) -> impl Fn(&[f64]) -> Result<LikelihoodEval> + 'a {
    move |v| match engine {
        PosteriorEngine::Closed(m) => {
            m.eval(&crate::wiener_space::Observation::new(v.to_vec(), rho)?)
        }
        PosteriorEngine::Nested { .. } => Err(Error::ExactnessRequired("sampler_only")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::{self, McConfig};
    use crate::priors::{AtomicPrior, SignalPrior};
    use crate::wiener_space::fill_noise;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn hv(c: &[f64]) -> HVector {
        HVector::new(c.to_vec())
    }

    #[test]
    fn gradient_examples() {
        let h = hv(&[1.0, -2.0, 0.5]);
        let hh = h.clone();
        let f = SmoothFunctional::new(move |v| dot(v, &hh));
        let g = gradient_fd(&f, &[0.3, 1.0, -4.0], 1e-5).unwrap();
        for i in 0..3 {
            assert!((g[i] - h[i]).abs() < 1e-9);
        }
        let q = SmoothFunctional::new(|v| 0.5 * dot(v, v));
        let v = [0.7, -1.1, 2.0];
        let g = gradient_fd(&q, &v, 1e-5).unwrap();
        for i in 0..3 {
            assert!((g[i] - v[i]).abs() < 1e-9);
        }
        assert!(gradient_fd(&q, &v, 0.0).is_err());
    }

    #[test]
    fn log_likelihood_derivatives_match_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p: SignalPrior = AtomicPrior::random(4, 3, 1.0, &mut rng).unwrap().into();
        let model = LikelihoodModel::new(&p).unwrap();
        let f = log_likelihood_functional(&model, 1.3);
        let v = [0.5, -0.2, 1.4, 0.1];
        let an = f.gradient(&v).unwrap();
        let fd = gradient_fd(&f, &v, 1e-5).unwrap();
        let scale = 1.0 + an.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for i in 0..4 {
            assert!((an[i] - fd[i]).abs() <= 1e-5 * scale);
        }
        let t = f.hess_trace(&v).unwrap();
        let tfd = hess_trace_fd(&f, &v, 1e-4).unwrap();
        assert!((t - tfd).abs() <= 1e-4 * (1.0 + t.abs()));
    }

    #[test]
    fn divergence_of_constant_and_product_fields() {
        let h = hv(&[0.5, 1.0]);
        let u = VectorField::constant(h.clone());
        let v = [1.5, -0.25];
        assert_eq!(divergence(&u, &v).unwrap(), dot(&v, &h));

        // delta(f h) = f delta h - (grad f, h) with f(v) = sin(v_0) + v_1^2.
        let f = |v: &[f64]| v[0].sin() + v[1] * v[1];
        let grad_f = |v: &[f64]| [v[0].cos(), 2.0 * v[1]];
        let hc = h.clone();
        let fh = VectorField::new(move |v| hc.scaled(f(v)));
        let tr = jacobian_trace_fd(&fh, &v, 1e-5).unwrap();
        let lhs = divergence_with_trace(&fh, &v, tr);
        let g = grad_f(&v);
        let rhs = f(&v) * dot(&v, &h) - (g[0] * h[0] + g[1] * h[1]);
        assert!((lhs - rhs).abs() < 1e-8);

        let no_trace = VectorField::new(|_| hv(&[1.0]));
        assert!(matches!(
            divergence(&no_trace, &[0.0]),
            Err(Error::MissingAnalytic(_))
        ));
    }

    #[test]
    fn integration_by_parts() {
        // E[(grad f, u)] = E[f delta u] for f = <., h1>, u = h2.
        let h1 = hv(&[0.4, -1.0, 0.3]);
        let h2 = hv(&[1.2, 0.5, -0.7]);
        let u = VectorField::constant(h2.clone());
        let cfg = McConfig::new(100_000, 50, 4).unwrap();
        let bm = mc::run(&cfg, 3, |rng, out| {
            let mut v = vec![0.0; 3];
            fill_noise(&mut v, rng);
            let f = dot(&v, &h1);
            out[0] = f * divergence(&u, &v)?;
            out[1] = divergence(&u, &v)?;
            out[2] = out[0] - dot(&h1, &h2);
            Ok(())
        })
        .unwrap();
        let target = dot(&h1, &h2);
        let lhs = bm.stat(0);
        assert!((lhs.value - target).abs() < 4.0 * lhs.stderr);
        let mean_div = bm.stat(1);
        assert!(mean_div.value.abs() < 4.0 * mean_div.stderr);
    }

    #[test]
    fn number_operator_on_chaos() {
        let h = hv(&[0.3, -0.8]);
        let (h1, h2) = (h.clone(), h.clone());
        let first = SmoothFunctional::new(move |v| dot(v, &h1))
            .with_gradient(move |_| h2.clone())
            .with_hess_trace(|_| 0.0);
        let v = [1.1, 0.4];
        assert!((number_operator(&first, &v).unwrap() - first.value(&v)).abs() < 1e-15);

        let nh = h.norm_sq();
        let (ha, hb) = (h.clone(), h.clone());
        let second = SmoothFunctional::new(move |v| dot(v, &ha).powi(2) - nh)
            .with_gradient(move |v| hb.scaled(2.0 * dot(v, &hb)))
            .with_hess_trace(move |_| 2.0 * nh);
        assert!((number_operator(&second, &v).unwrap() - 2.0 * second.value(&v)).abs() < 1e-14);

        let c = SmoothFunctional::new(|_| 3.0)
            .with_gradient(|v| HVector::zeros(v.len()))
            .with_hess_trace(|_| 0.0);
        assert_eq!(number_operator(&c, &v).unwrap(), 0.0);
        assert!(number_operator(&SmoothFunctional::new(|_| 1.0), &v).is_err());
    }

    #[test]
    fn tilde_divergence_flat_likelihood() {
        let p: SignalPrior = AtomicPrior::point_mass(HVector::zeros(2)).unwrap().into();
        let engine = PosteriorEngine::new(&p).unwrap();
        let u = VectorField::constant(hv(&[1.0, 2.0]));
        let v = [0.3, 0.9];
        let t = tilde_divergence(&u, likelihood_provider(&engine, 1.0), &v).unwrap();
        assert_eq!(t, divergence(&u, &v).unwrap());
    }

    #[test]
    fn lemma_for_posterior_mean_field() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p: SignalPrior = AtomicPrior::random(3, 4, 1.0, &mut rng).unwrap().into();
        let rho = 0.8;
        let model = LikelihoodModel::new(&p).unwrap();
        let engine = PosteriorEngine::new(&p).unwrap();
        let xbar = posterior_mean_field(&model, rho).unwrap();
        for v in [[0.1, 0.2, -0.3], [2.0, -1.0, 0.5]] {
            let lhs = tilde_divergence(&xbar, likelihood_provider(&engine, rho), &v).unwrap();
            let ell = likelihood_functional(&model, rho, model.log_ell(&v, rho, &mut Vec::new()));
            let rhs = number_operator(&ell, &v).unwrap() / (rho * ell.value(&v));
            assert!((lhs - rhs).abs() <= 1e-8 * (1.0 + rhs.abs()));
            // Jacobian trace against finite differences.
            let tr = xbar.jacobian_trace(&v).unwrap();
            let fd = jacobian_trace_fd(&xbar, &v, 1e-5).unwrap();
            assert!((tr - fd).abs() < 1e-6);
        }
    }

    #[test]
    fn duality_under_observation_law() {
        // E_1[f delta~ u] = E_1[(grad f, u)] for f = <., h>, u constant.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p: SignalPrior = AtomicPrior::random(2, 3, 1.0, &mut rng).unwrap().into();
        let rho = 1.2;
        let engine = PosteriorEngine::new(&p).unwrap();
        let h = hv(&[0.6, -0.4]);
        let k = hv(&[1.0, 0.5]);
        let u = VectorField::constant(k.clone());
        let cfg = McConfig::new(100_000, 50, 8).unwrap();
        let bm = mc::run(&cfg, 1, |rng, out| {
            let x = p.sample(rng);
            let mut v = vec![0.0; 2];
            fill_noise(&mut v, rng);
            for (vi, xi) in v.iter_mut().zip(x.iter()) {
                *vi += rho * xi;
            }
            let td = tilde_divergence(&u, likelihood_provider(&engine, rho), &v)?;
            out[0] = dot(&v, &h) * td - dot(&h, &k);
            Ok(())
        })
        .unwrap();
        let r = bm.stat(0);
        assert!(r.value.abs() < 4.0 * r.stderr, "{:?}", r);
    }
}
