//! Reference computations written independently of the likelihood and
//! estimator code: conjugate Gaussian closed forms, one-dimensional
//! Gauss-Hermite quadrature and small tensor-product quadrature.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::priors::{AmplitudeLaw, AtomicPrior};

/// Gauss-Hermite rule for expectations under N(0, 1).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    /// Nodes seeded by the eigenvalues of the Jacobi matrix and polished by
    /// Newton iteration on the orthonormal Hermite recurrence; weights from
    /// the derivative at each node, rescaled from the `exp(-x^2)` weight to
    /// N(0, 1).
    pub fn gauss_hermite(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::Quadrature("order must be positive".into()));
        }
        let n = order;
        let nf = n as f64;
        let pim4 = PI.powf(-0.25);
        let mut d = vec![0.0; n];
        let mut e: Vec<f64> = (1..=n)
            .map(|k| if k < n { (0.5 * k as f64).sqrt() } else { 0.0 })
            .collect();
        tridiagonal_eigenvalues(&mut d, &mut e)?;
        d.sort_by(|a, b| b.total_cmp(a));
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut z = if 2 * i + 1 == n { 0.0 } else { d[i] };
            // Polynomial values are renormalized as they grow; `log_scale`
            // tracks the removed factor so the weights stay exact.
            let mut pp = 0.0;
            let mut log_scale = 0.0;
            let mut converged = false;
            for _ in 0..100 {
                let (mut p1, mut p2) = (pim4, 0.0f64);
                log_scale = 0.0;
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
                    if p1.abs() > 1e150 {
                        p1 *= 1e-150;
                        p2 *= 1e-150;
                        log_scale += 150.0 * std::f64::consts::LN_10;
                    }
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-14 * z.abs().max(1.0) {
                    converged = true;
                    break;
                }
            }
            if !converged || (z - d[i]).abs() > 1e-6 * d[i].abs().max(1.0) {
                return Err(Error::Quadrature(format!(
                    "Newton failed for order {order}"
                )));
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = (2f64.ln() - 2.0 * (pp.abs().ln() + log_scale)).exp();
            w[n - 1 - i] = w[i];
        }
        let mut pairs: Vec<(f64, f64)> = x
            .iter()
            .zip(&w)
            .map(|(xi, wi)| (xi * 2f64.sqrt(), wi / PI.sqrt()))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `E f(xi)` for `xi ~ N(0, 1)`.
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(*x))
            .sum()
    }
}

/// Eigenvalues of the symmetric tridiagonal matrix with diagonal `d` and
/// off-diagonal `e[0..n-1]` by implicit QL; `d` holds them on return.
fn tridiagonal_eigenvalues(d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::Quadrature("QL iteration did not converge".into()));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// Closed forms for the random-constant model `x'(t) = A`, `A ~ N(0, s2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianClosedForm {
    pub mutual_info: f64,
    pub mmse_nc: f64,
    /// `int_0^T` of the causal error rate.
    pub mmse_c_integral: f64,
    pub rel_ent: f64,
    pub e_xbar2: f64,
    pub e_xhat2: f64,
}

pub fn gaussian_closed_form(sigma2: f64, horizon: f64, rho: f64) -> Result<GaussianClosedForm> {
    if !(sigma2 >= 0.0) || !(horizon > 0.0) || !(rho >= 0.0) || !rho.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "need sigma2 >= 0, T > 0, rho >= 0 (got {sigma2}, {horizon}, {rho})"
        )));
    }
    let e = sigma2 * horizon;
    let snr = rho * rho * e;
    let log1p = snr.ln_1p();
    let mmse_c = if rho == 0.0 { e } else { log1p / (rho * rho) };
    let mmse_nc = e / (1.0 + snr);
    Ok(GaussianClosedForm {
        mutual_info: 0.5 * log1p,
        mmse_nc,
        mmse_c_integral: mmse_c,
        rel_ent: 0.5 * (snr - log1p),
        e_xbar2: e - mmse_nc,
        e_xhat2: e - mmse_c,
    })
}

/// Scalar channel `v = rho A + xi` integrated by quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarQuadrature {
    pub mutual_info: f64,
    pub mmse_nc: f64,
    /// `E log l(v)` under the observation law.
    pub rel_ent: f64,
    /// `E (E[A | v])^2`.
    pub e_xbar2: f64,
    pub order: usize,
    /// Largest change between `order` and `2 * order`.
    pub doubling_change: f64,
}

const DOUBLING_LIMIT: f64 = 1e-6;

fn max_change(a: &ScalarQuadrature, b: &ScalarQuadrature) -> f64 {
    [
        a.mutual_info - b.mutual_info,
        a.mmse_nc - b.mmse_nc,
        a.rel_ent - b.rel_ent,
        a.e_xbar2 - b.e_xbar2,
    ]
    .iter()
    .fold(0.0f64, |m, d| m.max(d.abs()))
}

/// Quadrature reference for a scalar amplitude law, self-checked against the
/// rule of twice the order.
pub fn quadrature_scalar(law: &AmplitudeLaw, rho: f64, order: usize) -> Result<ScalarQuadrature> {
    law.validate()?;
    if !(rho >= 0.0) || !rho.is_finite() {
        return Err(Error::InvalidRho(rho));
    }
    if order < 2 {
        return Err(Error::Quadrature("order must be at least 2".into()));
    }
    let lo = scalar_at(law, rho, &QuadratureRule::gauss_hermite(order)?);
    let hi = scalar_at(law, rho, &QuadratureRule::gauss_hermite(2 * order)?);
    let change = max_change(&lo, &hi);
    if !(change <= DOUBLING_LIMIT) {
        return Err(Error::Quadrature(format!(
            "order doubling {order} -> {} changed the result by {change:e}",
            2 * order
        )));
    }
    Ok(ScalarQuadrature {
        order,
        doubling_change: change,
        ..lo
    })
}

fn scalar_at(law: &AmplitudeLaw, rho: f64, rule: &QuadratureRule) -> ScalarQuadrature {
    let mut acc = [0.0; 4];
    match law {
        AmplitudeLaw::Atomic { values, weights } => {
            // Residual form: log p(v | A_k) - log p(v)
            //   = -log sum_m p_m exp(-(v - rho A_m)^2/2 + (v - rho A_k)^2/2).
            let mut terms = vec![0.0; values.len()];
            for (ak, pk) in values.iter().zip(weights) {
                for (xi, wj) in rule.nodes.iter().zip(&rule.weights) {
                    let v = rho * ak + xi;
                    let own = 0.5 * xi * xi;
                    for (t, (am, pm)) in terms.iter_mut().zip(values.iter().zip(weights)) {
                        let r = v - rho * am;
                        *t = pm.ln() - 0.5 * r * r + own;
                    }
                    let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let (mut s0, mut s1) = (0.0, 0.0);
                    for (t, am) in terms.iter().zip(values) {
                        let e = (t - top).exp();
                        s0 += e;
                        s1 += e * am;
                    }
                    let info = -(top + s0.ln());
                    let post = s1 / s0;
                    let wt = pk * wj;
                    acc[0] += wt * info;
                    acc[1] += wt * (ak - post).powi(2);
                    // log l(v) = log p(v) - log phi(v) = log p(v|A_k) - info - log phi(v).
                    acc[2] += wt * (-0.5 * xi * xi + 0.5 * v * v - info);
                    acc[3] += wt * post * post;
                }
            }
        }
        AmplitudeLaw::Gaussian { mean, var } => {
            let c = 1.0 + rho * rho * var;
            let sd = var.sqrt();
            for (x1, w1) in rule.nodes.iter().zip(&rule.weights) {
                let a = mean + sd * x1;
                for (x2, w2) in rule.nodes.iter().zip(&rule.weights) {
                    let v = rho * a + x2;
                    let r = v - rho * mean;
                    let log_marg = -0.5 * (2.0 * PI * c).ln() - r * r / (2.0 * c);
                    let log_cond = -0.5 * (2.0 * PI).ln() - 0.5 * x2 * x2;
                    let post = mean + rho * var * r / c;
                    let wt = w1 * w2;
                    acc[0] += wt * (log_cond - log_marg);
                    acc[1] += wt * (a - post).powi(2);
                    acc[2] += wt * (log_marg + 0.5 * (2.0 * PI).ln() + 0.5 * v * v);
                    acc[3] += wt * post * post;
                }
            }
        }
    }
    ScalarQuadrature {
        mutual_info: acc[0],
        mmse_nc: acc[1],
        rel_ent: acc[2],
        e_xbar2: acc[3],
        order: rule.order(),
        doubling_change: 0.0,
    }
}

/// Tensor-product quadrature reference for an atomic prior in `n <= 3`
/// coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TensorQuadrature {
    pub mutual_info: f64,
    pub mmse_nc: f64,
    pub rel_ent: f64,
    pub order: usize,
}

pub const TENSOR_MAX_DIM: usize = 3;
pub const TENSOR_MAX_NODES: usize = 1_000_000;

pub fn tensor_quadrature(prior: &AtomicPrior, rho: f64, order: usize) -> Result<TensorQuadrature> {
    let n = prior.dim();
    if n == 0 || n > TENSOR_MAX_DIM {
        return Err(Error::Quadrature(format!(
            "tensor quadrature needs 1 <= n <= {TENSOR_MAX_DIM}, got {n}"
        )));
    }
    let total = (order as u128).pow(n as u32);
    if total > TENSOR_MAX_NODES as u128 {
        return Err(Error::Quadrature(format!(
            "order^n = {total} exceeds the budget of {TENSOR_MAX_NODES}"
        )));
    }
    if !(rho >= 0.0) || !rho.is_finite() {
        return Err(Error::InvalidRho(rho));
    }
    let rule = QuadratureRule::gauss_hermite(order)?;
    let atoms: Vec<&[f64]> = prior.atoms().iter().map(|a| a.as_slice()).collect();
    let weights = prior.weights();
    let mut idx = vec![0usize; n];
    let mut xi = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut post = vec![0.0; n];
    let mut terms = vec![0.0; atoms.len()];
    let (mut info, mut mmse, mut rel) = (0.0, 0.0, 0.0);
    for _ in 0..total {
        let mut wz = 1.0;
        for d in 0..n {
            xi[d] = rule.nodes[idx[d]];
            wz *= rule.weights[idx[d]];
        }
        let xi2: f64 = xi.iter().map(|t| t * t).sum();
        for (ak, pk) in atoms.iter().zip(weights) {
            for d in 0..n {
                v[d] = rho * ak[d] + xi[d];
            }
            for (t, (am, pm)) in terms.iter_mut().zip(atoms.iter().zip(weights)) {
                let r2: f64 = (0..n).map(|d| (v[d] - rho * am[d]).powi(2)).sum();
                *t = pm.ln() - 0.5 * r2;
            }
            let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut s0 = 0.0;
            post.iter_mut().for_each(|p| *p = 0.0);
            for (t, am) in terms.iter().zip(&atoms) {
                let e = (t - top).exp();
                s0 += e;
                for d in 0..n {
                    post[d] += e * am[d];
                }
            }
            let log_mix = top + s0.ln();
            let v2: f64 = v.iter().map(|t| t * t).sum();
            let wt = pk * wz;
            info += wt * (-0.5 * xi2 - log_mix);
            rel += wt * (log_mix + 0.5 * v2);
            mmse += wt * (0..n).map(|d| (ak[d] - post[d] / s0).powi(2)).sum::<f64>();
        }
        for d in (0..n).rev() {
            idx[d] += 1;
            if idx[d] < order {
                break;
            }
            idx[d] = 0;
        }
    }
    Ok(TensorQuadrature {
        mutual_info: info,
        mmse_nc: mmse,
        rel_ent: rel,
        order,
    })
}

/// One golden reference value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenRecord {
    pub model: String,
    pub params: serde_json::Map<String, serde_json::Value>,
    pub quantity: String,
    pub value: f64,
    pub method: String,
    pub order: Option<usize>,
}

pub const GOLDEN_ORDER: usize = 256;

/// The reference values committed with the repository.
pub fn golden_records() -> Result<Vec<GoldenRecord>> {
    let mut out = Vec::new();
    let params = |pairs: &[(&str, f64)]| {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), serde_json::json!(v)))
            .collect::<serde_json::Map<_, _>>()
    };
    for rho in [0.5, 1.0, 2.0] {
        let q = quadrature_scalar(&AmplitudeLaw::symmetric_binary(1.0), rho, GOLDEN_ORDER)?;
        for (name, value) in [
            ("mutual_info", q.mutual_info),
            ("mmse_nc", q.mmse_nc),
            ("rel_ent", q.rel_ent),
            ("e_xbar2", q.e_xbar2),
        ] {
            out.push(GoldenRecord {
                model: "binary_scalar".into(),
                params: params(&[("amplitude", 1.0), ("rho", rho)]),
                quantity: name.into(),
                value,
                method: "gauss_hermite".into(),
                order: Some(GOLDEN_ORDER),
            });
        }
    }
    for rho in [0.5, 1.0, 2.0] {
        let g = gaussian_closed_form(1.0, 1.0, rho)?;
        for (name, value) in [
            ("mutual_info", g.mutual_info),
            ("mmse_nc", g.mmse_nc),
            ("mmse_c_integral", g.mmse_c_integral),
            ("rel_ent", g.rel_ent),
            ("e_xbar2", g.e_xbar2),
            ("e_xhat2", g.e_xhat2),
        ] {
            out.push(GoldenRecord {
                model: "gaussian_random_constant".into(),
                params: params(&[("sigma2", 1.0), ("horizon", 1.0), ("rho", rho)]),
                quantity: name.into(),
                value,
                method: "closed_form".into(),
                order: None,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wiener_space::HVector;

    #[test]
    fn rule_moments() {
        for order in [2, 5, 32, 64, 128, 512] {
            let r = QuadratureRule::gauss_hermite(order).unwrap();
            assert!((r.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!((r.expect(|x| x * x) - 1.0).abs() < 1e-12);
            assert!(r.expect(|x| x).abs() < 1e-12);
            if order >= 3 {
                assert!((r.expect(|x| x.powi(4)) - 3.0).abs() < 1e-11);
            }
        }
        assert!(QuadratureRule::gauss_hermite(0).is_err());
    }

    #[test]
    fn closed_form_examples() {
        let g = gaussian_closed_form(1.0, 1.0, 1.0).unwrap();
        assert!((g.mutual_info - 0.5 * 2f64.ln()).abs() < 1e-15);
        assert!((g.mmse_nc - 0.5).abs() < 1e-15);
        assert!((g.mmse_c_integral - 2f64.ln()).abs() < 1e-15);
        assert!((g.rel_ent - (1.0 - 2f64.ln()) / 2.0).abs() < 1e-15);
        let z = gaussian_closed_form(2.0, 1.5, 0.0).unwrap();
        assert_eq!((z.mutual_info, z.mmse_nc, z.rel_ent), (0.0, 3.0, 0.0));
        for (s2, t, rho) in [(0.3, 2.0, 1.7), (4.0, 0.5, 0.2), (1.0, 1.0, 3.0)] {
            let g = gaussian_closed_form(s2, t, rho).unwrap();
            assert!((g.mutual_info - 0.5 * rho * rho * g.mmse_c_integral).abs() < 1e-12);
            assert!((g.mutual_info - (0.5 * rho * rho * s2 * t - g.rel_ent)).abs() < 1e-12);
        }
        assert!(gaussian_closed_form(1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn scalar_quadrature_cross_checks() {
        let pm = quadrature_scalar(
            &AmplitudeLaw::Atomic {
                values: vec![0.7],
                weights: vec![1.0],
            },
            1.3,
            32,
        )
        .unwrap();
        assert!(pm.mutual_info.abs() < 1e-12 && pm.mmse_nc.abs() < 1e-12);
        for rho in [0.0, 0.5, 1.0, 2.0] {
            let q = quadrature_scalar(
                &AmplitudeLaw::Gaussian {
                    mean: 0.0,
                    var: 1.0,
                },
                rho,
                64,
            )
            .unwrap();
            let g = gaussian_closed_form(1.0, 1.0, rho).unwrap();
            assert!((q.mutual_info - g.mutual_info).abs() < 1e-8);
            assert!((q.mmse_nc - g.mmse_nc).abs() < 1e-8);
            assert!((q.rel_ent - g.rel_ent).abs() < 1e-8);
            assert!((q.e_xbar2 - g.e_xbar2).abs() < 1e-8);
            let b = quadrature_scalar(&AmplitudeLaw::symmetric_binary(1.0), rho, 256).unwrap();
            assert!(b.doubling_change < 1e-8);
            assert!((b.mutual_info - (0.5 * rho * rho - b.rel_ent)).abs() < 1e-8);
            assert!((b.mmse_nc - (1.0 - b.e_xbar2)).abs() < 1e-8);
        }
    }

    #[test]
    fn tensor_quadrature_consistency() {
        let law = AmplitudeLaw::Atomic {
            values: vec![-1.0, 0.5, 2.0],
            weights: vec![0.2, 0.5, 0.3],
        };
        let s = quadrature_scalar(&law, 1.2, 64).unwrap();
        let p = AtomicPrior::new(
            vec![
                HVector::new(vec![-1.0]),
                HVector::new(vec![0.5]),
                HVector::new(vec![2.0]),
            ],
            vec![0.2, 0.5, 0.3],
        )
        .unwrap();
        let t = tensor_quadrature(&p, 1.2, 64).unwrap();
        assert!((s.mutual_info - t.mutual_info).abs() < 1e-10);
        assert!((s.mmse_nc - t.mmse_nc).abs() < 1e-10);
        assert!((s.rel_ent - t.rel_ent).abs() < 1e-10);

        // Product of two independent binary coordinates.
        let mut atoms = Vec::new();
        let mut weights = Vec::new();
        for (a, pa) in [(-1.0, 0.5), (1.0, 0.5)] {
            for (b, pb) in [(-0.5, 0.3), (2.0, 0.7)] {
                atoms.push(HVector::new(vec![a, b]));
                weights.push(pa * pb);
            }
        }
        let prod = tensor_quadrature(&AtomicPrior::new(atoms, weights).unwrap(), 0.9, 64).unwrap();
        let i1 = quadrature_scalar(&AmplitudeLaw::symmetric_binary(1.0), 0.9, 64).unwrap();
        let i2 = quadrature_scalar(
            &AmplitudeLaw::Atomic {
                values: vec![-0.5, 2.0],
                weights: vec![0.3, 0.7],
            },
            0.9,
            64,
        )
        .unwrap();
        assert!((prod.mutual_info - i1.mutual_info - i2.mutual_info).abs() < 1e-8);
        assert!((prod.mmse_nc - i1.mmse_nc - i2.mmse_nc).abs() < 1e-8);

        let big = AtomicPrior::point_mass(HVector::zeros(4)).unwrap();
        assert!(tensor_quadrature(&big, 1.0, 4).is_err());
        let p3 = AtomicPrior::point_mass(HVector::zeros(3)).unwrap();
        assert!(tensor_quadrature(&p3, 1.0, 101).is_err());
    }
}
