//! Classical de Bruijn identity for a scalar `y = x + sqrt(t) w`, by
//! quadrature on both sides.

use std::f64::consts::PI;

use super::report::{IdentityReport, Relation, ReportMeta, ToleranceProfile};
use crate::error::{Error, Result};
use crate::mc::Estimate;
use crate::oracle::QuadratureRule;
use crate::priors::AmplitudeLaw;

/// `(h(y), J(y))` with `h = -E log p` and `J = E (d/dy log p)^2`.
fn entropy_and_fisher(law: &AmplitudeLaw, t: f64, rule: &QuadratureRule) -> (f64, f64) {
    let st = t.sqrt();
    let (mut h, mut j) = (0.0, 0.0);
    match law {
        AmplitudeLaw::Atomic { values, weights } => {
            let mut terms = vec![0.0; values.len()];
            for (ak, pk) in values.iter().zip(weights) {
                for (xi, wi) in rule.nodes().iter().zip(rule.weights()) {
                    let y = ak + st * xi;
                    for (tm, (am, pm)) in terms.iter_mut().zip(values.iter().zip(weights)) {
                        *tm = pm.ln() - (y - am).powi(2) / (2.0 * t);
                    }
                    let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let (mut s0, mut s1) = (0.0, 0.0);
                    for (tm, am) in terms.iter().zip(values) {
                        let e = (tm - top).exp();
                        s0 += e;
                        s1 += e * (am - y) / t;
                    }
                    let log_p = top + s0.ln() - 0.5 * (2.0 * PI * t).ln();
                    h -= pk * wi * log_p;
                    j += pk * wi * (s1 / s0).powi(2);
                }
            }
        }
        AmplitudeLaw::Gaussian { mean, var } => {
            let c = var + t;
            for (x1, w1) in rule.nodes().iter().zip(rule.weights()) {
                for (x2, w2) in rule.nodes().iter().zip(rule.weights()) {
                    let y = mean + var.sqrt() * x1 + st * x2;
                    let r = y - mean;
                    h -= w1 * w2 * (-0.5 * (2.0 * PI * c).ln() - r * r / (2.0 * c));
                    j += w1 * w2 * (r / c).powi(2);
                }
            }
        }
    }
    (h, j)
}

/// `d/dt h(y) = J(y) / 2`, the derivative by Richardson-extrapolated central
/// differences in `t` over fixed quadrature nodes.
pub fn classical_debruijn_1d(
    law: &AmplitudeLaw,
    t: f64,
    order: usize,
    profile: &ToleranceProfile,
) -> Result<IdentityReport> {
    law.validate()?;
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "t must be positive, got {t}"
        )));
    }
    let rule = QuadratureRule::gauss_hermite(order)?;
    let h_at = |s: f64| entropy_and_fisher(law, s, &rule).0;
    let d = |step: f64| (h_at(t + step) - h_at(t - step)) / (2.0 * step);
    let step = 1e-2 * t;
    let lhs = (4.0 * d(step / 2.0) - d(step)) / 3.0;
    let rhs = 0.5 * entropy_and_fisher(law, t, &rule).1;
    Ok(IdentityReport::compare(
        "classical_debruijn",
        Relation::Equal,
        Estimate::exact(lhs),
        Estimate::exact(rhs),
        Some(0.0),
        profile.finite_difference(),
        ReportMeta {
            rho: 1.0 / t.sqrt(),
            n: 1,
            samples: 0,
            seed: 0,
        },
    ))
}
