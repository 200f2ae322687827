//! Mutual information by three routes and checked identities with
//! quantified residuals.

mod analytic;
mod checks;
mod convergence;
mod debruijn;
mod mutual_info;
mod pass;
mod report;

pub use analytic::{
    debruijn_fisher_check, gradient_identity_check, hessian_trace_check, moment_recursion_battery,
    number_identity_check, GRADIENT_FD_STEP, HESSIAN_FD_STEP,
};
pub use checks::{
    causal_inequality_check, debruijn_check, gsv_derivative_check, lsi_gap, lsi_gap_value,
    relative_entropy_checks, trace_identity_check,
};
pub use convergence::{causal_convergence, ConvergenceRow, ConvergenceStudy};
pub use debruijn::classical_debruijn_1d;
pub use mutual_info::{
    mutual_info_direct, mutual_info_duncan, mutual_info_immse, refine_grid, snr_sweep, ImmseCurve,
    MutualInfo, SnrCurve, SnrPoint, NESTED_NOTE,
};
pub use pass::default_fd_step;
pub use report::{IdentityReport, Relation, ReportMeta, Status, ToleranceProfile, ToleranceRule};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::estimators::CausalFilter;
use crate::mc::McConfig;
use crate::priors::SignalPrior;
use pass::JointPass;

/// Longest product checked by the moment recursion in [`battery`].
pub const RECURSION_MAX_LEN: usize = 3;
pub const CLASSICAL_QUAD_ORDER: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryOptions {
    /// Step in `rho`; defaults to [`default_fd_step`].
    pub fd_step: Option<f64>,
    /// Observations drawn for the per-sample closed-form checks.
    pub analytic_samples: usize,
    pub profile: ToleranceProfile,
}

impl Default for BatteryOptions {
    fn default() -> Self {
        Self {
            fd_step: None,
            analytic_samples: 100,
            profile: ToleranceProfile::default(),
        }
    }
}

/// Every applicable identity at one `rho`. Per-sample closed-form checks run
/// for priors with finite support; the Monte-Carlo checks share one joint
/// pass; causal checks run when the prior admits a causal filter.
pub fn battery(
    prior: &SignalPrior,
    rho: f64,
    mc: &McConfig,
    opts: &BatteryOptions,
) -> Result<Vec<IdentityReport>> {
    let profile = &opts.profile;
    let mut out = Vec::new();
    if prior.to_atomic().is_ok() {
        let (k, seed) = (opts.analytic_samples, mc.seed);
        out.extend(gradient_identity_check(prior, rho, k, seed, profile)?);
        out.extend(hessian_trace_check(prior, rho, k, seed, profile)?);
        out.push(moment_recursion_battery(
            prior,
            rho,
            k,
            RECURSION_MAX_LEN,
            seed,
            profile,
        )?);
        out.extend(number_identity_check(prior, rho, k, seed, profile)?);
        out.push(debruijn_fisher_check(prior, rho, k, seed, profile)?);
    }
    let causal = CausalFilter::new(prior).is_ok();
    let h = opts.fd_step.unwrap_or_else(|| default_fd_step(rho));
    let p = JointPass::run(prior, rho, mc, causal, Some(h))?;
    let moments = prior.moments(mc)?;
    out.push(checks::route_report(&p, prior, profile)?);
    out.extend(checks::relative_entropy_reports(
        &p,
        moments.energy,
        profile,
    ));
    out.push(checks::gsv_report(&p, profile));
    out.extend(checks::debruijn_reports(&p, profile));
    out.extend(checks::trace_reports(
        &p,
        moments.exact.then_some(moments.energy),
        profile,
    ));
    out.push(checks::lsi_report(&p, profile));
    if causal {
        out.push(checks::duncan_report(&p, moments.energy, profile));
        out.push(checks::causal_inequality_report(&p, profile));
    }
    if let (SignalPrior::ScaledShape(s), true) = (prior, rho > 0.0) {
        let t = 1.0 / (rho * rho * s.shape().norm_sq());
        let mut r = classical_debruijn_1d(s.amplitude(), t, CLASSICAL_QUAD_ORDER, profile)?;
        r.meta = p.meta();
        out.push(r);
    }
    Ok(out)
}
