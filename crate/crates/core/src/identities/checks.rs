//! Monte-Carlo checks built on a joint pass.

use super::pass::*;
use super::report::{IdentityReport, Relation, ToleranceProfile};
use crate::error::Result;
use crate::mc::{Estimate, McConfig};
use crate::priors::SignalPrior;

pub(crate) fn relative_entropy_reports(
    p: &JointPass,
    energy: f64,
    profile: &ToleranceProfile,
) -> Vec<IdentityReport> {
    let half = 0.5 * p.rho * p.rho;
    let rel = p.stat(LOG_ELL);
    // E_1 log l against (rho^2/2) E|x|^2 - I, both from the same draws.
    let rhs = p.derived(|m| half * m[ENERGY] - m[INFO]);
    let se = p
        .derived(|m| m[LOG_ELL] - (half * m[ENERGY] - m[INFO]))
        .stderr;
    let mut out = vec![IdentityReport::compare(
        "relative_entropy_decomposition",
        Relation::Equal,
        rel,
        rhs,
        Some(se),
        profile.statistical(),
        p.meta(),
    )];
    if p.causal {
        let rhs = p.stat(XHAT2).scale(half);
        let se = p.derived(|m| m[LOG_ELL] - half * m[XHAT2]).stderr;
        out.push(IdentityReport::compare(
            "relative_entropy_causal",
            Relation::Equal,
            rel,
            rhs,
            Some(se),
            profile.causal(p.rho, energy, p.n),
            p.meta(),
        ));
    }
    out
}

/// `E_1 log l` against `(rho^2/2) E|x|^2 - I` and, for causally filterable
/// priors, against `(rho^2/2) E|xhat|^2`.
pub fn relative_entropy_checks(
    prior: &SignalPrior,
    rho: f64,
    mc: &McConfig,
    profile: &ToleranceProfile,
) -> Result<Vec<IdentityReport>> {
    let causal = crate::estimators::CausalFilter::new(prior).is_ok();
    let p = JointPass::run(prior, rho, mc, causal, None)?;
    let energy = prior.moments(mc)?.energy;
    Ok(relative_entropy_reports(&p, energy, profile))
}

pub(crate) fn duncan_report(
    p: &JointPass,
    energy: f64,
    profile: &ToleranceProfile,
) -> IdentityReport {
    let half = 0.5 * p.rho * p.rho;
    let se = p.derived(|m| half * m[VAR_C] - m[INFO]).stderr;
    IdentityReport::compare(
        "duncan",
        Relation::Equal,
        p.stat(VAR_C).scale(half),
        p.stat(INFO),
        Some(se),
        profile.causal(p.rho, energy, p.n),
        p.meta(),
    )
}

pub(crate) fn debruijn_reports(p: &JointPass, profile: &ToleranceProfile) -> Vec<IdentityReport> {
    let rho = p.rho;
    let meta = p.meta();
    let Some(h) = p.fd_step.filter(|h| rho >= 10.0 * h) else {
        return vec![IdentityReport::suppressed(
            "extended_debruijn",
            meta,
            "near-singular: rho below ten finite-difference steps",
        )];
    };
    let a = p.derived(|m| (m[LOG_ELL_UP] - m[LOG_ELL_DN]) / (2.0 * h));
    let b = p.stat(XBAR2).scale(rho);
    let c = p.stat(GRAD2).scale(1.0 / rho);
    let se_ab = p
        .derived(|m| (m[LOG_ELL_UP] - m[LOG_ELL_DN]) / (2.0 * h) - rho * m[XBAR2])
        .stderr;
    vec![
        IdentityReport::compare(
            "extended_debruijn",
            Relation::Equal,
            a,
            b,
            Some(se_ab),
            profile.finite_difference(),
            meta,
        ),
        IdentityReport::compare(
            "extended_debruijn_fisher",
            Relation::Equal,
            b,
            c,
            Some(p.derived(|m| rho * m[XBAR2] - m[GRAD2] / rho).stderr),
            profile.analytic(),
            meta,
        ),
    ]
}

/// Finite difference of `E_1 log l` in `rho` against `rho E_1|xbar|^2` and
/// `E_1|grad log l|^2 / rho`.
pub fn debruijn_check(
    prior: &SignalPrior,
    rho: f64,
    mc: &McConfig,
    fd_step: Option<f64>,
    profile: &ToleranceProfile,
) -> Result<Vec<IdentityReport>> {
    let h = fd_step.unwrap_or_else(|| default_fd_step(rho));
    let p = JointPass::run(prior, rho, mc, false, Some(h))?;
    Ok(debruijn_reports(&p, profile))
}

pub(crate) fn gsv_report(p: &JointPass, profile: &ToleranceProfile) -> IdentityReport {
    let rho = p.rho;
    let Some(h) = p.fd_step else {
        return IdentityReport::suppressed(
            "gsv_derivative",
            p.meta(),
            "rho below the finite-difference step",
        );
    };
    let d = p.derived(|m| (m[INFO_UP] - m[INFO_DN]) / (2.0 * h));
    let rhs = p.stat(COV_NC).scale(rho);
    let se = p
        .derived(|m| (m[INFO_UP] - m[INFO_DN]) / (2.0 * h) - rho * m[COV_NC])
        .stderr;
    IdentityReport::compare(
        "gsv_derivative",
        Relation::Equal,
        d,
        rhs,
        Some(se),
        profile.finite_difference(),
        p.meta(),
    )
}

/// Central difference of `I` in `rho` (common random numbers) against
/// `rho * mmse`.
pub fn gsv_derivative_check(
    prior: &SignalPrior,
    rho: f64,
    mc: &McConfig,
    fd_step: Option<f64>,
    profile: &ToleranceProfile,
) -> Result<IdentityReport> {
    let h = fd_step.unwrap_or_else(|| default_fd_step(rho));
    let p = JointPass::run(prior, rho, mc, false, Some(h))?;
    Ok(gsv_report(&p, profile))
}

pub(crate) fn trace_reports(
    p: &JointPass,
    energy: Option<f64>,
    profile: &ToleranceProfile,
) -> Vec<IdentityReport> {
    let r2 = p.rho * p.rho;
    let lhs = p.stat(TRACE);
    let energy_of = |m: &[f64]| energy.unwrap_or(m[ENERGY]);
    let mmse_form = p.derived(|m| r2 * (energy_of(m) - m[XBAR2]));
    let fisher_form = p.derived(|m| r2 * energy_of(m) - m[GRAD2]);
    vec![
        IdentityReport::compare(
            "trace_identity_mmse_form",
            Relation::Equal,
            lhs,
            mmse_form,
            Some(
                p.derived(|m| m[TRACE] - r2 * (energy_of(m) - m[XBAR2]))
                    .stderr,
            ),
            profile.statistical(),
            p.meta(),
        ),
        IdentityReport::compare(
            "trace_identity_fisher_form",
            Relation::Equal,
            lhs,
            fisher_form,
            Some(
                p.derived(|m| m[TRACE] - (r2 * energy_of(m) - m[GRAD2]))
                    .stderr,
            ),
            profile.statistical(),
            p.meta(),
        ),
    ]
}

/// `E_1 trace grad^2 log l` against `rho^2 (E|x|^2 - E|xbar|^2)` and
/// `rho^2 E|x|^2 - E|grad log l|^2`.
pub fn trace_identity_check(
    prior: &SignalPrior,
    rho: f64,
    mc: &McConfig,
    profile: &ToleranceProfile,
) -> Result<Vec<IdentityReport>> {
    let p = JointPass::run(prior, rho, mc, false, None)?;
    let m = prior.moments(mc)?;
    Ok(trace_reports(&p, m.exact.then_some(m.energy), profile))
}

pub(crate) fn lsi_report(p: &JointPass, profile: &ToleranceProfile) -> IdentityReport {
    IdentityReport::compare(
        "log_sobolev",
        Relation::AtMost,
        p.stat(LOG_ELL),
        p.stat(GRAD2).scale(0.5),
        Some(p.derived(|m| m[LOG_ELL] - 0.5 * m[GRAD2]).stderr),
        profile.statistical(),
        p.meta(),
    )
}

/// `E_1 log l <= (1/2) E_1 |grad log l|^2`; the gap is `-residual`.
pub fn lsi_gap(
    prior: &SignalPrior,
    rho: f64,
    mc: &McConfig,
    profile: &ToleranceProfile,
) -> Result<IdentityReport> {
    let p = JointPass::run(prior, rho, mc, false, None)?;
    Ok(lsi_report(&p, profile))
}

/// `(1/2) E_1|grad log l|^2 - E_1 log l` with its paired error.
pub fn lsi_gap_value(prior: &SignalPrior, rho: f64, mc: &McConfig) -> Result<Estimate> {
    let p = JointPass::run(prior, rho, mc, false, None)?;
    Ok(p.derived(|m| 0.5 * m[GRAD2] - m[LOG_ELL]))
}

pub(crate) fn causal_inequality_report(
    p: &JointPass,
    profile: &ToleranceProfile,
) -> IdentityReport {
    IdentityReport::compare(
        "causal_energy_inequality",
        Relation::AtMost,
        p.stat(XHAT2),
        p.stat(XBAR2),
        Some(p.derived(|m| m[XHAT2] - m[XBAR2]).stderr),
        profile.statistical(),
        p.meta(),
    )
}

/// `E|xhat|^2 <= E|xbar|^2`.
pub fn causal_inequality_check(
    prior: &SignalPrior,
    rho: f64,
    mc: &McConfig,
    profile: &ToleranceProfile,
) -> Result<IdentityReport> {
    let p = JointPass::run(prior, rho, mc, true, None)?;
    Ok(causal_inequality_report(&p, profile))
}

pub(crate) fn route_report(
    p: &JointPass,
    prior: &SignalPrior,
    profile: &ToleranceProfile,
) -> Result<IdentityReport> {
    let mi = super::mutual_info::mutual_info_from_pass(p, prior)?;
    let half = 0.5 * p.rho * p.rho;
    let m = prior.moments(&p.mc)?;
    let se = if m.exact {
        let e = m.energy;
        p.derived(|s| s[INFO] - (half * e - s[LOG_ELL])).stderr
    } else {
        p.derived(|s| s[INFO] - (half * s[ENERGY] - s[LOG_ELL]))
            .stderr
    };
    let r = IdentityReport::compare(
        "mutual_info_routes",
        Relation::Equal,
        mi.value,
        mi.alternative,
        Some(se),
        profile.statistical(),
        p.meta(),
    );
    Ok(match mi.note {
        Some(n) => r.with_note(n),
        None => r,
    })
}
