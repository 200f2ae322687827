use serde::{Deserialize, Serialize};

use crate::mc::Estimate;

/// Tolerance `abs + rel * max(|lhs|, |rhs|) + sigmas * stderr` where
/// `stderr` is the standard error of the residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceRule {
    pub sigmas: f64,
    pub abs: f64,
    pub rel: f64,
}

impl ToleranceRule {
    pub fn exact(abs: f64) -> Self {
        Self {
            sigmas: 0.0,
            abs,
            rel: 0.0,
        }
    }

    pub fn bound(&self, lhs: f64, rhs: f64, stderr: f64) -> f64 {
        self.abs + self.rel * lhs.abs().max(rhs.abs()) + self.sigmas * stderr
    }
}

/// Named tolerance constants used to build rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceProfile {
    /// Multiplier on the residual standard error.
    pub sigmas: f64,
    /// Absolute tolerance of closed-form identities.
    pub analytic: f64,
    /// Absolute tolerance of finite-difference comparisons.
    pub finite_difference: f64,
    /// Relative tolerance of finite-difference gradients,
    /// `|fd - an|_inf <= tol * (1 + |an|_inf)`.
    pub fd_gradient: f64,
    /// `C` in the causal bias allowance `C * rho^2 * E|x|^2 / n`.
    pub discretization: f64,
    /// Absolute floor added to statistical rules.
    pub statistical_floor: f64,
}

impl Default for ToleranceProfile {
    fn default() -> Self {
        Self {
            sigmas: 4.0,
            analytic: 1e-8,
            finite_difference: 1e-4,
            fd_gradient: 1e-5,
            discretization: 0.5,
            statistical_floor: 1e-9,
        }
    }
}

impl ToleranceProfile {
    /// Every tolerance set to zero; any nonzero residual fails.
    pub fn zero() -> Self {
        Self {
            sigmas: 0.0,
            analytic: 0.0,
            finite_difference: 0.0,
            fd_gradient: 0.0,
            discretization: 0.0,
            statistical_floor: 0.0,
        }
    }

    pub fn analytic(&self) -> ToleranceRule {
        ToleranceRule::exact(self.analytic)
    }

    pub fn statistical(&self) -> ToleranceRule {
        ToleranceRule {
            sigmas: self.sigmas,
            abs: self.statistical_floor,
            rel: 0.0,
        }
    }

    pub fn finite_difference(&self) -> ToleranceRule {
        ToleranceRule {
            sigmas: self.sigmas,
            abs: self.finite_difference,
            rel: 0.0,
        }
    }

    pub fn fd_gradient(&self) -> ToleranceRule {
        ToleranceRule::exact(self.fd_gradient)
    }

    /// Statistical rule plus the time-discretization allowance.
    pub fn causal(&self, rho: f64, energy: f64, n: usize) -> ToleranceRule {
        ToleranceRule {
            sigmas: self.sigmas,
            abs: self.statistical_floor + self.discretization * rho * rho * energy / n as f64,
            rel: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// `|lhs - rhs| <= tol`.
    Equal,
    /// `lhs - rhs <= tol`.
    AtMost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    /// Not evaluated; see the report note.
    Suppressed,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Pass => "true",
            Self::Fail => "false",
            Self::Suppressed => "suppressed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub rho: f64,
    pub n: usize,
    pub samples: usize,
    pub seed: u64,
}

/// One checked identity or inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub name: String,
    pub relation: Relation,
    pub lhs: f64,
    pub rhs: f64,
    pub stderr_lhs: f64,
    pub stderr_rhs: f64,
    /// Standard error of `lhs - rhs` used by the rule (paired when both
    /// sides come from the same draws).
    pub stderr_residual: f64,
    pub residual: f64,
    pub tolerance: f64,
    pub rule: ToleranceRule,
    pub status: Status,
    pub meta: ReportMeta,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl IdentityReport {
    /// Compares `lhs` with `rhs`. `residual_stderr` defaults to the
    /// quadrature sum of the two standard errors.
    pub fn compare(
        name: impl Into<String>,
        relation: Relation,
        lhs: Estimate,
        rhs: Estimate,
        residual_stderr: Option<f64>,
        rule: ToleranceRule,
        meta: ReportMeta,
    ) -> Self {
        let se = residual_stderr.unwrap_or_else(|| lhs.stderr.hypot(rhs.stderr));
        let residual = lhs.value - rhs.value;
        let tolerance = rule.bound(lhs.value, rhs.value, se);
        let ok = match relation {
            Relation::Equal => residual.abs() <= tolerance,
            Relation::AtMost => residual <= tolerance,
        };
        Self {
            name: name.into(),
            relation,
            lhs: lhs.value,
            rhs: rhs.value,
            stderr_lhs: lhs.stderr,
            stderr_rhs: rhs.stderr,
            stderr_residual: se,
            residual,
            tolerance,
            rule,
            status: if ok { Status::Pass } else { Status::Fail },
            meta,
            note: None,
        }
    }

    pub fn suppressed(name: impl Into<String>, meta: ReportMeta, note: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            relation: Relation::Equal,
            lhs: f64::NAN,
            rhs: f64::NAN,
            stderr_lhs: f64::NAN,
            stderr_rhs: f64::NAN,
            stderr_residual: f64::NAN,
            residual: f64::NAN,
            tolerance: f64::NAN,
            rule: ToleranceRule::exact(0.0),
            status: Status::Suppressed,
            meta,
            note: Some(note.into()),
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    /// True unless the check ran and failed.
    pub fn passed(&self) -> bool {
        self.status != Status::Fail
    }
}
