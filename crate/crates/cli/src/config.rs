//! Experiment configuration: one TOML file per experiment.

use std::fmt;
use std::path::{Path, PathBuf};

use immse_core::identities::{BatteryOptions, ToleranceProfile};
use immse_core::{
    AmplitudeLaw, AtomicPrior, Basis, GaussianDiagonalPrior, HVector, McConfig, ScaledShapePrior,
    SignalPrior,
};
use serde::Deserialize;

/// Environment variable supplying the seed when neither the flag nor the
/// config sets one.
pub const SEED_ENV: &str = "IMMSE_SEED";

const DEFAULT_MAX_SPACING: f64 = 0.1;
const DEFAULT_ANALYTIC_SAMPLES: usize = 100;

/// A rejected configuration, located by line and field where possible.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub line: Option<usize>,
    pub field: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(l) = self.line {
            write!(f, "line {l}: ")?
        }
        if !self.field.is_empty() {
            write!(f, "field `{}`: ", self.field)?;
        }
        f.write_str(&self.message)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    prior: PriorSpec,
    basis: RawBasis,
    rho: RawRho,
    mc: RawMc,
    #[serde(default)]
    fd: RawFd,
    #[serde(default)]
    tolerance: ToleranceProfile,
    #[serde(default)]
    identities: RawIdentities,
    #[serde(default)]
    convergence: Option<RawConvergence>,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBasis {
    n: usize,
    #[serde(default = "one")]
    horizon: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRho {
    grid: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMc {
    samples: usize,
    batches: usize,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFd {
    step: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawIdentities {
    analytic_samples: usize,
    max_spacing: f64,
}

impl Default for RawIdentities {
    fn default() -> Self {
        Self {
            analytic_samples: DEFAULT_ANALYTIC_SAMPLES,
            max_spacing: DEFAULT_MAX_SPACING,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConvergence {
    n_list: Vec<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawOutput {
    dir: PathBuf,
}

impl Default for RawOutput {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
        }
    }
}

/// Prior family and parameters.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorSpec {
    Atomic {
        atoms: Vec<Vec<f64>>,
        weights: Vec<f64>,
    },
    PointMass {
        atom: Vec<f64>,
    },
    GaussianDiagonal {
        #[serde(default)]
        mean: Option<Vec<f64>>,
        variances: ScalarOrList,
    },
    ScaledShape {
        shape: ShapeSpec,
        amplitude: AmplitudeSpec,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ScalarOrList {
    Scalar(f64),
    List(Vec<f64>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ShapeSpec {
    /// `"constant"`: the unit-energy constant rate.
    Named(String),
    Coefficients(Vec<f64>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AmplitudeSpec {
    Gaussian {
        #[serde(default)]
        mean: f64,
        var: f64,
    },
    Binary {
        a: f64,
    },
    Atomic {
        values: Vec<f64>,
        weights: Vec<f64>,
    },
}

impl AmplitudeSpec {
    fn build(&self) -> AmplitudeLaw {
        match self {
            Self::Gaussian { mean, var } => AmplitudeLaw::Gaussian {
                mean: *mean,
                var: *var,
            },
            Self::Binary { a } => AmplitudeLaw::symmetric_binary(*a),
            Self::Atomic { values, weights } => AmplitudeLaw::Atomic {
                values: values.clone(),
                weights: weights.clone(),
            },
        }
    }
}

impl PriorSpec {
    /// Builds the prior on `basis`.
    pub fn build(&self, basis: &Basis) -> immse_core::Result<SignalPrior> {
        let n = basis.n();
        let check = |len: usize| {
            if len == n {
                Ok(())
            } else {
                Err(immse_core::Error::DimensionMismatch {
                    expected: n,
                    found: len,
                })
            }
        };
        Ok(match self {
            Self::Atomic { atoms, weights } => {
                for a in atoms {
                    check(a.len())?;
                }
                let atoms = atoms.iter().cloned().map(HVector::new).collect();
                AtomicPrior::new(atoms, weights.clone())?.into()
            }
            Self::PointMass { atom } => {
                check(atom.len())?;
                AtomicPrior::point_mass(HVector::new(atom.clone()))?.into()
            }
            Self::GaussianDiagonal { mean, variances } => {
                let mean = match mean {
                    Some(m) => {
                        check(m.len())?;
                        HVector::new(m.clone())
                    }
                    None => HVector::zeros(n),
                };
                let variances = match variances {
                    ScalarOrList::Scalar(v) => vec![*v; n],
                    ScalarOrList::List(v) => {
                        check(v.len())?;
                        v.clone()
                    }
                };
                GaussianDiagonalPrior::new(mean, variances)?.into()
            }
            Self::ScaledShape { shape, amplitude } => {
                let shape = match shape {
                    ShapeSpec::Named(s) if s == "constant" => basis.constant_shape(),
                    ShapeSpec::Named(s) => {
                        return Err(immse_core::Error::InvalidPrior(format!(
                            "unknown shape `{s}` (expected \"constant\" or a coefficient list)"
                        )))
                    }
                    ShapeSpec::Coefficients(c) => {
                        check(c.len())?;
                        HVector::new(c.clone())
                    }
                };
                ScaledShapePrior::new(shape, amplitude.build())?.into()
            }
        })
    }

    /// Field most likely responsible for a build error.
    fn field(&self) -> &'static str {
        match self {
            Self::Atomic { .. } => "prior.atoms",
            Self::PointMass { .. } => "prior.atom",
            Self::GaussianDiagonal { .. } => "prior.variances",
            Self::ScaledShape { .. } => "prior.amplitude",
        }
    }
}

/// A validated experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub prior_spec: PriorSpec,
    pub prior: SignalPrior,
    pub basis: Basis,
    pub rho_grid: Vec<f64>,
    pub mc: McConfig,
    pub fd_step: Option<f64>,
    pub tolerance: ToleranceProfile,
    pub analytic_samples: usize,
    pub max_spacing: f64,
    pub n_list: Option<Vec<usize>>,
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn battery_options(&self) -> BatteryOptions {
        BatteryOptions {
            fd_step: self.fd_step,
            analytic_samples: self.analytic_samples,
            profile: self.tolerance,
        }
    }
}

/// Reads and validates a config file. `seed_override` replaces the config
/// seed; `default_seed` applies when neither sets one.
pub fn load(
    path: &Path,
    seed_override: Option<u64>,
    default_seed: Option<u64>,
) -> Result<ExperimentConfig, Diagnostic> {
    let text = std::fs::read_to_string(path).map_err(|e| Diagnostic {
        line: None,
        field: String::new(),
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    parse(&text, seed_override, default_seed)
}

pub fn parse(
    text: &str,
    seed_override: Option<u64>,
    default_seed: Option<u64>,
) -> Result<ExperimentConfig, Diagnostic> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Diagnostic {
        line: e.span().map(|s| line_of(text, s.start)),
        field: String::new(),
        message: e.message().trim().to_string(),
    })?;
    let fail = |field: &str, message: String| Diagnostic {
        line: locate(text, field),
        field: field.to_string(),
        message,
    };

    let basis = Basis::new(raw.basis.n, raw.basis.horizon).map_err(|e| {
        let field = if raw.basis.n == 0 {
            "basis.n"
        } else {
            "basis.horizon"
        };
        fail(field, e.to_string())
    })?;
    let prior = raw
        .prior
        .build(&basis)
        .map_err(|e| fail(raw.prior.field(), e.to_string()))?;

    if raw.rho.grid.is_empty() {
        return Err(fail("rho.grid", "grid is empty".into()));
    }
    if let Some(r) = raw.rho.grid.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
        return Err(fail(
            "rho.grid",
            format!("entries must be finite and nonnegative, got {r}"),
        ));
    }
    if raw.rho.grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(fail("rho.grid", "grid must be strictly increasing".into()));
    }

    let seed = seed_override.or(raw.mc.seed).or(default_seed).unwrap_or(0);
    let mc = McConfig::new(raw.mc.samples, raw.mc.batches, seed).map_err(|e| {
        let field = if raw.mc.batches < immse_core::mc::MIN_BATCHES {
            "mc.batches"
        } else {
            "mc.samples"
        };
        fail(field, e.to_string())
    })?;

    if let Some(h) = raw.fd.step {
        if !(h.is_finite() && h > 0.0) {
            return Err(fail(
                "fd.step",
                format!("must be positive and finite, got {h}"),
            ));
        }
    }
    let t = &raw.tolerance;
    for (name, v) in [
        ("sigmas", t.sigmas),
        ("analytic", t.analytic),
        ("finite_difference", t.finite_difference),
        ("fd_gradient", t.fd_gradient),
        ("discretization", t.discretization),
        ("statistical_floor", t.statistical_floor),
    ] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(fail(
                &format!("tolerance.{name}"),
                format!("must be finite and nonnegative, got {v}"),
            ));
        }
    }
    if raw.identities.analytic_samples == 0 {
        return Err(fail(
            "identities.analytic_samples",
            "must be positive".into(),
        ));
    }
    let s = raw.identities.max_spacing;
    if !(s.is_finite() && s > 0.0) {
        return Err(fail(
            "identities.max_spacing",
            format!("must be positive and finite, got {s}"),
        ));
    }

    let n_list = match raw.convergence {
        None => None,
        Some(c) => {
            let l = c.n_list;
            if l.is_empty() {
                return Err(fail("convergence.n_list", "list is empty".into()));
            }
            if l.windows(2).any(|w| w[0] >= w[1]) || l[0] == 0 {
                return Err(fail(
                    "convergence.n_list",
                    "entries must be positive and strictly increasing".into(),
                ));
            }
            let last = *l.last().unwrap();
            if last != basis.n() {
                return Err(fail(
                    "convergence.n_list",
                    format!("last entry {last} must equal basis.n = {}", basis.n()),
                ));
            }
            if let Some(k) = l.iter().find(|&&k| last % k != 0) {
                return Err(fail(
                    "convergence.n_list",
                    format!("{k} does not divide {last}"),
                ));
            }
            Some(l)
        }
    };

    Ok(ExperimentConfig {
        prior_spec: raw.prior,
        prior,
        basis,
        rho_grid: raw.rho.grid,
        mc,
        fd_step: raw.fd.step,
        tolerance: raw.tolerance,
        analytic_samples: raw.identities.analytic_samples,
        max_spacing: s,
        n_list,
        out_dir: raw.output.dir,
    })
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of `section.key` (or of the section header when the key is absent).
fn locate(text: &str, field: &str) -> Option<usize> {
    let (section, key) = field.rsplit_once('.')?;
    let mut in_section = false;
    let mut header = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            in_section = line.trim_matches(|c| c == '[' || c == ']').trim() == section;
            if in_section {
                header = Some(i + 1);
            }
            continue;
        }
        if in_section {
            if let Some(rest) = line.strip_prefix(key) {
                if rest.trim_start().starts_with('=') {
                    return Some(i + 1);
                }
            }
        }
    }
    header
}
