use serde::Serialize;

use super::pass::{JointPass, ENERGY, INFO, LOG_ELL, VAR_C};
use crate::error::{Error, Result};
use crate::estimators::{CausalFilter, PosteriorEngine};
use crate::likelihood::PointSummary;
use crate::mc::{self, Estimate, McConfig};
use crate::priors::SignalPrior;
use crate::wiener_space::{check_rho, fill_noise};

pub const NESTED_NOTE: &str = "nested-MC bias unquantified";

/// `I(x; y)` with its alternative estimator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MutualInfo {
    /// Mean of `log(d mu_{Y|X} / d mu_W) - log l`.
    pub value: Estimate,
    /// `(rho^2 / 2) E|x|^2 - E_1 log l`.
    pub alternative: Estimate,
    pub exact_posterior: bool,
    pub note: Option<String>,
}

pub(crate) fn mutual_info_from_pass(p: &JointPass, prior: &SignalPrior) -> Result<MutualInfo> {
    let half = 0.5 * p.rho * p.rho;
    let moments = prior.moments(&p.mc)?;
    let alternative = if moments.exact {
        let e = moments.energy;
        p.derived(|m| half * e - m[LOG_ELL])
    } else {
        p.derived(|m| half * m[ENERGY] - m[LOG_ELL])
    };
    Ok(MutualInfo {
        value: p.stat(INFO),
        alternative,
        exact_posterior: p.exact,
        note: (!p.exact).then(|| NESTED_NOTE.to_string()),
    })
}

/// Mutual information by direct averaging over the joint law.
pub fn mutual_info_direct(prior: &SignalPrior, rho: f64, mc: &McConfig) -> Result<MutualInfo> {
    let p = JointPass::run(prior, rho, mc, false, None)?;
    mutual_info_from_pass(&p, prior)
}

/// `(rho^2 / 2) * causal MMSE` with the predictable estimate.
pub fn mutual_info_duncan(prior: &SignalPrior, rho: f64, mc: &McConfig) -> Result<Estimate> {
    let p = JointPass::run(prior, rho, mc, true, None)?;
    Ok(p.stat(VAR_C).scale(0.5 * rho * rho))
}

fn validate_grid(grid: &[f64], max_spacing: f64) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidGrid("empty rho grid".into()));
    }
    if !(max_spacing > 0.0) {
        return Err(Error::InvalidGrid(format!(
            "max spacing must be positive, got {max_spacing}"
        )));
    }
    let mut prev = 0.0;
    for (i, &r) in grid.iter().enumerate() {
        if !r.is_finite() || r < 0.0 {
            return Err(Error::InvalidGrid(format!(
                "rho[{i}] = {r} is not a finite nonnegative value"
            )));
        }
        if i > 0 && r <= prev {
            return Err(Error::InvalidGrid(format!(
                "rho grid not increasing at index {i}"
            )));
        }
        prev = r;
    }
    Ok(())
}

/// Largest refined grid accepted by [`refine_grid`].
pub const MAX_REFINED_NODES: usize = 100_000;

/// Subdivides every gap of `{0} + grid` into pieces no longer than
/// `max_spacing`. Returns the refined grid and the positions of the original
/// points in it.
pub fn refine_grid(grid: &[f64], max_spacing: f64) -> Result<(Vec<f64>, Vec<usize>)> {
    validate_grid(grid, max_spacing)?;
    let nodes: f64 = grid
        .iter()
        .scan(0.0, |prev, &r| {
            let k = ((r - *prev) / max_spacing).ceil().max(1.0);
            *prev = r;
            Some(k)
        })
        .sum();
    if !(nodes <= MAX_REFINED_NODES as f64) {
        return Err(Error::InvalidGrid(format!(
            "refinement needs {nodes} nodes, more than {MAX_REFINED_NODES}"
        )));
    }
    let mut out = Vec::new();
    let mut idx = Vec::with_capacity(grid.len());
    let mut prev = 0.0;
    for &r in grid {
        let pieces = ((r - prev) / max_spacing).ceil().max(1.0) as usize;
        for k in 1..pieces {
            out.push(prev + (r - prev) * k as f64 / pieces as f64);
        }
        out.push(r);
        idx.push(out.len() - 1);
        prev = r;
    }
    Ok((out, idx))
}

/// Mutual information by integrating `s * mmse(s)` over the grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImmseCurve {
    pub rho: Vec<f64>,
    pub mutual_info: Vec<Estimate>,
    /// Non-causal MMSE (posterior-variance form) at each grid point.
    pub mmse: Vec<Estimate>,
    /// Estimated trapezoid error, `sum h^3 |f''| / 12`; NaN with fewer than
    /// three nodes.
    pub quadrature_error: Vec<f64>,
}

/// Composite-trapezoid integral of `s * mmse(s)` from 0 to each grid point,
/// with common random numbers across the grid. Fails when a gap (including
/// the one from 0) exceeds `max_spacing`.
pub fn mutual_info_immse(
    prior: &SignalPrior,
    grid: &[f64],
    mc: &McConfig,
    max_spacing: f64,
) -> Result<ImmseCurve> {
    validate_grid(grid, max_spacing)?;
    let mut prev = 0.0;
    for (i, &r) in grid.iter().enumerate() {
        if r - prev > max_spacing * (1.0 + 1e-12) {
            return Err(Error::InvalidGrid(format!(
                "gap {:.4} before rho[{i}] = {r} exceeds the maximum spacing {max_spacing}",
                r - prev
            )));
        }
        prev = r;
    }
    let engine = PosteriorEngine::new(prior)?;
    let n = prior.dim();
    let m = grid.len();
    let bm = mc::run(mc, m, |rng, out| {
        let mut x = vec![0.0; n];
        let mut z = vec![0.0; n];
        prior.sample_into(rng, &mut x);
        fill_noise(&mut z, rng);
        let mut s = PointSummary::with_dim(n);
        let mut scratch = Vec::new();
        let mut v = vec![0.0; n];
        for (o, &r) in out.iter_mut().zip(grid) {
            for ((vi, xi), zi) in v.iter_mut().zip(&x).zip(&z) {
                *vi = r * xi + zi;
            }
            engine.summarize(&v, r, rng, &mut scratch, &mut s)?;
            *o = s.cov_trace;
        }
        Ok(())
    })?;
    // Integration nodes: 0 (contributing 0 * mmse(0) = 0) then the grid.
    let lead = usize::from(grid[0] > 0.0);
    let mut nodes = vec![0.0; lead];
    nodes.extend_from_slice(grid);
    let integrand = |mm: &[f64], k: usize| {
        if k < lead {
            0.0
        } else {
            nodes[k] * mm[k - lead]
        }
    };
    let cumulative = |mm: &[f64], j: usize| {
        let end = j + lead;
        (1..=end)
            .map(|k| 0.5 * (nodes[k] - nodes[k - 1]) * (integrand(mm, k) + integrand(mm, k - 1)))
            .sum::<f64>()
    };
    let grand = bm.grand();
    let interval_err: Vec<f64> = (1..nodes.len())
        .map(|k| {
            if nodes.len() < 3 {
                return f64::NAN;
            }
            let c = k.clamp(1, nodes.len() - 2);
            let (a, b, d) = (nodes[c - 1], nodes[c], nodes[c + 1]);
            let (fa, fb, fd) = (
                integrand(&grand, c - 1),
                integrand(&grand, c),
                integrand(&grand, c + 1),
            );
            let second = 2.0 * ((fd - fb) / (d - b) - (fb - fa) / (b - a)) / (d - a);
            let h = nodes[k] - nodes[k - 1];
            h.powi(3) * second.abs() / 12.0
        })
        .collect();
    Ok(ImmseCurve {
        rho: grid.to_vec(),
        mutual_info: (0..m).map(|j| bm.derived(|mm| cumulative(mm, j))).collect(),
        mmse: (0..m).map(|j| bm.stat(j)).collect(),
        quadrature_error: (0..m)
            .map(|j| interval_err[..j + lead].iter().sum())
            .collect(),
    })
}

/// One row of an SNR sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnrPoint {
    pub rho: f64,
    pub i_direct: Estimate,
    pub i_direct_alt: Estimate,
    pub i_immse: Estimate,
    pub i_immse_quad_error: f64,
    pub i_duncan: Option<Estimate>,
    /// Posterior-variance form.
    pub mmse_nc: Estimate,
    /// Predictable-variance form.
    pub mmse_c: Option<Estimate>,
    pub rel_ent: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnrCurve {
    pub n: usize,
    pub points: Vec<SnrPoint>,
    pub notes: Vec<String>,
}

/// Every mutual-information route at each grid point.
pub fn snr_sweep(
    prior: &SignalPrior,
    grid: &[f64],
    mc: &McConfig,
    max_spacing: f64,
) -> Result<SnrCurve> {
    for &r in grid {
        check_rho(r)?;
    }
    let (fine, idx) = refine_grid(grid, max_spacing)?;
    let immse = mutual_info_immse(prior, &fine, mc, max_spacing)?;
    let causal = CausalFilter::new(prior).is_ok();
    let mut notes = Vec::new();
    if !causal {
        notes.push("causal routes unavailable for this prior".to_string());
    }
    let mut points = Vec::with_capacity(grid.len());
    for (&rho, &k) in grid.iter().zip(&idx) {
        let p = JointPass::run(prior, rho, mc, causal, None)?;
        let mi = mutual_info_from_pass(&p, prior)?;
        if let Some(note) = &mi.note {
            if !notes.contains(note) {
                notes.push(note.clone());
            }
        }
        let half = 0.5 * rho * rho;
        points.push(SnrPoint {
            rho,
            i_direct: mi.value,
            i_direct_alt: mi.alternative,
            i_immse: immse.mutual_info[k],
            i_immse_quad_error: immse.quadrature_error[k],
            i_duncan: causal.then(|| p.stat(VAR_C).scale(half)),
            mmse_nc: p.stat(super::pass::COV_NC),
            mmse_c: causal.then(|| p.stat(VAR_C)),
            rel_ent: p.stat(LOG_ELL),
        });
    }
    Ok(SnrCurve {
        n: prior.dim(),
        points,
        notes,
    })
}
