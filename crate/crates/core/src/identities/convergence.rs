//! Discretization study of the causal identities with noise and signal
//! shared across resolutions: each coarse level is the block projection of
//! the finest draw.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{CausalFilter, ScanBuffers};
use crate::likelihood::{LikelihoodModel, PointSummary};
use crate::mc::{self, Estimate, McConfig};
use crate::priors::SignalPrior;
use crate::wiener_space::{check_rho, dot, fill_noise, HVector};

const PER_LEVEL: usize = 5;
const INFO: usize = 0;
const LOG_ELL: usize = 1;
const VAR_C: usize = 2;
const XHAT2: usize = 3;
const ERR_C: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub i_direct: Estimate,
    /// `(rho^2 / 2)` times the predictable-variance causal MMSE.
    pub i_duncan: Estimate,
    /// Predictable-variance form.
    pub mmse_c: Estimate,
    pub mmse_c_naive: Estimate,
    pub rel_ent: Estimate,
    /// `(rho^2 / 2) E|xhat|^2`.
    pub causal_energy: Estimate,
    /// `I_duncan - I_direct`, paired.
    pub duncan_residual: Estimate,
    /// `E_1 log l - (rho^2 / 2) E|xhat|^2`, paired.
    pub relent_residual: Estimate,
    /// Paired decrease of `duncan_residual` from the previous row. The
    /// direct estimate is shared by all rows, so this isolates the change
    /// in discretization bias.
    pub duncan_drop: Option<Estimate>,
    /// Paired decrease of `relent_residual` from the previous row.
    pub relent_drop: Option<Estimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceStudy {
    pub rho: f64,
    pub rows: Vec<ConvergenceRow>,
    /// Empirical order `p` of the Duncan bias `~ n^-p`: the negated slope
    /// of `log |drop|` against `log n` over consecutive rows when there are
    /// three or more rows, otherwise of `log |duncan_residual|`.
    pub fitted_order: Option<f64>,
}

/// Runs the causal identities at each resolution in `n_list`. `prior` lives
/// on the finest resolution, which must be the last entry; every entry must
/// divide it.
pub fn causal_convergence(
    prior: &SignalPrior,
    n_list: &[usize],
    rho: f64,
    mc: &McConfig,
) -> Result<ConvergenceStudy> {
    check_rho(rho)?;
    let Some(&n_max) = n_list.last() else {
        return Err(Error::InvalidArgument("empty resolution list".into()));
    };
    if n_list.windows(2).any(|w| w[0] >= w[1]) || n_list[0] == 0 {
        return Err(Error::InvalidArgument(
            "resolutions must be positive and increasing".into(),
        ));
    }
    if prior.dim() != n_max {
        return Err(Error::DimensionMismatch {
            expected: n_max,
            found: prior.dim(),
        });
    }
    if let Some(n) = n_list.iter().find(|&&n| n_max % n != 0) {
        return Err(Error::InvalidArgument(format!(
            "resolution {n} does not divide the finest resolution {n_max}"
        )));
    }
    let levels = n_list
        .iter()
        .map(|&n| {
            let p = prior.coarsen(n_max / n)?;
            Ok((n_max / n, LikelihoodModel::new(&p)?, CausalFilter::new(&p)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let half = 0.5 * rho * rho;
    let bm = mc::run(mc, PER_LEVEL * levels.len(), |rng, out| {
        let x = prior.sample(rng);
        let mut z = vec![0.0; n_max];
        fill_noise(&mut z, rng);
        let z = HVector::new(z);
        let mut s = PointSummary::default();
        let mut scratch = Vec::new();
        let mut buf = ScanBuffers::default();
        for (l, (factor, model, filter)) in levels.iter().enumerate() {
            let xc = x.coarsen(*factor)?;
            let zc = z.coarsen(*factor)?;
            let v: Vec<f64> = xc.iter().zip(zc.iter()).map(|(a, b)| rho * a + b).collect();
            model.summarize(&v, rho, &mut scratch, &mut s);
            filter.scan(&v, rho, &mut buf, None);
            let o = &mut out[l * PER_LEVEL..(l + 1) * PER_LEVEL];
            let x2 = xc.norm_sq();
            o[INFO] = rho * dot(&v, &xc) - half * x2 - s.log_ell;
            o[LOG_ELL] = s.log_ell;
            o[VAR_C] = buf.predictable_var.iter().sum();
            o[XHAT2] = dot(&buf.predictable, &buf.predictable);
            o[ERR_C] = xc
                .iter()
                .zip(&buf.predictable)
                .map(|(a, b)| (a - b).powi(2))
                .sum();
        }
        Ok(())
    })?;
    let k = |l: usize, i: usize| l * PER_LEVEL + i;
    let duncan = |m: &[f64], l: usize| half * m[k(l, VAR_C)] - m[k(l, INFO)];
    let relent = |m: &[f64], l: usize| m[k(l, LOG_ELL)] - half * m[k(l, XHAT2)];
    let rows: Vec<ConvergenceRow> = n_list
        .iter()
        .enumerate()
        .map(|(l, &n)| ConvergenceRow {
            n,
            i_direct: bm.stat(k(l, INFO)),
            i_duncan: bm.stat(k(l, VAR_C)).scale(half),
            mmse_c: bm.stat(k(l, VAR_C)),
            mmse_c_naive: bm.stat(k(l, ERR_C)),
            rel_ent: bm.stat(k(l, LOG_ELL)),
            causal_energy: bm.stat(k(l, XHAT2)).scale(half),
            duncan_residual: bm.derived(|m| duncan(m, l)),
            relent_residual: bm.derived(|m| relent(m, l)),
            duncan_drop: (l > 0).then(|| bm.derived(|m| duncan(m, l - 1) - duncan(m, l))),
            relent_drop: (l > 0).then(|| bm.derived(|m| relent(m, l - 1) - relent(m, l))),
        })
        .collect();
    let pts: Vec<(f64, f64)> = if rows.len() >= 3 {
        rows.windows(2)
            .filter_map(|w| w[1].duncan_drop.map(|d| (w[0].n as f64, d.value)))
            .collect()
    } else {
        rows.iter()
            .map(|r| (r.n as f64, r.duncan_residual.value))
            .collect()
    };
    let pts: Vec<(f64, f64)> = pts
        .into_iter()
        .filter(|p| p.1 != 0.0)
        .map(|(n, r)| (n.ln(), r.abs().ln()))
        .collect();
    let fitted_order = (pts.len() >= 2).then(|| {
        let c = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / c;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / c;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        -sxy / sxx
    });
    Ok(ConvergenceStudy {
        rho,
        rows,
        fitted_order,
    })
}
