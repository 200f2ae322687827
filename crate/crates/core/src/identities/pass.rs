//! One Monte-Carlo pass over the joint law of `(x, z)` collecting every
//! per-sample statistic the identity checks need.

use crate::error::Result;
use crate::estimators::{CausalFilter, PosteriorEngine, ScanBuffers};
use crate::likelihood::PointSummary;
use crate::mc::{self, BatchMeans, Estimate, McConfig};
use crate::priors::SignalPrior;
use crate::wiener_space::{check_rho, dot, fill_noise};

pub(crate) const LOG_ELL: usize = 0;
pub(crate) const ENERGY: usize = 1;
/// `rho <v, x> - rho^2 |x|^2 / 2 - log l(v)`.
pub(crate) const INFO: usize = 2;
pub(crate) const ERR_NC: usize = 3;
pub(crate) const COV_NC: usize = 4;
pub(crate) const XBAR2: usize = 5;
pub(crate) const GRAD2: usize = 6;
pub(crate) const TRACE: usize = 7;
pub(crate) const ERR_C: usize = 8;
pub(crate) const VAR_C: usize = 9;
pub(crate) const XHAT2: usize = 10;
pub(crate) const LOG_ELL_UP: usize = 11;
pub(crate) const LOG_ELL_DN: usize = 12;
pub(crate) const INFO_UP: usize = 13;
pub(crate) const INFO_DN: usize = 14;
const STATS: usize = 15;

/// Default finite-difference step in `rho`.
pub fn default_fd_step(rho: f64) -> f64 {
    (rho / 100.0).max(1e-3)
}

pub(crate) struct JointPass {
    pub bm: BatchMeans,
    pub rho: f64,
    pub n: usize,
    pub exact: bool,
    pub causal: bool,
    /// Step used for the `rho +- h` statistics, when computed.
    pub fd_step: Option<f64>,
    pub mc: McConfig,
}

impl JointPass {
    pub fn run(
        prior: &SignalPrior,
        rho: f64,
        mc: &McConfig,
        causal: bool,
        fd_step: Option<f64>,
    ) -> Result<Self> {
        check_rho(rho)?;
        let engine = PosteriorEngine::new(prior)?;
        let filter = if causal {
            Some(CausalFilter::new(prior)?)
        } else {
            None
        };
        let fd_step = fd_step.filter(|h| *h > 0.0 && rho - h >= 0.0);
        let n = prior.dim();
        let half = 0.5 * rho * rho;
        let bm = mc::run(mc, STATS, |rng, out| {
            let mut x = vec![0.0; n];
            let mut z = vec![0.0; n];
            prior.sample_into(rng, &mut x);
            fill_noise(&mut z, rng);
            let v: Vec<f64> = x.iter().zip(&z).map(|(xi, zi)| rho * xi + zi).collect();
            let mut s = PointSummary::with_dim(n);
            let mut scratch = Vec::new();
            engine.summarize(&v, rho, rng, &mut scratch, &mut s)?;
            let x2 = dot(&x, &x);
            let xbar2 = dot(&s.mean, &s.mean);
            out[LOG_ELL] = s.log_ell;
            out[ENERGY] = x2;
            out[INFO] = rho * dot(&v, &x) - half * x2 - s.log_ell;
            out[ERR_NC] = x.iter().zip(&s.mean).map(|(a, b)| (a - b).powi(2)).sum();
            out[COV_NC] = s.cov_trace;
            out[XBAR2] = xbar2;
            out[GRAD2] = s.mean.iter().map(|m| (rho * m).powi(2)).sum();
            out[TRACE] = rho * rho * s.cov_trace;
            if let Some(f) = &filter {
                let mut buf = ScanBuffers::default();
                f.scan(&v, rho, &mut buf, None);
                out[ERR_C] = x
                    .iter()
                    .zip(&buf.predictable)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum();
                out[VAR_C] = buf.predictable_var.iter().sum();
                out[XHAT2] = dot(&buf.predictable, &buf.predictable);
            }
            if let Some(h) = fd_step {
                for (r, l_idx, i_idx) in [
                    (rho + h, LOG_ELL_UP, INFO_UP),
                    (rho - h, LOG_ELL_DN, INFO_DN),
                ] {
                    let w: Vec<f64> = x.iter().zip(&z).map(|(xi, zi)| r * xi + zi).collect();
                    engine.summarize(&w, r, rng, &mut scratch, &mut s)?;
                    out[l_idx] = s.log_ell;
                    out[i_idx] = r * dot(&w, &x) - 0.5 * r * r * x2 - s.log_ell;
                }
            }
            Ok(())
        })?;
        Ok(Self {
            bm,
            rho,
            n,
            exact: engine.is_exact(),
            causal,
            fd_step,
            mc: *mc,
        })
    }

    pub fn stat(&self, i: usize) -> Estimate {
        self.bm.stat(i)
    }

    pub fn derived(&self, g: impl Fn(&[f64]) -> f64) -> Estimate {
        self.bm.derived(g)
    }

    pub fn meta(&self) -> super::ReportMeta {
        super::ReportMeta {
            rho: self.rho,
            n: self.n,
            samples: self.mc.samples,
            seed: self.mc.seed,
        }
    }
}
