//! Subcommand implementations and file writers.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use immse_core::identities::{
    battery, causal_convergence, snr_sweep, ConvergenceStudy, IdentityReport, SnrCurve, Status,
};
use immse_core::{Basis, Estimate};
use serde::Serialize;
use thiserror::Error;

use crate::config::ExperimentConfig;

/// Version stamped into every CSV row and JSON document.
pub const SCHEMA_VERSION: u32 = 1;

pub const SWEEP_COLUMNS: [&str; 14] = [
    "schema_version",
    "rho",
    "I_direct",
    "I_direct_se",
    "I_immse",
    "I_immse_se",
    "I_duncan",
    "I_duncan_se",
    "mmse_nc",
    "mmse_nc_se",
    "mmse_c",
    "mmse_c_se",
    "relent",
    "relent_se",
];

pub const VERIFY_COLUMNS: [&str; 12] = [
    "schema_version",
    "identity",
    "rho",
    "n",
    "N",
    "lhs",
    "rhs",
    "stderr_lhs",
    "stderr_rhs",
    "residual",
    "tolerance",
    "pass",
];

pub const CONVERGENCE_COLUMNS: [&str; 19] = [
    "schema_version",
    "rho",
    "n",
    "N",
    "I_direct",
    "I_direct_se",
    "I_duncan",
    "I_duncan_se",
    "mmse_c",
    "mmse_c_se",
    "causal_energy",
    "causal_energy_se",
    "relent",
    "relent_se",
    "duncan_residual",
    "duncan_residual_se",
    "relent_residual",
    "relent_residual_se",
    "fitted_order",
];

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Compute(#[from] immse_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Usage(String),
}

/// Files written by a command, and whether every check passed.
#[derive(Debug)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub all_passed: bool,
}

/// Shortest round-trip decimal, scientific outside `[1e-4, 1e15)`.
fn num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn est(e: Estimate) -> [String; 2] {
    [num(e.value), num(e.stderr)]
}

fn opt(e: Option<Estimate>) -> [String; 2] {
    e.map_or([String::new(), String::new()], est)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    let io = |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(bytes).map_err(io)
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), RunError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| RunError::Usage(e.to_string()))?;
    write_file(path, &bytes)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RunError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_file(path, s.as_bytes())
}

fn prepare(dir: &Path) -> Result<(), RunError> {
    fs::create_dir_all(dir).map_err(|source| RunError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

#[derive(Serialize)]
struct Document<'a, T> {
    schema_version: u32,
    seed: u64,
    samples: usize,
    batches: usize,
    #[serde(flatten)]
    body: &'a T,
}

fn document<'a, T>(cfg: &ExperimentConfig, body: &'a T) -> Document<'a, T> {
    Document {
        schema_version: SCHEMA_VERSION,
        seed: cfg.mc.seed,
        samples: cfg.mc.samples,
        batches: cfg.mc.batches,
        body,
    }
}

pub fn sweep_rows(curve: &SnrCurve) -> Vec<Vec<String>> {
    curve
        .points
        .iter()
        .map(|p| {
            let mut row = vec![SCHEMA_VERSION.to_string(), num(p.rho)];
            row.extend(est(p.i_direct));
            row.extend(est(p.i_immse));
            row.extend(opt(p.i_duncan));
            row.extend(est(p.mmse_nc));
            row.extend(opt(p.mmse_c));
            row.extend(est(p.rel_ent));
            row
        })
        .collect()
}

/// Runs the SNR sweep and writes `sweep.csv` and `sweep.json`.
pub fn cmd_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, RunError> {
    let curve = snr_sweep(&cfg.prior, &cfg.rho_grid, &cfg.mc, cfg.max_spacing)?;
    prepare(out)?;
    let csv = out.join("sweep.csv");
    let json = out.join("sweep.json");
    write_csv(&csv, &SWEEP_COLUMNS, &sweep_rows(&curve))?;
    write_json(&json, &document(cfg, &curve))?;
    Ok(Outcome {
        files: vec![csv, json],
        all_passed: true,
    })
}

pub fn verify_rows(reports: &[IdentityReport]) -> Vec<Vec<String>> {
    reports
        .iter()
        .map(|r| {
            vec![
                SCHEMA_VERSION.to_string(),
                r.name.clone(),
                num(r.meta.rho),
                r.meta.n.to_string(),
                r.meta.samples.to_string(),
                num(r.lhs),
                num(r.rhs),
                num(r.stderr_lhs),
                num(r.stderr_rhs),
                num(r.residual),
                num(r.tolerance),
                r.status.as_str().to_string(),
            ]
        })
        .collect()
}

/// Runs the identity battery at every grid point and writes `verify.csv`
/// and `verify.json`. Suppressed checks do not count as failures.
pub fn cmd_verify(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, RunError> {
    let opts = cfg.battery_options();
    let mut reports = Vec::new();
    for &rho in &cfg.rho_grid {
        reports.extend(battery(&cfg.prior, rho, &cfg.mc, &opts)?);
    }
    prepare(out)?;
    let csv = out.join("verify.csv");
    let json = out.join("verify.json");
    write_csv(&csv, &VERIFY_COLUMNS, &verify_rows(&reports))?;
    #[derive(Serialize)]
    struct Body<'a> {
        reports: &'a [IdentityReport],
    }
    write_json(&json, &document(cfg, &Body { reports: &reports }))?;
    Ok(Outcome {
        files: vec![csv, json],
        all_passed: reports.iter().all(|r| r.status != Status::Fail),
    })
}

pub fn convergence_rows(studies: &[ConvergenceStudy], samples: usize) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for s in studies {
        let fit = s.fitted_order.map(num).unwrap_or_default();
        for r in &s.rows {
            let mut row = vec![
                SCHEMA_VERSION.to_string(),
                num(s.rho),
                r.n.to_string(),
                samples.to_string(),
            ];
            for e in [
                r.i_direct,
                r.i_duncan,
                r.mmse_c,
                r.causal_energy,
                r.rel_ent,
                r.duncan_residual,
                r.relent_residual,
            ] {
                row.extend(est(e));
            }
            row.push(fit.clone());
            rows.push(row);
        }
    }
    rows
}

/// Runs the causal discretization study at every grid point and writes
/// `convergence.csv` and `convergence.json`.
pub fn cmd_convergence(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, RunError> {
    let n_list = cfg.n_list.clone().unwrap_or_else(|| vec![cfg.basis.n()]);
    let finest = Basis::new(*n_list.last().unwrap(), cfg.basis.horizon())?;
    let prior = cfg.prior_spec.build(&finest)?;
    let studies = cfg
        .rho_grid
        .iter()
        .map(|&rho| causal_convergence(&prior, &n_list, rho, &cfg.mc))
        .collect::<Result<Vec<_>, _>>()?;
    prepare(out)?;
    let csv = out.join("convergence.csv");
    let json = out.join("convergence.json");
    write_csv(
        &csv,
        &CONVERGENCE_COLUMNS,
        &convergence_rows(&studies, cfg.mc.samples),
    )?;
    #[derive(Serialize)]
    struct Body<'a> {
        studies: &'a [ConvergenceStudy],
    }
    write_json(&json, &document(cfg, &Body { studies: &studies }))?;
    Ok(Outcome {
        files: vec![csv, json],
        all_passed: true,
    })
}
