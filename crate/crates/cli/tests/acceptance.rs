//! Acceptance suite: one line per criterion, nonzero exit if any fails.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use immse_core::identities::*;
use immse_core::mc::aux_rng;
use immse_core::oracle::gaussian_closed_form;
use immse_core::*;
use rand::Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

type Check = fn() -> Result<Verdict>;

const RHOS: [f64; 3] = [0.5, 1.0, 2.0];

fn mc(samples: usize, seed: u64) -> McConfig {
    McConfig::new(samples, 50, seed).expect("valid mc config")
}

fn constant(n: usize, amp: AmplitudeLaw) -> SignalPrior {
    let basis = Basis::new(n, 1.0).expect("basis");
    ScaledShapePrior::new(basis.constant_shape(), amp)
        .expect("prior")
        .into()
}

fn gaussian(n: usize) -> SignalPrior {
    constant(
        n,
        AmplitudeLaw::Gaussian {
            mean: 0.0,
            var: 1.0,
        },
    )
}

fn binary(n: usize) -> SignalPrior {
    constant(n, AmplitudeLaw::symmetric_binary(1.0))
}

/// Random atomic priors with at most five atoms on at most eight steps,
/// each paired with a rho from the standard grid.
fn atomic_battery(count: usize, tag: u64) -> Vec<(SignalPrior, f64)> {
    let mut rng = aux_rng(2024, tag);
    (0..count)
        .map(|i| {
            let n = rng.random_range(1..=8);
            let k = rng.random_range(1..=5);
            let p = AtomicPrior::random(n, k, 1.0, &mut rng).expect("random prior");
            (p.into(), RHOS[i % RHOS.len()])
        })
        .collect()
}

fn worst(reports: &[IdentityReport], name: &str) -> f64 {
    reports
        .iter()
        .filter(|r| r.name == name)
        .map(|r| r.residual.abs())
        .fold(0.0, f64::max)
}

fn all_pass(reports: &[IdentityReport]) -> bool {
    reports.iter().all(|r| r.status != Status::Fail)
}

fn failing(reports: &[IdentityReport]) -> String {
    let bad: Vec<String> = reports
        .iter()
        .filter(|r| r.status == Status::Fail)
        .map(|r| {
            format!(
                "{}@rho={} residual={:.3e} tol={:.3e}",
                r.name, r.meta.rho, r.residual, r.tolerance
            )
        })
        .collect();
    if bad.is_empty() {
        String::new()
    } else {
        format!("; failing: {}", bad.join(", "))
    }
}

fn tight() -> ToleranceProfile {
    ToleranceProfile {
        analytic: 1e-10,
        ..ToleranceProfile::default()
    }
}

fn c1_gradient() -> Result<Verdict> {
    let profile = tight();
    let mut reports = Vec::new();
    for (i, (p, rho)) in atomic_battery(10, 1).iter().enumerate() {
        reports.extend(gradient_identity_check(p, *rho, 100, i as u64, &profile)?);
    }
    Ok(Verdict::new(
        all_pass(&reports),
        format!(
            "max |grad log l - rho xbar|_inf = {:.2e} (<= 1e-10), max fd rel = {:.2e} (<= 1e-5){}",
            worst(&reports, "gradient_identity"),
            worst(&reports, "gradient_finite_difference"),
            failing(&reports)
        ),
    ))
}

fn c2_trace() -> Result<Verdict> {
    let profile = tight();
    let mut per_sample = Vec::new();
    for (i, (p, rho)) in atomic_battery(10, 1).iter().enumerate() {
        per_sample.extend(hessian_trace_check(p, *rho, 100, i as u64, &profile)?);
    }
    let analytic: Vec<_> = per_sample
        .into_iter()
        .filter(|r| r.name == "hessian_trace_identity")
        .collect();
    let mut averaged = Vec::new();
    let three = AtomicPrior::random(4, 3, 1.0, &mut aux_rng(2024, 9))?.into();
    for prior in [binary(64), three] {
        for rho in RHOS {
            averaged.extend(trace_identity_check(
                &prior,
                rho,
                &mc(100_000, 21),
                &ToleranceProfile::default(),
            )?);
        }
    }
    let z = averaged
        .iter()
        .map(|r| r.residual.abs() / r.stderr_residual.max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    Ok(Verdict::new(
        all_pass(&analytic) && all_pass(&averaged),
        format!(
            "per-sample max residual {:.2e} (<= 1e-10); E_1 trace identity max |z| = {z:.2} over {} reports{}{}",
            worst(&analytic, "hessian_trace_identity"),
            averaged.len(),
            failing(&analytic),
            failing(&averaged)
        ),
    ))
}

fn c3_recursion() -> Result<Verdict> {
    let profile = ToleranceProfile::default();
    let mut reports = Vec::new();
    for (i, (p, rho)) in atomic_battery(10, 1).iter().enumerate() {
        reports.push(moment_recursion_battery(
            p, *rho, 100, 3, i as u64, &profile,
        )?);
    }
    Ok(Verdict::new(
        all_pass(&reports),
        format!(
            "max residual {:.2e} (<= 1e-8){}",
            worst(&reports, "moment_recursion"),
            failing(&reports)
        ),
    ))
}

fn c4_number() -> Result<Verdict> {
    let profile = ToleranceProfile::default();
    let mut reports = Vec::new();
    for (i, (p, rho)) in atomic_battery(10, 1).iter().enumerate() {
        reports.extend(number_identity_check(p, *rho, 100, i as u64, &profile)?);
    }
    Ok(Verdict::new(
        all_pass(&reports),
        format!(
            "L log l: {:.2e}, lemma: {:.2e} (<= 1e-8){}",
            worst(&reports, "number_operator_log_likelihood"),
            worst(&reports, "tilde_divergence_lemma"),
            failing(&reports)
        ),
    ))
}

fn c5_gsv() -> Result<Verdict> {
    let prior = binary(64);
    let cfg = mc(200_000, 5);
    let profile = ToleranceProfile::default();
    let mut reports = Vec::new();
    for rho in RHOS {
        reports.push(gsv_derivative_check(&prior, rho, &cfg, None, &profile)?);
    }
    let curve = snr_sweep(&prior, &RHOS, &cfg, 0.05)?;
    let mut route_ok = true;
    let mut worst_ratio: f64 = 0.0;
    for p in &curve.points {
        let tol = profile.sigmas * p.i_immse.stderr.hypot(p.i_direct.stderr) + p.i_immse_quad_error;
        let diff = (p.i_immse.value - p.i_direct.value).abs();
        route_ok &= diff <= tol;
        worst_ratio = worst_ratio.max(diff / tol);
    }
    Ok(Verdict::new(
        all_pass(&reports) && route_ok,
        format!(
            "dI/drho vs rho*mmse max |residual| {:.2e}; I_immse vs I_direct worst |diff|/tol = {worst_ratio:.2}{}",
            worst(&reports, "gsv_derivative"),
            failing(&reports)
        ),
    ))
}

fn c6_gaussian_oracle() -> Result<Verdict> {
    let prior = gaussian(16);
    let floor = ToleranceProfile::default().statistical_floor;
    let curve = snr_sweep(&prior, &[1.0], &mc(100_000, 6), 0.1)?;
    let p = &curve.points[0];
    let o = gaussian_closed_form(1.0, 1.0, 1.0)?;
    let mut z = Vec::new();
    let mut ok = true;
    for (name, e, target) in [
        ("I_direct", p.i_direct, o.mutual_info),
        ("mmse_nc", p.mmse_nc, o.mmse_nc),
        ("relEnt", p.rel_ent, o.rel_ent),
    ] {
        let d = (e.value - target).abs();
        ok &= d <= 4.0 * e.stderr + floor;
        z.push(format!(
            "{name} {:.5} vs {target:.5} (se {:.1e})",
            e.value, e.stderr
        ));
    }
    Ok(Verdict::new(ok, z.join(", ")))
}

fn c7_duncan() -> Result<Verdict> {
    let cfg = mc(100_000, 7);
    let mut ok = true;
    let mut parts = Vec::new();
    for (label, prior) in [("gaussian", gaussian(256)), ("+-1", binary(256))] {
        let study = causal_convergence(&prior, &[16, 64, 256], 1.0, &cfg)?;
        for row in &study.rows[1..] {
            let (d, r) = (row.duncan_drop.unwrap(), row.relent_drop.unwrap());
            ok &= d.value > 0.0 && r.value > 0.0;
        }
        let last = study.rows.last().unwrap();
        let duncan_tol = 0.02 * last.i_direct.value + 4.0 * last.duncan_residual.stderr;
        let relent_tol = 0.02 * last.causal_energy.value + 4.0 * last.relent_residual.stderr;
        ok &= last.duncan_residual.value.abs() <= duncan_tol;
        ok &= last.relent_residual.value.abs() <= relent_tol;
        let residuals: Vec<String> = study
            .rows
            .iter()
            .map(|r| format!("{:.4}", r.duncan_residual.value))
            .collect();
        let mut part = format!(
            "{label}: duncan residuals [{}] at n=16,64,256, relent residual {:.4} at 256",
            residuals.join(", "),
            last.relent_residual.value
        );
        if label == "gaussian" {
            let ln2 = 2f64.ln();
            ok &= (last.mmse_c.value - ln2).abs() <= 0.02 * ln2 + 4.0 * last.mmse_c.stderr;
            part.push_str(&format!(", mmse_c {:.4} vs log 2", last.mmse_c.value));
        }
        parts.push(part);
    }
    Ok(Verdict::new(ok, parts.join("; ")))
}

fn c8_debruijn() -> Result<Verdict> {
    let profile = tight();
    let mut per_sample = Vec::new();
    for (i, (p, rho)) in atomic_battery(10, 1).iter().enumerate() {
        per_sample.push(debruijn_fisher_check(p, *rho, 100, i as u64, &profile)?);
    }
    let mut averaged = Vec::new();
    let three = AtomicPrior::random(4, 3, 1.0, &mut aux_rng(2024, 9))?.into();
    for prior in [binary(64), three] {
        for rho in RHOS {
            averaged.extend(debruijn_check(
                &prior,
                rho,
                &mc(100_000, 8),
                None,
                &profile,
            )?);
        }
    }
    let fd = worst(&averaged, "extended_debruijn");
    Ok(Verdict::new(
        all_pass(&per_sample) && all_pass(&averaged),
        format!(
            "fd vs rho E|xbar|^2 max |residual| {fd:.2e}; per-sample rho|xbar|^2 vs |grad|^2/rho {:.2e} (<= 1e-10){}{}",
            worst(&per_sample, "debruijn_fisher_per_sample"),
            failing(&per_sample),
            failing(&averaged)
        ),
    ))
}

fn c9_classical() -> Result<Verdict> {
    let profile = ToleranceProfile::default();
    let mut ok = true;
    let mut gauss_err: f64 = 0.0;
    for t in [0.25, 1.0, 4.0] {
        let r = classical_debruijn_1d(
            &AmplitudeLaw::Gaussian {
                mean: 0.0,
                var: 1.0,
            },
            t,
            CLASSICAL_QUAD_ORDER,
            &profile,
        )?;
        let target = 0.5 / (1.0 + t);
        let e = (r.lhs - target).abs().max((r.rhs - target).abs());
        gauss_err = gauss_err.max(e);
        ok &= e <= 1e-8;
    }
    let mut atomic_err: f64 = 0.0;
    let laws = [
        AmplitudeLaw::symmetric_binary(1.0),
        AmplitudeLaw::Atomic {
            values: vec![-1.0, 0.5, 2.0],
            weights: vec![0.2, 0.5, 0.3],
        },
    ];
    for law in &laws {
        for t in [0.25, 1.0, 4.0] {
            let r = classical_debruijn_1d(law, t, CLASSICAL_QUAD_ORDER, &profile)?;
            atomic_err = atomic_err.max(r.residual.abs());
            ok &= r.residual.abs() <= 1e-4;
        }
    }
    Ok(Verdict::new(
        ok,
        format!("gaussian max error {gauss_err:.2e} (<= 1e-8); atomic max residual {atomic_err:.2e} (<= 1e-4)"),
    ))
}

fn c10_inequalities() -> Result<Verdict> {
    let profile = ToleranceProfile::default();
    let cfg = mc(20_000, 10);
    let mut reports = Vec::new();
    for (prior, _) in atomic_battery(20, 2) {
        for rho in RHOS {
            reports.push(causal_inequality_check(&prior, rho, &cfg, &profile)?);
            reports.push(lsi_gap(&prior, rho, &cfg, &profile)?);
        }
    }
    let gap = lsi_gap_value(&gaussian(16), 1.0, &mc(100_000, 11))?;
    let o = gaussian_closed_form(1.0, 1.0, 1.0)?;
    let target = 0.5 * o.e_xbar2 - o.rel_ent;
    let gap_ok = (gap.value - target).abs() <= 4.0 * gap.stderr;
    Ok(Verdict::new(
        all_pass(&reports) && gap_ok,
        format!(
            "{} of {} inequality reports hold; gaussian LSI gap {:.5} +- {:.1e} vs {target:.6}{}",
            reports.iter().filter(|r| r.status != Status::Fail).count(),
            reports.len(),
            gap.value,
            gap.stderr,
            failing(&reports)
        ),
    ))
}

const DETERMINISM_CONFIG: &str = r#"
[prior]
kind = "atomic"
atoms = [
  [0.8, -0.3, 0.5, 0.1],
  [-0.6, 0.2, 0.0, 0.9],
  [0.1, 0.1, -0.7, -0.4],
]
weights = [0.5, 0.3, 0.2]

[basis]
n = 4

[rho]
grid = [0.5, 1.0, 2.0]

[mc]
samples = 50000
batches = 50
seed = 12
"#;

fn verify_run(dir: &Path, cfg: &Path, threads: &str) -> Result<(Vec<u8>, Vec<u8>)> {
    let status = Command::new(env!("CARGO_BIN_EXE_immse"))
        .args(["verify", "--threads", threads, "--config"])
        .arg(cfg)
        .arg("--out")
        .arg(dir)
        .env_remove("IMMSE_SEED")
        .output()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?
        .status;
    if status.code() != Some(0) {
        return Err(Error::InvalidArgument(format!(
            "verify exited with {status}"
        )));
    }
    let read = |f: &str| fs::read(dir.join(f)).map_err(|e| Error::InvalidArgument(e.to_string()));
    Ok((read("verify.csv")?, read("verify.json")?))
}

fn c11_determinism() -> Result<Verdict> {
    let tmp = tempfile::tempdir().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let cfg = tmp.path().join("exp.toml");
    fs::write(&cfg, DETERMINISM_CONFIG).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let a = verify_run(&tmp.path().join("t1"), &cfg, "1")?;
    let b = verify_run(&tmp.path().join("t8"), &cfg, "8")?;
    Ok(Verdict::new(
        a == b,
        format!(
            "verify.csv ({} bytes) and verify.json identical at 1 and 8 threads: {}",
            a.0.len(),
            a == b
        ),
    ))
}

fn main() {
    let criteria: [(&str, Check, u64); 11] = [
        ("gradient identity", c1_gradient, 10),
        ("second-derivative and trace identities", c2_trace, 60),
        ("moment recursion", c3_recursion, 10),
        ("number-operator identities", c4_number, 10),
        ("I-MMSE derivative and integral", c5_gsv, 300),
        ("linear-Gaussian oracle", c6_gaussian_oracle, 60),
        ("Duncan and causal relative entropy", c7_duncan, 300),
        ("extended de Bruijn", c8_debruijn, 120),
        ("classical de Bruijn", c9_classical, 10),
        ("causal and log-Sobolev inequalities", c10_inequalities, 300),
        ("determinism across thread counts", c11_determinism, 60),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failures = 0;
    for (i, (name, check, budget)) in criteria.iter().enumerate() {
        let id = format!("{}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| f == &id) {
            continue;
        }
        let start = Instant::now();
        let verdict = check().unwrap_or_else(|e| Verdict::new(false, format!("error: {e}")));
        let took = start.elapsed();
        let in_budget = took <= Duration::from_secs(*budget);
        let pass = verdict.pass && in_budget;
        failures += usize::from(!pass);
        println!(
            "criterion {id:>2} [{}] {name}: {} ({:.1}s, budget {budget}s{})",
            if pass { "PASS" } else { "FAIL" },
            verdict.detail,
            took.as_secs_f64(),
            if in_budget { "" } else { ", over budget" }
        );
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
