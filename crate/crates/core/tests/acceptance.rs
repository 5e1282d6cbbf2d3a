//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use chainsense::estimator::{estimator_sensitivities, EstimatorSpec, Observable};
use chainsense::protocol::{self, FloorPolicy, ProtocolConfig};
use chainsense::thermo::{self, CSweep, Parameter};
use chainsense::validation::{self, GridOptions, SuiteOptions};
use chainsense::{ChainSpec, Result};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { passed, detail })
}

fn oracle_equivalence() -> Result<Outcome> {
    let specs = GridOptions::default().specs()?;
    let r = validation::oracle_residuals(&specs)?;
    let passed = r.log_z < 1e-8
        && r.magnetization < 1e-8
        && r.qfi_h_xx < 1e-8
        && r.qfi_j < 1e-8
        && r.qfi_h_xy < 1e-6;
    outcome(
        passed,
        format!(
            "{} specs; worst rel: lnZ {:.1e}, Jz {:.1e}, F(h) XX {:.1e}, F(h) XY {:.1e} (tol 1e-6), F(J) {:.1e}; tol 1e-8",
            r.specs, r.log_z, r.magnetization, r.qfi_h_xx, r.qfi_h_xy, r.qfi_j
        ),
    )
}

fn thermodynamic_identity() -> Result<Outcome> {
    let specs = validation::random_xx_specs(20, 2024)?;
    let mut worst: f64 = 0.0;
    for s in &specs {
        worst = worst.max(validation::susceptibility_identity(s)?);
    }
    outcome(worst < 1e-6, format!("20 random XX specs, worst rel {worst:.1e} (tol 1e-6)"))
}

fn c_constant() -> Result<Outcome> {
    let sweep = CSweep {
        betas: vec![100.0, 200.0],
        ns: vec![10_000, 100_000],
        h_over_j: (0..=9).map(|i| i as f64 / 10.0).collect(),
        j: 1.0,
    };
    let s = validation::c_fit_stability(&sweep)?;
    outcome(
        (s.c - 0.64).abs() <= 0.05 && s.spread < 0.02,
        format!("C = {:.4} (0.64 +- 0.05), subset spread {:.1e} (< 0.02), rms residual {:.3}", s.c, s.spread, s.residual),
    )
}

fn extensivity() -> Result<Outcome> {
    let per_spin: Vec<f64> = [1_000, 10_000, 100_000]
        .iter()
        .map(|&n| Ok(thermo::qfi_h(&ChainSpec::xx(n, 1.0, 0.5, 100.0)?).per_spin))
        .collect::<Result<_>>()?;
    let lo = per_spin.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = per_spin.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let dev = (hi - lo) / hi;
    outcome(dev < 1e-3, format!("F(h)/N = {per_spin:.6?}, spread {dev:.1e} (tol 1e-3)"))
}

fn adaptive_scaling() -> Result<Outcome> {
    let base = ProtocolConfig {
        beta: 1000.0,
        nu: 50,
        k_max: 4,
        floor_policy: FloorPolicy::RunToKmax,
        ..Default::default()
    };
    let groups = [1_000, 3_000, 10_000, 30_000, 100_000]
        .iter()
        .map(|&n| Ok((n, protocol::run_ensemble(&ProtocolConfig { n, ..base }, 100)?)))
        .collect::<Result<Vec<_>>>()?;
    let k4 = protocol::scaling_from_traces(&groups, 4)?;
    let k1 = protocol::scaling_from_traces(&groups, 1)?;
    let ok4 = (k4.slope + 2.0 / 3.0).abs() <= 0.1;
    let ok1 = (k1.slope + 0.5).abs() <= 0.05;
    let medians: Vec<String> = k4
        .points
        .iter()
        .map(|p| format!("N={} dh4={:.2e}", p.n, p.median_delta_h))
        .collect();
    outcome(
        ok4 && ok1,
        format!(
            "k=4 slope {:.3} +- {:.3} (want -0.667 +- 0.1: {}), k=1 slope {:.3} (want -0.5 +- 0.05: {}); excluded {:?}; {}",
            k4.slope,
            k4.stderr,
            if ok4 { "ok" } else { "miss" },
            k1.slope,
            if ok1 { "ok" } else { "miss" },
            k4.excluded,
            medians.join(", ")
        ),
    )
}

fn recursion() -> Result<Outcome> {
    let cfg = ProtocolConfig {
        beta: 200.0,
        n: 10_000,
        nu: 50,
        k_max: 2,
        retune_margin: 1.0,
        floor_policy: FloorPolicy::RunToKmax,
        ..Default::default()
    };
    let traces = protocol::run_ensemble(&cfg, 100)?;
    let (_, b) = protocol::recursion_constants(&cfg, thermo::LOW_TEMP_C);
    let nu_n = (cfg.nu * cfg.n) as f64;
    let mut ratios: Vec<f64> = traces
        .iter()
        .filter(|t| t.iterations.len() >= 2)
        .map(|t| t.iterations[1].f_empirical / (b * nu_n * t.iterations[0].f_empirical.powf(0.25)))
        .collect();
    let reached = ratios.len();
    let m = protocol::median(&mut ratios).unwrap_or(f64::NAN);
    outcome(
        (m - 1.0).abs() <= 0.25,
        format!("median F2 / (B nu N F1^(1/4)) = {m:.3} over {reached}/100 runs reaching k=2 (want 1 +- 0.25)"),
    )
}

fn cramer_rao() -> Result<Outcome> {
    let mut specs = GridOptions::default().specs()?;
    for (n, h, beta) in [(100, 0.3, 5.0), (1_000, 0.9, 100.0), (10_000, 1.2, 20.0), (10_000, 0.5, 2.0)] {
        specs.push(ChainSpec::xx(n, 1.0, h, beta)?);
    }
    let mut excess = f64::NEG_INFINITY;
    let mut saturation: f64 = 0.0;
    for s in &specs {
        let (e, sat) = validation::cramer_rao(s)?;
        excess = excess.max(e);
        saturation = saturation.max(sat);
    }
    outcome(
        excess <= 1e-9 && saturation <= 1e-10,
        format!(
            "{} specs; worst (F - QFI)/QFI = {excess:.1e} (<= 1e-9), worst saturation gap {saturation:.1e} (<= 1e-10)",
            specs.len()
        ),
    )
}

fn figure_ordering() -> Result<Outcome> {
    let ests = [
        EstimatorSpec::new(Observable::Jz, Parameter::H)?,
        EstimatorSpec::new(Observable::JxSquared, Parameter::H)?,
    ];
    let grid: Vec<f64> = (0..=20).map(|i| 0.5 + 0.05 * i as f64).collect();
    let scan = |beta: f64| -> Result<Vec<(f64, f64, f64)>> {
        grid.iter()
            .map(|&r| {
                let s = ChainSpec::xy(10, 1.0, r, 1.0, beta)?;
                let f = estimator_sensitivities(&s, &ests)?;
                Ok((r, f[0].value, f[1].value))
            })
            .collect()
    };
    let cold = scan(100.0)?;
    let overtakes: Vec<f64> = cold
        .iter()
        .filter(|(r, jz, jx)| *r > 0.9 && *r < 1.1 && jx > jz)
        .map(|x| x.0)
        .collect();
    let hot = scan(2.0)?;
    let against: Vec<f64> = hot.iter().filter(|(_, jz, jx)| jz < jx).map(|x| x.0).collect();
    outcome(
        !overtakes.is_empty() && against.is_empty(),
        format!(
            "beta=100: Jx^2 above Jz at h/J {overtakes:.2?}; beta=2: Jz >= Jx^2 fails at h/J {against:.2?}"
        ),
    )
}

fn determinism() -> Result<Outcome> {
    let cfg = ProtocolConfig {
        n: 10_000,
        seed: 42,
        ..Default::default()
    };
    let bytes = || -> Result<Vec<u8>> {
        let mut out = Vec::new();
        protocol::run_protocol(&cfg)?.write_jsonl(&mut out)?;
        Ok(out)
    };
    let identical = bytes()? == bytes()?;
    let checks = validation::run_suite(&SuiteOptions::default());
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    outcome(
        identical && failed.is_empty(),
        format!(
            "traces byte-identical: {identical}; validation suite {}/{} checks pass{}",
            checks.len() - failed.len(),
            checks.len(),
            if failed.is_empty() { String::new() } else { format!(", failing: {failed:?}") }
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Result<Outcome>); 9] = [
        ("oracle equivalence", oracle_equivalence),
        ("thermodynamic identity", thermodynamic_identity),
        ("C constant", c_constant),
        ("extensivity", extensivity),
        ("adaptive scaling", adaptive_scaling),
        ("recursion check", recursion),
        ("Cramer-Rao dominance", cramer_rao),
        ("figure orderings", figure_ordering),
        ("determinism", determinism),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (passed, detail) = match run() {
            Ok(o) => (o.passed, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !passed {
            failures += 1;
        }
        println!(
            "[{}] {}. {}: {} ({:.1} s)",
            if passed { "PASS" } else { "FAIL" },
            i + 1,
            name,
            detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
