//! One function per subcommand. Grid points are evaluated on the rayon pool
//! and collected in grid order, so output rows never depend on scheduling.

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde_json::{json, Value};

use chainsense::estimator::{estimator_sensitivities, EstimatorSpec, Observable};
use chainsense::protocol::{self, FloorPolicy, ProtocolConfig, ProtocolTrace};
use chainsense::records::{self, Record};
use chainsense::thermo::{self, Parameter, Provenance};
use chainsense::validation::{self, GridOptions, SuiteOptions};
use chainsense::{ChainSpec, Model};

use crate::config::{sizes, Format, GridValue, Section};
use crate::{Failure, Global};

type Out<T> = Result<T, Failure>;

fn axis(v: &Option<GridValue>, default: &[f64], name: &str) -> Out<Vec<f64>> {
    match v {
        Some(g) => g.values().map_err(|e| Failure::Config(format!("{name}: {e}"))),
        None => Ok(default.to_vec()),
    }
}

fn size_axis(v: &Option<GridValue>, default: &[usize]) -> Out<Vec<usize>> {
    match v {
        Some(g) => {
            let xs = g.values().map_err(|e| Failure::Config(format!("n: {e}")))?;
            sizes(&xs).map_err(Failure::Config)
        }
        None => Ok(default.to_vec()),
    }
}

fn positive(x: f64, name: &str) -> Out<f64> {
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(Failure::Config(format!("{name} must be positive, got {x}")))
    }
}

fn header(g: &Global, params: Value) -> Value {
    json!({
        "command": g.command,
        "seed": g.seed,
        "format": g.format,
        "params": params,
    })
}

fn write_records(g: &Global, params: Value, recs: &[Record]) -> Out<()> {
    let cfg = header(g, params);
    let mut buf = Vec::new();
    match g.format {
        Format::Csv => records::write_csv(&mut buf, recs, Some(&cfg))?,
        Format::Json => {
            records::write_json(&mut buf, recs, Some(&cfg))?;
            buf.push(b'\n');
        }
    }
    match &g.out {
        Some(path) => fs::write(path, &buf).map_err(|e| Failure::Run(format!("{}: {e}", path.display()))),
        None => std::io::stdout().write_all(&buf).map_err(|e| Failure::Run(e.to_string())),
    }
}

/// Evaluates `f` on every point in parallel and concatenates in point order.
fn collect<P, F>(points: &[P], f: F) -> Out<Vec<Record>>
where
    P: Sync,
    F: Fn(&P) -> Out<Vec<Record>> + Sync + Send,
{
    let parts: Vec<Vec<Record>> = points.par_iter().map(f).collect::<Out<_>>()?;
    Ok(parts.into_iter().flatten().collect())
}

fn estimator_record(spec: &ChainSpec, est: EstimatorSpec, value: f64) -> Record {
    Record::new(spec, "sensitivity_per_spin", value / spec.n as f64, Provenance::EstimatorBased)
        .with_estimator(est.label())
}

pub fn fig1(g: &Global, p: &Section) -> Out<()> {
    let betas = axis(&p.beta, &[20.0, 100.0, 500.0], "beta")?;
    let ns = size_axis(&p.n, &[100_000])?;
    let ratios = axis(&p.h_over_j, &crate::config::parse_grid("0:2:0.02").unwrap_or_default(), "h_over_j")?;
    let j = positive(p.j.unwrap_or(1.0), "j")?;
    let mut points = Vec::new();
    for &beta in &betas {
        for &n in &ns {
            for &r in &ratios {
                points.push(ChainSpec::xx(n, j, r * j, beta)?);
            }
        }
    }
    let recs = collect(&points, |s| Ok(vec![Record::per_spin(&thermo::qfi_h(s), "qfi_h_per_spin")]))?;
    write_records(g, json!({"beta": betas, "n": ns, "h_over_j": ratios, "j": j}), &recs)
}

pub fn fig2(g: &Global, p: &Section) -> Out<()> {
    let betas = axis(&p.beta, &[100.0], "beta")?;
    let ns = size_axis(&p.n, &[10_000])?;
    let ratios = axis(&p.h_over_j, &crate::config::parse_grid("0:0.99:0.01").unwrap_or_default(), "h_over_j")?;
    let j = positive(p.j.unwrap_or(1.0), "j")?;
    let mut points = Vec::new();
    for &beta in &betas {
        for &n in &ns {
            for &r in &ratios {
                points.push(ChainSpec::xx(n, j, r * j, beta)?);
            }
        }
    }
    let recs = collect(&points, |s| {
        let mut out = vec![Record::per_spin(&thermo::qfi_h(s), "qfi_h_per_spin")];
        // no approximation row where it is undefined or the window is empty
        if s.temperature() <= s.j && s.h.abs() < s.j {
            let a = thermo::qfi_h_approx(s, thermo::LOW_TEMP_C)?;
            out.push(Record::per_spin(&a, "qfi_h_per_spin"));
        }
        Ok(out)
    })?;
    write_records(
        g,
        json!({"beta": betas, "n": ns, "h_over_j": ratios, "j": j, "c": thermo::LOW_TEMP_C}),
        &recs,
    )
}

pub fn fig3(g: &Global, p: &Section) -> Out<()> {
    let betas = axis(&p.beta, &[100.0, 2.0], "beta")?;
    let ns = size_axis(&p.n, &[1_000])?;
    // the swept ratio is J/h at fixed field
    let ratios = axis(&p.h_over_j, &crate::config::parse_grid("0.5:1.5:0.01").unwrap_or_default(), "j_over_h")?;
    let h = positive(p.h.unwrap_or(1.0), "h")?;
    let est = EstimatorSpec::new(Observable::Jz, Parameter::J)?;
    let mut points = Vec::new();
    for &beta in &betas {
        for &n in &ns {
            for &r in &ratios {
                points.push(ChainSpec::xx(n, positive(r * h, "J")?, h, beta)?);
            }
        }
    }
    let recs = collect(&points, |s| {
        let f = estimator_sensitivities(s, &[est])?;
        Ok(vec![
            Record::per_spin(&thermo::qfi_j(s)?, "qfi_j_per_spin"),
            estimator_record(s, est, f[0].value),
        ])
    })?;
    write_records(g, json!({"beta": betas, "n": ns, "j_over_h": ratios, "h": h}), &recs)
}

pub fn fig4a(g: &Global, p: &Section) -> Out<()> {
    let betas = axis(&p.beta, &[1000.0], "beta")?;
    let ns = size_axis(&p.n, &[1_000])?;
    let ratios = axis(&p.h_over_j, &crate::config::parse_grid("0:2:0.05").unwrap_or_default(), "h_over_j")?;
    let gammas = axis(&p.gamma, &crate::config::parse_grid("0:1:0.05").unwrap_or_default(), "gamma")?;
    let j = positive(p.j.unwrap_or(1.0), "j")?;
    let mut points = Vec::new();
    for &beta in &betas {
        for &n in &ns {
            for &gamma in &gammas {
                for &r in &ratios {
                    points.push(ChainSpec::xy(n, j, r * j, gamma, beta)?);
                }
            }
        }
    }
    let recs = collect(&points, |s| {
        let f = thermo::qfi_h(s);
        // deep in the gapped phase 𝓕 underflows to zero and has no logarithm
        if f.per_spin > 0.0 {
            Ok(vec![Record::new(s, "log10_qfi_h_per_spin", f.per_spin.log10(), f.provenance)])
        } else {
            Ok(Vec::new())
        }
    })?;
    write_records(
        g,
        json!({"beta": betas, "n": ns, "gamma": gammas, "h_over_j": ratios, "j": j}),
        &recs,
    )
}

pub fn fig4b(g: &Global, p: &Section) -> Out<()> {
    let betas = axis(&p.beta, &[100.0, 2.0], "beta")?;
    let ns = size_axis(&p.n, &[10])?;
    let ratios = axis(&p.h_over_j, &crate::config::parse_grid("0.5:1.5:0.05").unwrap_or_default(), "h_over_j")?;
    let gammas = axis(&p.gamma, &[1.0], "gamma")?;
    let j = positive(p.j.unwrap_or(1.0), "j")?;
    if let Some(&n) = ns.iter().find(|&&n| n > chainsense::oracle::MAX_SPINS) {
        return Err(Failure::Config(format!(
            "fig4b needs the dense oracle; N = {n} exceeds {}",
            chainsense::oracle::MAX_SPINS
        )));
    }
    let ests = [
        EstimatorSpec::new(Observable::Jz, Parameter::H)?,
        EstimatorSpec::new(Observable::JxSquared, Parameter::H)?,
    ];
    let mut points = Vec::new();
    for &beta in &betas {
        for &n in &ns {
            for &gamma in &gammas {
                for &r in &ratios {
                    points.push(ChainSpec::xy(n, j, r * j, gamma, beta)?);
                }
            }
        }
    }
    let recs = collect(&points, |s| {
        let f = estimator_sensitivities(s, &ests)?;
        let mut out = vec![Record::per_spin(&thermo::qfi_h(s), "qfi_h_per_spin")];
        out.extend(ests.iter().zip(&f).map(|(e, r)| estimator_record(s, *e, r.value)));
        Ok(out)
    })?;
    write_records(
        g,
        json!({"beta": betas, "n": ns, "gamma": gammas, "h_over_j": ratios, "j": j}),
        &recs,
    )
}

const SWEEP_QUANTITIES: [&str; 6] = ["log_z", "free_energy", "magnetization", "susceptibility", "qfi_h", "qfi_j"];

pub fn sweep(g: &Global, p: &Section) -> Out<()> {
    let model: Model = p.model.as_deref().unwrap_or("xx").parse()?;
    let quantities = p
        .quantities
        .clone()
        .unwrap_or_else(|| vec!["log_z".into(), "magnetization".into(), "qfi_h".into()]);
    if quantities.is_empty() {
        return Err(Failure::Config("no quantities requested".into()));
    }
    for q in &quantities {
        if !SWEEP_QUANTITIES.contains(&q.as_str()) {
            return Err(Failure::Config(format!("unknown quantity '{q}'; known: {SWEEP_QUANTITIES:?}")));
        }
        if q == "qfi_j" && model == Model::XY {
            return Err(Failure::Config("qfi_j is available for the XX model only".into()));
        }
    }
    let betas = axis(&p.beta, &[100.0], "beta")?;
    let ns = size_axis(&p.n, &[1_000])?;
    let ratios = axis(&p.h_over_j, &crate::config::parse_grid("0:2:0.1").unwrap_or_default(), "h_over_j")?;
    let gammas = match model {
        Model::XX => vec![0.0],
        Model::XY => axis(&p.gamma, &[1.0], "gamma")?,
    };
    let j = positive(p.j.unwrap_or(1.0), "j")?;
    let mut points = Vec::new();
    for &n in &ns {
        for &beta in &betas {
            for &gamma in &gammas {
                for &r in &ratios {
                    points.push(ChainSpec::new(model, n, j, r * j, gamma, beta)?);
                }
            }
        }
    }
    let recs = collect(&points, |s| {
        quantities
            .iter()
            .map(|q| {
                let value = match q.as_str() {
                    "log_z" => thermo::log_partition(s),
                    "free_energy" => thermo::free_energy(s),
                    "magnetization" => thermo::magnetization_z(s),
                    "susceptibility" => thermo::susceptibility_h(s),
                    "qfi_h" => thermo::qfi_h(s).value,
                    _ => thermo::qfi_j(s)?.value,
                };
                Ok(Record::new(s, q, value, Provenance::ExactFreeFermion))
            })
            .collect()
    })?;
    write_records(
        g,
        json!({"model": model, "n": ns, "beta": betas, "gamma": gammas, "h_over_j": ratios, "j": j, "quantities": quantities}),
        &recs,
    )
}

fn floor_policy(s: Option<&str>) -> Out<FloorPolicy> {
    match s.unwrap_or("run_to_kmax") {
        "run_to_kmax" | "RunToKmax" => Ok(FloorPolicy::RunToKmax),
        "stop_at_thermal_floor" | "StopAtThermalFloor" => Ok(FloorPolicy::StopAtThermalFloor),
        other => Err(Failure::Config(format!(
            "unknown floor policy '{other}'; use run_to_kmax or stop_at_thermal_floor"
        ))),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Out<()> {
    fs::write(path, bytes).map_err(|e| Failure::Run(format!("{}: {e}", path.display())))
}

pub fn protocol(g: &Global, p: &Section) -> Out<()> {
    let dir = g
        .out
        .clone()
        .ok_or_else(|| Failure::Config("protocol writes several files; give an output directory with --out".into()))?;
    let betas = axis(&p.beta, &[1000.0], "beta")?;
    let [beta] = betas[..] else {
        return Err(Failure::Config("protocol takes a single beta".into()));
    };
    let ns = size_axis(&p.n, &[1_000, 3_000, 10_000, 30_000, 100_000])?;
    let seeds = p.seeds.unwrap_or(100);
    if seeds == 0 {
        return Err(Failure::Config("seeds must be at least 1".into()));
    }
    let d = ProtocolConfig::default();
    let base = ProtocolConfig {
        h_true: p.h_true.unwrap_or(d.h_true),
        h_min: p.h_min.unwrap_or(d.h_min),
        h_max: p.h_max.unwrap_or(d.h_max),
        beta,
        n: ns[0],
        nu: p.nu.unwrap_or(d.nu),
        k_max: p.kmax.unwrap_or(d.k_max),
        retune_margin: p.margin.unwrap_or(d.retune_margin),
        floor_policy: floor_policy(p.floor_policy.as_deref())?,
        seed: g.seed,
    };
    let cfgs: Vec<ProtocolConfig> = ns.iter().map(|&n| ProtocolConfig { n, ..base }).collect();
    for c in &cfgs {
        c.validate()?;
    }

    let jobs: Vec<ProtocolConfig> = cfgs
        .iter()
        .flat_map(|c| (0..seeds as u64).map(move |i| ProtocolConfig { seed: c.seed.wrapping_add(i), ..*c }))
        .collect();
    let traces: Vec<ProtocolTrace> = jobs
        .par_iter()
        .map(|c| protocol::run_protocol(c).map_err(Failure::from))
        .collect::<Out<_>>()?;

    let trace_dir = dir.join("traces");
    fs::create_dir_all(&trace_dir).map_err(|e| Failure::Run(format!("{}: {e}", trace_dir.display())))?;
    for t in &traces {
        let mut buf = Vec::new();
        t.write_jsonl(&mut buf)?;
        write_file(&trace_dir.join(format!("N{}_seed{}.jsonl", t.config.n, t.config.seed)), &buf)?;
    }

    let groups: Vec<(usize, Vec<ProtocolTrace>)> = ns
        .iter()
        .zip(traces.chunks(seeds))
        .map(|(&n, chunk)| (n, chunk.to_vec()))
        .collect();
    let mut recs = Vec::new();
    let spec_for = |n: usize| ChainSpec::xx(n, base.h_max, base.h_true, beta);
    for (n, group) in &groups {
        let spec = spec_for(*n)?;
        for k in 1..=base.k_max {
            let reached: Vec<&ProtocolTrace> = group.iter().filter(|t| t.iterations.len() >= k).collect();
            recs.push(Record::new(&spec, &format!("runs_k{k}"), reached.len() as f64, Provenance::EstimatorBased));
            let mut dh: Vec<f64> = reached.iter().map(|t| t.iterations[k - 1].delta_h).collect();
            let mut fk: Vec<f64> = reached.iter().map(|t| t.iterations[k - 1].f_empirical).collect();
            if let (Some(a), Some(b)) = (protocol::median(&mut dh), protocol::median(&mut fk)) {
                recs.push(Record::new(&spec, &format!("median_delta_h_k{k}"), a, Provenance::EstimatorBased));
                recs.push(Record::new(&spec, &format!("median_f_k{k}"), b, Provenance::EstimatorBased));
            }
        }
    }
    // Ensemble-level rows carry N = 0.
    let mut fits = Vec::new();
    if ns.len() >= 3 {
        let anchor = Record::new(&spec_for(ns[0])?, "", 0.0, Provenance::EstimatorBased);
        for k in 1..=base.k_max {
            match protocol::scaling_from_traces(&groups, k) {
                Ok(fit) => {
                    for (q, v) in [("slope", fit.slope), ("slope_stderr", fit.stderr)] {
                        recs.push(Record {
                            n: 0,
                            quantity: format!("{q}_k{k}"),
                            value: v,
                            ..anchor.clone()
                        });
                    }
                    fits.push(fit);
                }
                // too few sizes reached this depth
                Err(_) => continue,
            }
        }
    }
    let params = json!({"protocol": base, "n": ns, "seeds": seeds, "rng": protocol::RNG_ALGORITHM});
    let ext = match g.format {
        Format::Csv => "csv",
        Format::Json => "json",
    };
    let summary = Global {
        out: Some(dir.join(format!("summary.{ext}"))),
        ..*g
    };
    write_records(&summary, params, &recs)?;
    for f in &fits {
        println!(
            "k={} slope {:.4} +- {:.4} over N = {:?}",
            f.k,
            f.slope,
            f.stderr,
            f.points.iter().map(|p| p.n).collect::<Vec<_>>()
        );
    }
    Ok(())
}

pub fn validate(g: &Global, p: &Section) -> Out<()> {
    let d = GridOptions::default();
    let ns = size_axis(&p.n, &d.ns)?;
    let betas = axis(&p.beta, &d.betas, "beta")?;
    let ratios = axis(&p.h_over_j, &d.h_over_j, "h_over_j")?;
    let gammas = axis(&p.gamma, &d.gammas, "gamma")?;
    let product = ns.len() * betas.len() * ratios.len() * (1 + gammas.len());
    let tol_scale = p.tol_scale.unwrap_or(1.0);
    if !(tol_scale >= 0.0) {
        return Err(Failure::Config(format!("tol_scale must be >= 0, got {tol_scale}")));
    }
    let defaults = SuiteOptions::default();
    let opts = SuiteOptions {
        grid: GridOptions {
            ns,
            betas,
            h_over_j: ratios,
            gammas,
            points: p.points.unwrap_or(d.points).min(product),
            seed: g.seed,
        },
        c_sweep: if p.c_fit.unwrap_or(true) { defaults.c_sweep } else { None },
        tol_scale,
        ..defaults
    };
    for s in opts.grid.specs()? {
        if s.n > chainsense::oracle::MAX_SPINS {
            return Err(Failure::Config(format!("validation grid N = {} exceeds the oracle limit", s.n)));
        }
    }
    let checks = validation::run_suite(&opts);
    let mut report = String::new();
    for c in &checks {
        report.push_str(&format!(
            "{} {:<36} residual {:.3e} tol {:.1e} cases {}\n",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.residual,
            c.tolerance,
            c.cases
        ));
    }
    print!("{report}");
    if let Some(path) = &g.out {
        let doc = json!({"config": header(g, serde_json::to_value(&opts).unwrap_or(Value::Null)), "checks": checks});
        let text = serde_json::to_string_pretty(&doc).map_err(|e| Failure::Run(e.to_string()))?;
        write_file(path, format!("{text}\n").as_bytes())?;
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(Failure::Validation(format!("{failed} of {} checks failed", checks.len())));
    }
    Ok(())
}
