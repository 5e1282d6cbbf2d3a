//! Adaptive feedforward magnetometry on the XX chain.
//!
//! Each iteration prepares the thermal state at coupling `J_k`, draws `ν`
//! projective `J_z` outcomes, inverts the mean magnetization curve for an
//! estimate of `h`, and retunes `J_{k+1} = h_est + m δh_k` so that the probe
//! is pushed towards the crossover from the ferromagnetic side.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::chain::{ChainSpec, Model};
use crate::ensemble::{CountCurve, OccupationSampler};
use crate::error::{Error, Result};

/// Identifier of the generator and seeding scheme, stored in every trace.
pub const RNG_ALGORITHM: &str = "ChaCha20Rng/rand_chacha-0.3/seed_from_u64";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FloorPolicy {
    StopAtThermalFloor,
    RunToKmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub h_true: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub beta: f64,
    pub n: usize,
    pub nu: usize,
    pub k_max: usize,
    pub retune_margin: f64,
    pub floor_policy: FloorPolicy,
    pub seed: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            h_true: 0.8,
            h_min: 0.0,
            h_max: 1.0,
            beta: 1000.0,
            n: 10_000,
            nu: 50,
            k_max: 4,
            retune_margin: 3.0,
            floor_policy: FloorPolicy::StopAtThermalFloor,
            seed: 0,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Protocol(msg));
        if !(self.h_min < self.h_max) {
            return fail(format!("need h_min < h_max, got [{}, {}]", self.h_min, self.h_max));
        }
        // h_true may sit on the boundary: the run then ends on its own
        if !(self.h_min <= self.h_true && self.h_true <= self.h_max) {
            return fail(format!("h_true = {} outside [{}, {}]", self.h_true, self.h_min, self.h_max));
        }
        if !(self.h_max > 0.0) {
            return fail("the first coupling J_1 = h_max must be positive".into());
        }
        if self.nu < 2 {
            return fail(format!("nu = {} leaves no sample spread; need nu >= 2", self.nu));
        }
        if self.k_max < 1 {
            return fail("k_max must be at least 1".into());
        }
        if !(self.retune_margin >= 1.0) {
            return fail(format!("retune margin {} below 1", self.retune_margin));
        }
        ChainSpec::xx(self.n, self.h_max, self.h_true, self.beta).map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Iteration {
    pub k: usize,
    pub j_k: f64,
    pub outcomes: Vec<i64>,
    pub h_est: f64,
    pub delta_h: f64,
    /// `1 / δh_k²`.
    pub f_empirical: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    ThermalFloor,
    KmaxReached,
    WindowViolation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolTrace {
    pub config: ProtocolConfig,
    pub rng: String,
    pub iterations: Vec<Iteration>,
    pub terminated_by: Termination,
}

/// First line of a JSON-lines trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TraceHeader {
    config: ProtocolConfig,
    rng: String,
    terminated_by: Termination,
    iterations: usize,
}

impl ProtocolTrace {
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        let header = TraceHeader {
            config: self.config,
            rng: self.rng.clone(),
            terminated_by: self.terminated_by,
            iterations: self.iterations.len(),
        };
        let io = |e: std::io::Error| Error::Format(e.to_string());
        let js = |e: serde_json::Error| Error::Format(e.to_string());
        writeln!(out, "{}", serde_json::to_string(&header).map_err(js)?).map_err(io)?;
        for it in &self.iterations {
            writeln!(out, "{}", serde_json::to_string(it).map_err(js)?).map_err(io)?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let next = |lines: &mut std::io::Lines<R>| -> Result<Option<String>> {
            lines.next().transpose().map_err(|e| Error::Format(e.to_string()))
        };
        let first = next(&mut lines)?.ok_or_else(|| Error::Format("empty trace".into()))?;
        let header: TraceHeader = serde_json::from_str(&first).map_err(|e| Error::Format(e.to_string()))?;
        let mut iterations = Vec::with_capacity(header.iterations);
        while let Some(line) = next(&mut lines)? {
            if line.trim().is_empty() {
                continue;
            }
            iterations.push(serde_json::from_str(&line).map_err(|e| Error::Format(e.to_string()))?);
        }
        if iterations.len() != header.iterations {
            return Err(Error::Format(format!(
                "header announces {} iterations, found {}",
                header.iterations,
                iterations.len()
            )));
        }
        Ok(ProtocolTrace {
            config: header.config,
            rng: header.rng,
            iterations,
            terminated_by: header.terminated_by,
        })
    }
}

/// Reusable exact sampler of `J_z` outcomes for one XX spec.
#[derive(Debug, Clone)]
pub struct JzSampler {
    n: usize,
    inner: OccupationSampler,
}

impl JzSampler {
    pub fn new(spec: &ChainSpec) -> Result<Self> {
        spec.require(Model::XX)?;
        Ok(JzSampler {
            n: spec.n,
            inner: OccupationSampler::new(spec),
        })
    }

    /// `J_z = 2 (number of fermions) − N`.
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        2 * self.inner.sample(rng) as i64 - self.n as i64
    }
}

/// One projective `J_z` measurement on the XX thermal state.
pub fn sample_jz<R: rand::Rng + ?Sized>(spec: &ChainSpec, rng: &mut R) -> Result<i64> {
    Ok(JzSampler::new(spec)?.sample(rng))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inversion {
    pub h: f64,
    /// The target lay outside the curve's range on the bracket.
    pub clamped: bool,
}

/// `⟨J_z⟩(h)` of an XX chain at fixed `N`, `J`, `β`, restricted to a bracket.
#[derive(Debug, Clone)]
pub struct MagnetizationCurve {
    n: f64,
    beta: f64,
    counts: CountCurve,
    bracket: (f64, f64),
    ends: (f64, f64),
}

impl MagnetizationCurve {
    /// The field of `spec` is ignored.
    pub fn new(spec: &ChainSpec, bracket: (f64, f64)) -> Result<Self> {
        spec.require(Model::XX)?;
        let (lo, hi) = bracket;
        if !(lo < hi) {
            return Err(Error::Protocol(format!("bad inversion bracket [{lo}, {hi}]")));
        }
        let mut curve = MagnetizationCurve {
            n: spec.n as f64,
            beta: spec.beta,
            counts: CountCurve::new(spec),
            bracket,
            ends: (0.0, 0.0),
        };
        curve.ends = (curve.at(lo).0, curve.at(hi).0);
        Ok(curve)
    }

    /// `⟨J_z⟩` and `∂⟨J_z⟩/∂h`.
    pub fn at(&self, h: f64) -> (f64, f64) {
        let (mean, var) = self.counts.at(h);
        (2.0 * mean - self.n, 4.0 * self.beta * var)
    }

    /// Solves `⟨J_z⟩(h) = target` to `1e-10 N`. Safeguarded Newton steps
    /// from `start` (or the bracket midpoint), falling back to bisection.
    pub fn invert(&self, target: f64, start: Option<f64>) -> Result<Inversion> {
        if !target.is_finite() {
            return Err(Error::Protocol(format!("cannot invert magnetization {target}")));
        }
        let (mut lo, mut hi) = self.bracket;
        let tol = 1e-10 * self.n;
        if target <= self.ends.0 + tol {
            return Ok(Inversion {
                h: lo,
                clamped: target < self.ends.0 - tol,
            });
        }
        if target >= self.ends.1 - tol {
            return Ok(Inversion {
                h: hi,
                clamped: target > self.ends.1 + tol,
            });
        }
        let mut h = start.filter(|h| *h > lo && *h < hi).unwrap_or(0.5 * (lo + hi));
        for _ in 0..200 {
            let (m, slope) = self.at(h);
            let f = m - target;
            if f.abs() < tol {
                return Ok(Inversion { h, clamped: false });
            }
            if f < 0.0 {
                lo = h;
            } else {
                hi = h;
            }
            if hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(lo.abs()).max(1.0) {
                return Ok(Inversion { h, clamped: false });
            }
            let newton = h - f / slope;
            h = if slope > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        Err(Error::Numerical(format!("magnetization inversion for {target} did not converge")))
    }
}

/// Solves `⟨J_z⟩(h) = target` for `h` in `bracket`, holding the other fields
/// of `spec` fixed. An unreachable target returns the nearer end, flagged.
pub fn invert_magnetization(target: f64, spec: &ChainSpec, bracket: (f64, f64)) -> Result<Inversion> {
    MagnetizationCurve::new(spec, bracket)?.invert(target, None)
}

fn sample_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

pub fn run_protocol(cfg: &ProtocolConfig) -> Result<ProtocolTrace> {
    cfg.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let bracket = (cfg.h_min, cfg.h_max);
    let mut iterations = Vec::new();
    let mut j_k = cfg.h_max;
    let mut terminated_by = Termination::KmaxReached;
    let nu = cfg.nu as f64;

    for k in 1..=cfg.k_max {
        let spec = match ChainSpec::xx(cfg.n, j_k, cfg.h_true, cfg.beta) {
            Ok(s) => s,
            Err(_) => {
                terminated_by = Termination::WindowViolation;
                break;
            }
        };
        let sampler = JzSampler::new(&spec)?;
        let outcomes: Vec<i64> = (0..cfg.nu).map(|_| sampler.sample(&mut rng)).collect();
        let mean = outcomes.iter().sum::<i64>() as f64 / nu;

        let curve = MagnetizationCurve::new(&spec, bracket)?;
        let est = curve.invert(mean, None)?;
        let mut singles = BTreeMap::new();
        for &x in &outcomes {
            if let std::collections::btree_map::Entry::Vacant(slot) = singles.entry(x) {
                slot.insert(curve.invert(x as f64, Some(est.h))?.h);
            }
        }
        let shots: Vec<f64> = outcomes.iter().map(|x| singles[x]).collect();
        let delta_h = sample_std(&shots) / nu.sqrt();

        if est.clamped || !(delta_h > 0.0) || est.h >= j_k {
            terminated_by = Termination::WindowViolation;
            break;
        }
        iterations.push(Iteration {
            k,
            j_k,
            outcomes,
            h_est: est.h,
            delta_h,
            f_empirical: 1.0 / (delta_h * delta_h),
        });
        if cfg.floor_policy == FloorPolicy::StopAtThermalFloor && delta_h < 1.0 / cfg.beta {
            terminated_by = Termination::ThermalFloor;
            break;
        }
        j_k = est.h + cfg.retune_margin * delta_h;
    }

    Ok(ProtocolTrace {
        config: *cfg,
        rng: RNG_ALGORITHM.to_string(),
        iterations,
        terminated_by,
    })
}

/// Runs `seeds` consecutive seeds starting at `cfg.seed`.
pub fn run_ensemble(cfg: &ProtocolConfig, seeds: usize) -> Result<Vec<ProtocolTrace>> {
    (0..seeds as u64)
        .map(|i| {
            run_protocol(&ProtocolConfig {
                seed: cfg.seed.wrapping_add(i),
                ..*cfg
            })
        })
        .collect()
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    })
}

/// Median `δh_k` over the traces that reached iteration `k`.
pub fn median_delta_h(traces: &[ProtocolTrace], k: usize) -> Option<f64> {
    let mut v: Vec<f64> = traces
        .iter()
        .filter_map(|t| t.iterations.get(k - 1).map(|it| it.delta_h))
        .collect();
    median(&mut v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub n: usize,
    pub median_delta_h: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub k: usize,
    pub slope: f64,
    pub stderr: f64,
    pub points: Vec<ScalingPoint>,
    /// Chain sizes left out because fewer than half of their runs reached `k`.
    pub excluded: Vec<usize>,
}

/// Ordinary least squares of `ln y` against `ln x` with the slope's standard error.
pub fn log_log_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::Protocol("need at least three points for a slope".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let rss: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(a, b)| (b - my - slope * (a - mx)).powi(2))
        .sum();
    Ok((slope, (rss / (n - 2.0) / sxx).sqrt()))
}

/// Slope of `ln median δh_k` against `ln N` from ensembles grouped by `N`.
pub fn scaling_from_traces(groups: &[(usize, Vec<ProtocolTrace>)], k: usize) -> Result<ScalingFit> {
    let mut points = Vec::new();
    let mut excluded = Vec::new();
    for (n, traces) in groups {
        let reached: Vec<ProtocolTrace> = traces.iter().filter(|t| t.iterations.len() >= k).cloned().collect();
        if reached.is_empty() || 2 * reached.len() < traces.len() {
            excluded.push(*n);
            continue;
        }
        points.push(ScalingPoint {
            n: *n,
            median_delta_h: median_delta_h(&reached, k).unwrap_or(f64::NAN),
            runs: reached.len(),
        });
    }
    let x: Vec<f64> = points.iter().map(|p| p.n as f64).collect();
    let y: Vec<f64> = points.iter().map(|p| p.median_delta_h).collect();
    let (slope, stderr) = log_log_fit(&x, &y)?;
    Ok(ScalingFit {
        k,
        slope,
        stderr,
        points,
        excluded,
    })
}

/// Runs `seeds` protocols for each configuration and fits the scaling at depth `k`.
///
/// The configurations must differ only in `N`, with at least five sizes
/// spanning at least 1.5 decades.
pub fn scaling_exponent(cfgs: &[ProtocolConfig], seeds: usize, k: usize) -> Result<ScalingFit> {
    let mut ns: Vec<usize> = cfgs.iter().map(|c| c.n).collect();
    ns.sort_unstable();
    ns.dedup();
    if ns.len() < 5 || (ns[ns.len() - 1] as f64 / ns[0] as f64).log10() < 1.5 {
        return Err(Error::Protocol(
            "scaling needs at least five chain sizes spanning 1.5 decades".into(),
        ));
    }
    let groups = cfgs
        .iter()
        .map(|c| Ok((c.n, run_ensemble(c, seeds)?)))
        .collect::<Result<Vec<_>>>()?;
    scaling_from_traces(&groups, k)
}

/// Low-temperature prediction of the first-iteration information per shot
/// and of the recursion constant: `(A, B)` with
/// `A = C β / (h_max sqrt(1 − (h/h_max)²))` and `B = C β / sqrt(2h)`.
pub fn recursion_constants(cfg: &ProtocolConfig, c: f64) -> (f64, f64) {
    let r = cfg.h_true / cfg.h_max;
    let a = c * cfg.beta / (cfg.h_max * (1.0 - r * r).sqrt());
    let b = c * cfg.beta / (2.0 * cfg.h_true).sqrt();
    (a, b)
}

/// `F_k = A^{1/4^{k−1}} B^{4/3 (1 − 1/4^{k−1})} (νN)^{4/3 (1 − 1/4^k)}`.
pub fn predicted_information(a: f64, b: f64, nu_n: f64, k: usize) -> f64 {
    let q = 0.25f64.powi(k as i32 - 1);
    a.powf(q) * b.powf(4.0 / 3.0 * (1.0 - q)) * nu_n.powf(4.0 / 3.0 * (1.0 - q / 4.0))
}
