//! Cross-checks between the free-fermion routes and the dense oracle.
//!
//! Each check reports its worst residual next to its tolerance; a check
//! passes only when the residual is strictly below the tolerance, so a zero
//! tolerance always fails.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::chain::{ChainSpec, Model};
use crate::diff;
use crate::error::Result;
use crate::estimator::{estimator_sensitivities, EstimatorSpec, Observable};
use crate::oracle;
use crate::thermo::{self, CSweep, Parameter};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub cases: usize,
    pub passed: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, residual: f64, tolerance: f64, cases: usize) -> Self {
        Check {
            name: name.into(),
            residual,
            tolerance,
            cases,
            passed: residual < tolerance,
        }
    }
}

/// Relative difference, or zero when both values lie below `floor`.
pub fn rel_diff(a: f64, b: f64, floor: f64) -> f64 {
    let d = (a - b).abs();
    if d <= floor {
        return 0.0;
    }
    d / a.abs().max(b.abs())
}

/// QFI differences below `1e-24 β² N` are rounding noise on the natural scale.
pub fn qfi_floor(spec: &ChainSpec) -> f64 {
    1e-24 * spec.beta * spec.beta * spec.n as f64
}

#[derive(Debug, Clone, Serialize)]
pub struct GridOptions {
    pub ns: Vec<usize>,
    pub betas: Vec<f64>,
    pub h_over_j: Vec<f64>,
    pub gammas: Vec<f64>,
    /// Number of grid points drawn (without replacement) from the product.
    pub points: usize,
    pub seed: u64,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions {
            ns: vec![4, 6, 8, 10],
            betas: vec![2.0, 20.0, 100.0],
            h_over_j: vec![0.5, 0.9, 1.2],
            gammas: vec![0.0, 0.5, 1.0],
            points: 30,
            seed: 0,
        }
    }
}

impl GridOptions {
    /// XX at `γ = 0` plus XY at every listed `γ`, with `J = 1`.
    pub fn specs(&self) -> Result<Vec<ChainSpec>> {
        let mut all = Vec::new();
        for &n in &self.ns {
            for &beta in &self.betas {
                for &r in &self.h_over_j {
                    all.push(ChainSpec::xx(n, 1.0, r, beta)?);
                    for &g in &self.gammas {
                        all.push(ChainSpec::xy(n, 1.0, r, g, beta)?);
                    }
                }
            }
        }
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        all.shuffle(&mut rng);
        all.truncate(self.points.max(1));
        Ok(all)
    }
}

/// Worst residuals of log Z, ⟨J_z⟩, 𝓕(h) (XX and XY separately) and 𝓕(J).
#[derive(Debug, Clone, Default, Serialize)]
pub struct OracleResiduals {
    pub log_z: f64,
    pub magnetization: f64,
    pub qfi_h_xx: f64,
    pub qfi_h_xy: f64,
    pub qfi_j: f64,
    pub specs: usize,
}

pub fn oracle_residuals(specs: &[ChainSpec]) -> Result<OracleResiduals> {
    let mut r = OracleResiduals {
        specs: specs.len(),
        ..Default::default()
    };
    for spec in specs {
        let state = oracle::thermal_state(spec)?;
        r.log_z = r.log_z.max(rel_diff(thermo::log_partition(spec), state.log_z, 0.0));
        let m = state.expectation(&oracle::jz(spec.n)?)?;
        let floor = 1e-12 * spec.n as f64;
        r.magnetization = r.magnetization.max(rel_diff(thermo::magnetization_z(spec), m, floor));

        let fast = thermo::qfi_h(spec).value;
        let d = oracle::state_derivative(&state, Parameter::H)?;
        let slow = oracle::qfi_from_derivative(&state, &d);
        let res = rel_diff(fast, slow, qfi_floor(spec));
        if spec.gamma == 0.0 {
            r.qfi_h_xx = r.qfi_h_xx.max(res);
            let fast = if spec.model == Model::XX {
                thermo::qfi_j(spec)?.value
            } else {
                thermo::qfi_j(&ChainSpec { model: Model::XX, ..*spec })?.value
            };
            let d = oracle::state_derivative(&state, Parameter::J)?;
            let slow = oracle::qfi_from_derivative(&state, &d);
            r.qfi_j = r.qfi_j.max(rel_diff(fast, slow, qfi_floor(spec)));
        } else {
            r.qfi_h_xy = r.qfi_h_xy.max(res);
        }
    }
    Ok(r)
}

/// `20` seeded XX specs of moderate size and temperature.
pub fn random_xx_specs(count: usize, seed: u64) -> Result<Vec<ChainSpec>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let n = 2 * rng.gen_range(2..=32);
            let j = rng.gen_range(0.5..1.5);
            let h = rng.gen_range(-1.5..1.5);
            let beta = rng.gen_range(0.2..5.0);
            ChainSpec::xx(n, j, h, beta)
        })
        .collect()
}

/// Worst pairwise relative disagreement between `𝓕(h)`, `β ∂⟨J_z⟩/∂h` and
/// `∂² ln Z / ∂h²`, the latter two by finite differences.
pub fn susceptibility_identity(spec: &ChainSpec) -> Result<f64> {
    let analytic = thermo::qfi_h(spec).value;
    // Steps follow the scale on which the Fermi factors vary. ln Z is large
    // next to its curvature, so its second difference needs the wider step.
    let scale = spec.temperature().min(spec.j);
    let mut m = |h: f64| Ok(thermo::magnetization_z(&spec.with_h(h)));
    let slope = diff::first_with_step(&mut m, spec.h, 2e-3 * scale)?.checked(0.0)?;
    let via_m = spec.beta * slope;
    let curvature =
        diff::second_with_step(|h| Ok(thermo::log_partition(&spec.with_h(h))), spec.h, 1.5e-2 * scale)?.checked(0.0)?;
    Ok(rel_diff(analytic, via_m, 0.0)
        .max(rel_diff(analytic, curvature, 0.0))
        .max(rel_diff(via_m, curvature, 0.0)))
}

/// Residuals of the SLD relations: `‖Λτ + τΛ − 2∂τ‖`, `|tr τΛ|`,
/// `|tr τΛ² − 𝓕| / 𝓕`, and for XX `‖[Λ, J_z]‖`.
pub fn sld_residuals(spec: &ChainSpec) -> Result<[f64; 4]> {
    let state = oracle::thermal_state(spec)?;
    let d = oracle::state_derivative(&state, Parameter::H)?;
    let l = oracle::sld_eigenbasis(&state, &d);
    let dim = state.dim;
    let p = &state.populations;
    let mut anti: f64 = 0.0;
    for k in 0..dim {
        for m in 0..dim {
            let v = l[(k, m)] * (p[k] + p[m]) - 2.0 * d[(k, m)];
            // entries dropped by the cutoff carry at most 2|D_km|
            if p[k] + p[m] > oracle::SLD_CUTOFF {
                anti += v * v;
            }
        }
    }
    let trace: f64 = (0..dim).map(|k| p[k] * l[(k, k)]).sum();
    let qfi = oracle::qfi_from_derivative(&state, &d);
    let second = oracle::moments_in_eigenbasis(&state, &l, 2)?[1];
    let commutator = if spec.model == Model::XX {
        let z = state.to_eigenbasis(&oracle::jz(spec.n)?)?;
        let c = &l * &z - &z * &l;
        c.norm_l2()
    } else {
        0.0
    };
    Ok([anti.sqrt(), trace.abs(), rel_diff(second, qfi, qfi_floor(spec)), commutator])
}

#[derive(Debug, Clone, Serialize)]
pub struct CFitStability {
    pub c: f64,
    pub residual: f64,
    /// Largest spread of `C` between the `β`, and between the `N`, subsets.
    pub spread: f64,
    pub subsets: Vec<(String, f64)>,
}

pub fn c_fit_stability(sweep: &CSweep) -> Result<CFitStability> {
    let all = thermo::fit_c(sweep)?;
    let mut subsets = Vec::new();
    let mut spread: f64 = 0.0;
    let mut family = |label: &str, parts: Vec<CSweep>| -> Result<()> {
        let cs = parts.iter().map(thermo::fit_c).collect::<Result<Vec<_>>>()?;
        for (p, c) in parts.iter().zip(&cs) {
            let key = match label {
                "beta" => format!("beta={}", p.betas[0]),
                _ => format!("N={}", p.ns[0]),
            };
            subsets.push((key, c.c));
        }
        let lo = cs.iter().map(|c| c.c).fold(f64::INFINITY, f64::min);
        let hi = cs.iter().map(|c| c.c).fold(f64::NEG_INFINITY, f64::max);
        spread = spread.max(hi - lo);
        Ok(())
    };
    family(
        "beta",
        sweep.betas.iter().map(|&b| CSweep { betas: vec![b], ..sweep.clone() }).collect(),
    )?;
    family(
        "N",
        sweep.ns.iter().map(|&n| CSweep { ns: vec![n], ..sweep.clone() }).collect(),
    )?;
    Ok(CFitStability {
        c: all.c,
        residual: all.residual,
        spread,
        subsets,
    })
}

/// Worst `(F(λ;O) − 𝓕(λ)) / 𝓕(λ)` over the estimators available for `spec`
/// (positive means the bound is violated), and the worst deviation from
/// saturation for the XX pairs `J_z→h` and `O_J→J`.
pub fn cramer_rao(spec: &ChainSpec) -> Result<(f64, f64)> {
    let mut ests = vec![EstimatorSpec::new(Observable::Jz, Parameter::H)?];
    let xx = spec.model == Model::XX;
    if xx {
        ests.push(EstimatorSpec::new(Observable::Jz, Parameter::J)?);
        ests.push(EstimatorSpec::new(Observable::OJ, Parameter::J)?);
        ests.push(EstimatorSpec::new(Observable::OJ, Parameter::H)?);
    }
    if spec.n <= oracle::MAX_SPINS {
        ests.push(EstimatorSpec::new(Observable::JxSquared, Parameter::H)?);
    }
    let reports = estimator_sensitivities(spec, &ests)?;
    let qfi_h = thermo::qfi_h(spec).value;
    let qfi_j = if xx { thermo::qfi_j(spec)?.value } else { f64::NAN };
    let mut excess = f64::NEG_INFINITY;
    let mut saturation: f64 = 0.0;
    for (e, r) in ests.iter().zip(&reports) {
        let bound = match e.target {
            Parameter::H => qfi_h,
            Parameter::J => qfi_j,
        };
        if bound > 0.0 {
            excess = excess.max((r.value - bound) / bound);
        } else {
            excess = excess.max(if r.value > 0.0 { f64::INFINITY } else { 0.0 });
        }
        let optimal = xx
            && matches!(
                (e.observable, e.target),
                (Observable::Jz, Parameter::H) | (Observable::OJ, Parameter::J)
            );
        if optimal {
            saturation = saturation.max(rel_diff(r.value, bound, qfi_floor(spec)));
        }
    }
    Ok((excess, saturation))
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteOptions {
    pub grid: GridOptions,
    pub identity_specs: usize,
    pub c_sweep: Option<CSweep>,
    /// Multiplies every tolerance.
    pub tol_scale: f64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            grid: GridOptions::default(),
            identity_specs: 20,
            c_sweep: Some(CSweep {
                betas: vec![100.0, 200.0],
                ns: vec![10_000, 100_000],
                h_over_j: (0..10).map(|i| i as f64 / 10.0).collect(),
                j: 1.0,
            }),
            tol_scale: 1.0,
        }
    }
}

/// Runs every check. Errors inside a check are reported as a failed check.
pub fn run_suite(opts: &SuiteOptions) -> Vec<Check> {
    let t = opts.tol_scale;
    let mut out = Vec::new();
    let fail = |name: &str, e: crate::error::Error| {
        let mut c = Check::new(format!("{name}: {e}"), f64::INFINITY, 0.0, 0);
        c.passed = false;
        c
    };

    match opts.grid.specs().and_then(|s| oracle_residuals(&s)) {
        Ok(r) => {
            out.push(Check::new("oracle log Z", r.log_z, 1e-10 * t, r.specs));
            out.push(Check::new("oracle <Jz>", r.magnetization, 1e-8 * t, r.specs));
            out.push(Check::new("oracle F(h) XX", r.qfi_h_xx, 1e-8 * t, r.specs));
            out.push(Check::new("oracle F(h) XY", r.qfi_h_xy, 1e-6 * t, r.specs));
            out.push(Check::new("oracle F(J) XX", r.qfi_j, 1e-8 * t, r.specs));
        }
        Err(e) => out.push(fail("oracle grid", e)),
    }

    let identity = random_xx_specs(opts.identity_specs, opts.grid.seed).and_then(|specs| {
        specs
            .iter()
            .map(susceptibility_identity)
            .collect::<Result<Vec<_>>>()
            .map(|v| (v.iter().cloned().fold(0.0, f64::max), v.len()))
    });
    match identity {
        Ok((worst, n)) => out.push(Check::new("F(h) = beta dM/dh = d2 lnZ/dh2", worst, 1e-6 * t, n)),
        Err(e) => out.push(fail("susceptibility identity", e)),
    }

    let n_sld = opts.grid.ns.iter().copied().filter(|&n| n <= 8).max().unwrap_or(4);
    let sld_specs = [
        ChainSpec::xx(n_sld, 1.0, 0.6, 4.0),
        ChainSpec::xy(n_sld, 1.0, 0.9, 1.0, 20.0),
    ];
    let sld = sld_specs
        .iter()
        .map(|s| s.clone().and_then(|s| sld_residuals(&s)))
        .collect::<Result<Vec<_>>>();
    match sld {
        Ok(rs) => {
            let worst = |i: usize| rs.iter().map(|r| r[i]).fold(0.0, f64::max);
            out.push(Check::new("SLD relation residual", worst(0), 1e-8 * t, rs.len()));
            out.push(Check::new("SLD trace against state", worst(1), 1e-10 * t, rs.len()));
            out.push(Check::new("SLD second moment = F", worst(2), 1e-8 * t, rs.len()));
            out.push(Check::new("SLD commutes with Jz (XX)", worst(3), 1e-9 * t, 1));
        }
        Err(e) => out.push(fail("SLD", e)),
    }

    let cr = opts.grid.specs().and_then(|specs| {
        specs
            .iter()
            .map(cramer_rao)
            .collect::<Result<Vec<_>>>()
    });
    match cr {
        Ok(v) => {
            let excess = v.iter().map(|x| x.0).fold(f64::NEG_INFINITY, f64::max);
            let sat = v.iter().map(|x| x.1).fold(0.0, f64::max);
            out.push(Check::new("estimators below QFI", excess.max(0.0), 1e-9 * t, v.len()));
            out.push(Check::new("Jz->h, OJ->J saturate QFI", sat, 1e-10 * t, v.len()));
        }
        Err(e) => out.push(fail("Cramer-Rao", e)),
    }

    if let Some(sweep) = &opts.c_sweep {
        match c_fit_stability(sweep) {
            Ok(s) => {
                out.push(Check::new("C fit |C - 0.64|", (s.c - thermo::LOW_TEMP_C).abs(), 0.05 * t, 1));
                out.push(Check::new("C subset spread", s.spread, 0.02 * t, s.subsets.len()));
            }
            Err(e) => out.push(fail("C fit", e)),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_tolerance_always_fails() {
        assert!(!Check::new("x", 0.0, 0.0, 1).passed);
        assert!(Check::new("x", 0.0, 1e-12, 1).passed);
    }

    #[test]
    fn small_suite_passes() {
        let opts = SuiteOptions {
            grid: GridOptions {
                ns: vec![4],
                points: 6,
                ..Default::default()
            },
            identity_specs: 3,
            c_sweep: None,
            tol_scale: 1.0,
        };
        let checks = run_suite(&opts);
        for c in &checks {
            assert!(c.passed, "{c:?}");
        }
        let strict = run_suite(&SuiteOptions { tol_scale: 0.0, ..opts });
        assert!(strict.iter().all(|c| !c.passed));
    }

    #[test]
    fn grid_is_deterministic() {
        let g = GridOptions::default();
        assert_eq!(g.specs().unwrap(), g.specs().unwrap());
        assert_eq!(g.specs().unwrap().len(), 30);
    }
}
