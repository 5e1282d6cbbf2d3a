//! Thermodynamics and quantum Fisher information of the thermal chain.
//!
//! Everything here is exact at finite `N`: both fermion-parity sectors are
//! summed (see [`crate::ensemble`]). The grand-canonical single-grid mode
//! sums, e.g. `𝓕(h) = 4β² Σ_p n_p(1−n_p)` for the XX chain, are available as
//! [`ModeSums`]; they agree with the exact values up to corrections that vanish
//! exponentially in `N` at fixed temperature.
//!
//! With `E_n` the many-body energies and `τ ∝ e^{−βH}`:
//!
//! * `⟨J_z⟩ = −⟨∂E/∂h⟩`,
//! * `χ_h = ∂⟨J_z⟩/∂h = β Var(∂E/∂h) − ⟨∂²E/∂h²⟩`,
//! * `𝓕(λ) = β² Var(∂E/∂λ) + 𝓕_rot(λ)`, where the rotation term collects the
//!   `h`-dependence of the Bogoliubov eigenbasis and vanishes for the XX chain.

use serde::{Deserialize, Serialize};

use crate::chain::{fermi, fermi_variance, mode_table, ChainSpec, Model};
use crate::ensemble::{self, H, J};
use crate::error::{Error, Result};

/// Fitted low-temperature prefactor of `𝓕_app(h) = C β N / (J sqrt(1 − (h/J)²))`.
pub const LOW_TEMP_C: f64 = 0.64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Parameter {
    #[serde(rename = "h")]
    H,
    #[serde(rename = "J")]
    J,
}

impl Parameter {
    pub fn as_str(self) -> &'static str {
        match self {
            Parameter::H => "h",
            Parameter::J => "J",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    ExactFreeFermion,
    LowTempApprox,
    Oracle,
    EstimatorBased,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::ExactFreeFermion => "ExactFreeFermion",
            Provenance::LowTempApprox => "LowTempApprox",
            Provenance::Oracle => "Oracle",
            Provenance::EstimatorBased => "EstimatorBased",
        }
    }
}

impl std::str::FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ExactFreeFermion" => Ok(Provenance::ExactFreeFermion),
            "LowTempApprox" => Ok(Provenance::LowTempApprox),
            "Oracle" => Ok(Provenance::Oracle),
            "EstimatorBased" => Ok(Provenance::EstimatorBased),
            other => Err(Error::Format(format!("unknown provenance '{other}'"))),
        }
    }
}

/// A sensitivity `(δλ)^{-2}` together with where it came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub parameter: Parameter,
    pub value: f64,
    pub per_spin: f64,
    pub provenance: Provenance,
    pub spec: ChainSpec,
    /// False when a low-temperature approximation is evaluated outside
    /// `k_B T < J − h`. Always true for exact values.
    pub in_window: bool,
}

impl SensitivityReport {
    pub(crate) fn new(parameter: Parameter, value: f64, provenance: Provenance, spec: ChainSpec) -> Self {
        SensitivityReport {
            parameter,
            value,
            per_spin: value / spec.n as f64,
            provenance,
            spec,
            in_window: true,
        }
    }
}

/// `ln Z` of the thermal state.
pub fn log_partition(spec: &ChainSpec) -> f64 {
    ensemble::moments(spec).log_z
}

/// Helmholtz free energy `A = −ln Z / β`.
pub fn free_energy(spec: &ChainSpec) -> f64 {
    -log_partition(spec) / spec.beta
}

/// Thermal expectation of `J_z = Σ_i σᶻ_i`.
pub fn magnetization_z(spec: &ChainSpec) -> f64 {
    -ensemble::moments(spec).mean[H]
}

/// Adiabatic susceptibility `χ_h = ∂⟨J_z⟩/∂h`.
pub fn susceptibility_h(spec: &ChainSpec) -> f64 {
    let m = ensemble::moments(spec);
    spec.beta * m.cov[H][H] - m.mean_hess[0]
}

/// Magnetization and susceptibility from a single pass.
pub fn magnetization_and_susceptibility(spec: &ChainSpec) -> (f64, f64) {
    let m = ensemble::moments(spec);
    (-m.mean[H], spec.beta * m.cov[H][H] - m.mean_hess[0])
}

/// Quantum Fisher information for the field `h`.
pub fn qfi_h(spec: &ChainSpec) -> SensitivityReport {
    let m = ensemble::moments(spec);
    let mut value = spec.beta * spec.beta * m.cov[H][H];
    if spec.model == Model::XY && spec.gamma > 0.0 {
        value += ensemble::rotation_qfi(spec, H);
    }
    SensitivityReport::new(Parameter::H, value, Provenance::ExactFreeFermion, *spec)
}

/// Quantum Fisher information for the coupling `J` (XX chain).
pub fn qfi_j(spec: &ChainSpec) -> Result<SensitivityReport> {
    spec.require(Model::XX)?;
    let m = ensemble::moments(spec);
    let value = spec.beta * spec.beta * m.cov[J][J];
    Ok(SensitivityReport::new(
        Parameter::J,
        value,
        Provenance::ExactFreeFermion,
        *spec,
    ))
}

/// Variance of `J_z` in the XX thermal state.
pub fn jz_variance_xx(spec: &ChainSpec) -> Result<f64> {
    spec.require(Model::XX)?;
    Ok(ensemble::moments(spec).cov[H][H])
}

/// Grand-canonical sums over the antiperiodic grid.
pub struct ModeSums;

impl ModeSums {
    /// `2 Σ_p n_p − N` (XX).
    pub fn magnetization_xx(spec: &ChainSpec) -> Result<f64> {
        spec.require(Model::XX)?;
        let t = mode_table(spec)?;
        Ok(2.0 * t.total_occupation() - spec.n as f64)
    }

    /// `4β² Σ_p n_p(1−n_p)` (XX).
    pub fn qfi_h_xx(spec: &ChainSpec) -> Result<f64> {
        spec.require(Model::XX)?;
        let t = mode_table(spec)?;
        let b = spec.beta;
        Ok(4.0 * b * b * t.modes.iter().map(|m| fermi_variance(b * m.epsilon)).sum::<f64>())
    }

    /// `4β² Σ_p cos²p n_p(1−n_p)` (XX).
    pub fn qfi_j_xx(spec: &ChainSpec) -> Result<f64> {
        spec.require(Model::XX)?;
        let t = mode_table(spec)?;
        let b = spec.beta;
        Ok(4.0
            * b
            * b
            * t.modes
                .iter()
                .map(|m| m.p.cos().powi(2) * fermi_variance(b * m.epsilon))
                .sum::<f64>())
    }

    /// Per-mode QFI of the product state `⊗_p τ_p` for any model: population
    /// part `β²(∂_h ε_p)² n_p(1−n_p)` plus, per Bogoliubov pair, the rotation
    /// part `4(∂_h θ_p)² tanh²(βε_p) [n_p² + (1−n_p)²]`.
    pub fn qfi_h(spec: &ChainSpec) -> f64 {
        let b = spec.beta;
        ensemble::sector_units(spec, crate::chain::Sector::Antiperiodic)
            .iter()
            .map(|u| {
                let n = fermi(b * u.energy);
                let population = u.modes as f64 * b * b * u.deriv[0].powi(2) * fermi_variance(b * u.energy);
                let t = (b * u.energy).tanh();
                let rotation = 4.0 * u.dtheta[0].powi(2) * t * t * (n * n + (1.0 - n) * (1.0 - n));
                population + rotation
            })
            .sum()
    }
}

fn approx_window(spec: &ChainSpec) -> Result<bool> {
    spec.require(Model::XX)?;
    let ratio = spec.h / spec.j;
    if ratio.abs() >= 1.0 {
        return Err(Error::Domain(format!(
            "low-temperature approximation needs |h| < J, got h/J = {ratio}"
        )));
    }
    Ok(spec.h < spec.j - spec.temperature())
}

/// `𝓕_app(h) = C β N / (J sqrt(1 − (h/J)²))`.
pub fn qfi_h_approx(spec: &ChainSpec, c: f64) -> Result<SensitivityReport> {
    let in_window = approx_window(spec)?;
    let ratio = spec.h / spec.j;
    let value = c * spec.beta * spec.n as f64 / (spec.j * (1.0 - ratio * ratio).sqrt());
    let mut r = SensitivityReport::new(Parameter::H, value, Provenance::LowTempApprox, *spec);
    r.in_window = in_window;
    Ok(r)
}

/// `𝓕_app(J) = C h² β N / (J³ sqrt(1 − (h/J)²))`.
pub fn qfi_j_approx(spec: &ChainSpec, c: f64) -> Result<SensitivityReport> {
    let in_window = approx_window(spec)?;
    let ratio = spec.h / spec.j;
    let value = c * spec.h * spec.h * spec.beta * spec.n as f64
        / (spec.j.powi(3) * (1.0 - ratio * ratio).sqrt());
    let mut r = SensitivityReport::new(Parameter::J, value, Provenance::LowTempApprox, *spec);
    r.in_window = in_window;
    Ok(r)
}

/// Grid of XX specs used to fit the low-temperature prefactor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CSweep {
    pub betas: Vec<f64>,
    pub ns: Vec<usize>,
    pub h_over_j: Vec<f64>,
    pub j: f64,
}

impl CSweep {
    pub fn specs(&self) -> Result<Vec<ChainSpec>> {
        let mut out = Vec::new();
        for &beta in &self.betas {
            for &n in &self.ns {
                for &r in &self.h_over_j {
                    out.push(ChainSpec::xx(n, self.j, r * self.j, beta)?);
                }
            }
        }
        Ok(out)
    }

    /// Rejects points outside the fit window: `βJ ≥ 50`, `N ≥ 10³`,
    /// `k_B T ≤ (J − h)/2`, `|h| < J`.
    pub fn check(&self) -> Result<()> {
        if self.betas.is_empty() || self.ns.is_empty() || self.h_over_j.is_empty() {
            return Err(Error::Sweep("empty sweep axis".into()));
        }
        for s in self.specs()? {
            let reject = |why: &str| {
                Err(Error::Sweep(format!(
                    "point N={} beta={} h/J={} {why}",
                    s.n,
                    s.beta,
                    s.h / s.j
                )))
            };
            if s.beta * s.j < 50.0 {
                return reject("has beta*J < 50");
            }
            if s.n < 1000 {
                return reject("has N < 1000");
            }
            if s.h.abs() >= s.j {
                return reject("is not on the ferromagnetic side");
            }
            if s.temperature() > 0.5 * (s.j - s.h) {
                return reject("violates k_B T <= (J - h)/2");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CFitResult {
    pub c: f64,
    /// RMS relative residual of the fitted form against the exact values.
    pub residual: f64,
    pub points: usize,
    pub window: CSweep,
}

/// Least-squares fit, in relative error, of exact `𝓕(h)` to the
/// low-temperature form.
pub fn fit_c(sweep: &CSweep) -> Result<CFitResult> {
    sweep.check()?;
    let ratios: Vec<f64> = sweep
        .specs()?
        .iter()
        .map(|s| {
            let shape = qfi_h_approx(s, 1.0).map(|r| r.value)?;
            Ok(qfi_h(s).value / shape)
        })
        .collect::<Result<_>>()?;
    let n = ratios.len() as f64;
    let c = ratios.iter().sum::<f64>() / n;
    let residual = (ratios.iter().map(|r| (r / c - 1.0).powi(2)).sum::<f64>() / n).sqrt();
    Ok(CFitResult {
        c,
        residual,
        points: ratios.len(),
        window: sweep.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xx(n: usize, j: f64, h: f64, beta: f64) -> ChainSpec {
        ChainSpec::xx(n, j, h, beta).unwrap()
    }

    #[test]
    fn infinite_temperature_limits() {
        let b = 1e-6;
        let s = xx(10, 1.0, 0.4, b);
        assert!((log_partition(&s) - 10.0 * 2f64.ln()).abs() < 1e-5);
        let q = qfi_h(&s).value;
        assert!((q / (b * b * 10.0) - 1.0).abs() < 1e-5);
        let qj = qfi_j(&s).unwrap().value;
        assert!((qj / (b * b * 5.0) - 1.0).abs() < 1e-5);
        assert!((susceptibility_h(&s) / (b * 10.0) - 1.0).abs() < 1e-5);
    }

    #[test]
    fn zero_field_magnetization_vanishes() {
        for n in [4, 6, 10, 64] {
            for beta in [0.5, 5.0, 50.0] {
                assert!(magnetization_z(&xx(n, 1.0, 0.0, beta)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn polarised_paramagnet() {
        let s = xx(100, 1.0, 2.0, 1e3);
        assert!((magnetization_z(&s) - 100.0).abs() < 1e-6);
        assert!(qfi_h(&s).value < 1e-100);
        assert!(jz_variance_xx(&s).unwrap() < 1e-100);
    }

    #[test]
    fn qfi_equals_beta_times_susceptibility_for_xx() {
        for (n, h, beta) in [(8, 0.3, 2.0), (50, 0.9, 20.0), (1000, 1.1, 100.0)] {
            let s = xx(n, 1.0, h, beta);
            let f = qfi_h(&s).value;
            let chi = susceptibility_h(&s);
            assert!((f / (beta * chi) - 1.0).abs() < 1e-12, "{f} {chi}");
        }
    }

    #[test]
    fn exact_matches_mode_sums_at_large_n() {
        let s = xx(10_000, 1.0, 0.5, 100.0);
        let exact = qfi_h(&s).value;
        let sum = ModeSums::qfi_h_xx(&s).unwrap();
        assert!((exact / sum - 1.0).abs() < 1e-12, "{exact} {sum}");
        let exact_j = qfi_j(&s).unwrap().value;
        let sum_j = ModeSums::qfi_j_xx(&s).unwrap();
        assert!((exact_j / sum_j - 1.0).abs() < 1e-12);
        let m = magnetization_z(&s);
        let msum = ModeSums::magnetization_xx(&s).unwrap();
        assert!((m - msum).abs() < 1e-8 * 10_000.0);

        let xy = ChainSpec::xy(2000, 1.0, 0.8, 0.6, 5.0).unwrap();
        let (a, b) = (qfi_h(&xy).value, ModeSums::qfi_h(&xy));
        assert!((a / b - 1.0).abs() < 1e-10, "{a} {b}");
        // Deep in the ordered phase both parity sectors hold a ground state,
        // which leaves a non-extensive O(1) difference.
        let cold = xy.with_beta(50.0);
        let (a, b) = (qfi_h(&cold).value, ModeSums::qfi_h(&cold));
        assert!((a - b).abs() < 1e-2 && (a / b - 1.0).abs() < 1e-5, "{a} {b}");
    }

    #[test]
    fn per_mode_bound() {
        let s = xx(64, 1.0, 0.7, 30.0);
        let t = mode_table(&s).unwrap();
        for m in &t.modes {
            let per_mode = 4.0 * 900.0 * fermi_variance(30.0 * m.epsilon);
            assert!(per_mode >= 0.0 && per_mode <= 900.0 + 1e-9);
        }
    }

    #[test]
    fn approximation_values_and_errors() {
        let s = xx(10_000, 1.0, 0.0, 100.0);
        let r = qfi_h_approx(&s, 0.64).unwrap();
        assert!((r.value - 6.4e5).abs() < 1e-6);
        assert!(r.in_window);
        assert_eq!(qfi_j_approx(&s, 0.64).unwrap().value, 0.0);

        assert!(matches!(qfi_h_approx(&xx(100, 1.0, 1.0, 10.0), 0.64), Err(Error::Domain(_))));
        assert!(matches!(qfi_h_approx(&xx(100, 1.0, 1.3, 10.0), 0.64), Err(Error::Domain(_))));
        let edge = qfi_h_approx(&xx(100, 1.0, 0.995, 100.0), 0.64).unwrap();
        assert!(!edge.in_window);

        let s = xx(10_000, 1.3, 0.5, 100.0);
        let ratio = qfi_j_approx(&s, 0.64).unwrap().value / qfi_h_approx(&s, 0.64).unwrap().value;
        assert!((ratio - (0.5f64 / 1.3).powi(2)).abs() < 1e-14);

        // approximation is smallest at h = 0
        let base = qfi_h_approx(&xx(1000, 1.0, 0.0, 100.0), 0.64).unwrap().value;
        for h in [-0.9, -0.3, 0.2, 0.6] {
            assert!(qfi_h_approx(&xx(1000, 1.0, h, 100.0), 0.64).unwrap().value > base);
        }
    }

    #[test]
    fn one_point_fit_is_exact_inversion() {
        let sweep = CSweep {
            betas: vec![100.0],
            ns: vec![10_000],
            h_over_j: vec![0.0],
            j: 1.0,
        };
        let fit = fit_c(&sweep).unwrap();
        let expect = qfi_h(&xx(10_000, 1.0, 0.0, 100.0)).value / (100.0 * 10_000.0);
        assert!((fit.c - expect).abs() < 1e-14);
        assert!(fit.residual < 1e-15);
    }

    #[test]
    fn fit_rejects_points_outside_window() {
        let mut sweep = CSweep {
            betas: vec![100.0],
            ns: vec![10_000],
            h_over_j: vec![0.0, 0.99],
            j: 1.0,
        };
        assert!(matches!(fit_c(&sweep), Err(Error::Sweep(_))));
        sweep.h_over_j = vec![0.5];
        sweep.ns = vec![100];
        assert!(fit_c(&sweep).is_err());
        sweep.ns = vec![10_000];
        sweep.betas = vec![10.0];
        assert!(fit_c(&sweep).is_err());
    }
}
