//! Error-propagation sensitivity `F(λ; O) = |∂_λ⟨O⟩|² / ΔO²` of single observables.
//!
//! For the XX chain `J_z` and the bond operator `O_J` commute with `H`, so
//! their moments follow from the free-fermion ensemble. Everything else goes
//! through the dense oracle and is limited to [`oracle::MAX_SPINS`].

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::chain::{ChainSpec, Model};
use crate::ensemble::{self, H, J};
use crate::error::{Error, Result};
use crate::oracle::{self, DenseThermalState};
use crate::thermo::{Parameter, Provenance, SensitivityReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Observable {
    Jz,
    JxSquared,
    OJ,
}

impl Observable {
    pub fn as_str(self) -> &'static str {
        match self {
            Observable::Jz => "Jz",
            Observable::JxSquared => "JxSquared",
            Observable::OJ => "OJ",
        }
    }

    fn matrix(self, n: usize) -> Result<Mat<f64>> {
        match self {
            Observable::Jz => oracle::jz(n),
            Observable::JxSquared => oracle::jx_squared(n),
            Observable::OJ => oracle::o_j(n),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub observable: Observable,
    pub target: Parameter,
}

impl EstimatorSpec {
    pub fn new(observable: Observable, target: Parameter) -> Result<Self> {
        if observable == Observable::JxSquared && target == Parameter::J {
            return Err(Error::InvalidSpec("JxSquared is only paired with the field h".into()));
        }
        Ok(EstimatorSpec { observable, target })
    }

    /// `observable->target`, e.g. `Jz->h`.
    pub fn label(&self) -> String {
        format!("{}->{}", self.observable.as_str(), self.target.as_str())
    }

    fn closed_form(&self, spec: &ChainSpec) -> bool {
        spec.model == Model::XX && self.observable != Observable::JxSquared
    }
}

fn ratio(slope: f64, variance: f64) -> f64 {
    // A frozen observable carries no information.
    if variance > 0.0 {
        slope * slope / variance
    } else {
        0.0
    }
}

/// XX closed forms. `J_z = −∂H/∂h` and `O_J = −2 ∂H/∂J`, and both are
/// diagonal in the energy eigenbasis, so `∂_λ⟨−∂_μ H⟩ = β Cov(∂_λE, ∂_μE)`
/// (the XX energies are linear in h and J).
fn closed_form(spec: &ChainSpec, est: EstimatorSpec) -> f64 {
    let m = ensemble::moments(spec);
    let mu = match est.observable {
        Observable::Jz => H,
        _ => J,
    };
    let lambda = match est.target {
        Parameter::H => H,
        Parameter::J => J,
    };
    ratio(spec.beta * m.cov[lambda][mu], m.cov[mu][mu])
}

/// Oracle route on a prepared thermal state.
pub fn sensitivity_on_state(state: &DenseThermalState, est: EstimatorSpec) -> Result<f64> {
    let n = state.spec.n;
    let o = state.to_eigenbasis(&est.observable.matrix(n)?)?;
    if est.observable == Observable::JxSquared {
        let mean_x = state.expectation(&oracle::jx(n)?)?;
        if mean_x.abs() >= 1e-12 {
            return Err(Error::Numerical(format!("<Jx> = {mean_x:e} is not zero")));
        }
    }
    let mean = oracle::moments_in_eigenbasis(state, &o, 1)?[0];
    // Σ_k p_k Σ_l |(O − ⟨O⟩)_kl|² avoids cancelling ⟨O²⟩ against ⟨O⟩²
    let mut variance = 0.0;
    for k in 0..state.dim {
        let row: f64 = (0..state.dim)
            .map(|l| {
                let x = if k == l { o[(k, l)] - mean } else { o[(k, l)] };
                x * x
            })
            .sum();
        variance += state.populations[k] * row;
    }
    let d = oracle::state_derivative(state, est.target)?;
    let mut slope = 0.0;
    for k in 0..state.dim {
        for l in 0..state.dim {
            // tr ∂τ = 0, so centring O removes rounding carried by the mean
            let centred = if k == l { o[(l, k)] - mean } else { o[(l, k)] };
            slope += d[(k, l)] * centred;
        }
    }
    Ok(ratio(slope, variance))
}

pub fn estimator_sensitivity(spec: &ChainSpec, est: EstimatorSpec) -> Result<SensitivityReport> {
    Ok(estimator_sensitivities(spec, &[est])?.remove(0))
}

/// Several estimators on one spec; the oracle state is built at most once.
pub fn estimator_sensitivities(spec: &ChainSpec, ests: &[EstimatorSpec]) -> Result<Vec<SensitivityReport>> {
    spec.validate()?;
    for est in ests {
        EstimatorSpec::new(est.observable, est.target)?;
    }
    let state = if ests.iter().any(|e| !e.closed_form(spec)) {
        Some(oracle::thermal_state(spec)?)
    } else {
        None
    };
    ests.iter()
        .map(|&est| {
            let (value, provenance) = match &state {
                Some(st) if !est.closed_form(spec) => (sensitivity_on_state(st, est)?, Provenance::Oracle),
                _ => (closed_form(spec, est), Provenance::ExactFreeFermion),
            };
            Ok(SensitivityReport::new(est.target, value, provenance, *spec))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff;
    use crate::thermo;

    fn est(o: Observable, t: Parameter) -> EstimatorSpec {
        EstimatorSpec::new(o, t).unwrap()
    }

    #[test]
    fn jx_squared_for_j_is_refused() {
        assert!(EstimatorSpec::new(Observable::JxSquared, Parameter::J).is_err());
    }

    #[test]
    fn oracle_route_has_size_limit() {
        let s = ChainSpec::xy(14, 1.0, 0.9, 1.0, 10.0).unwrap();
        let e = estimator_sensitivity(&s, est(Observable::Jz, Parameter::H)).unwrap_err();
        assert!(matches!(e, Error::Resource { requested: 14, .. }));
        // the closed form has no such limit
        let s = ChainSpec::xx(10_000, 1.0, 0.9, 10.0).unwrap();
        assert!(estimator_sensitivity(&s, est(Observable::Jz, Parameter::H)).is_ok());
    }

    #[test]
    fn closed_forms_saturate_the_qfi() {
        for (n, h, beta) in [(8, 0.3, 2.0), (100, 0.9, 50.0), (1000, 0.5, 100.0)] {
            let s = ChainSpec::xx(n, 1.0, h, beta).unwrap();
            let f = estimator_sensitivity(&s, est(Observable::Jz, Parameter::H)).unwrap();
            assert!((f.value / thermo::qfi_h(&s).value - 1.0).abs() < 1e-10);
            let f = estimator_sensitivity(&s, est(Observable::OJ, Parameter::J)).unwrap();
            assert!((f.value / thermo::qfi_j(&s).unwrap().value - 1.0).abs() < 1e-10);
            assert_eq!(f.provenance, Provenance::ExactFreeFermion);
        }
    }

    #[test]
    fn closed_forms_match_oracle() {
        let s = ChainSpec::xx(8, 1.0, 0.8, 3.0).unwrap();
        let st = oracle::thermal_state(&s).unwrap();
        for e in [
            est(Observable::Jz, Parameter::H),
            est(Observable::Jz, Parameter::J),
            est(Observable::OJ, Parameter::J),
            est(Observable::OJ, Parameter::H),
        ] {
            let fast = closed_form(&s, e);
            let slow = sensitivity_on_state(&st, e).unwrap();
            assert!((fast / slow - 1.0).abs() < 1e-8, "{e:?} {fast} {slow}");
        }
    }

    #[test]
    fn oracle_route_saturates_when_jz_commutes() {
        // gapped, nearly frozen states: both slope and variance are tiny
        for (n, h) in [(4, 0.9), (8, 1.2), (10, 1.2)] {
            let s = ChainSpec::xy(n, 1.0, h, 0.0, 100.0).unwrap();
            let st = oracle::thermal_state(&s).unwrap();
            let f = sensitivity_on_state(&st, est(Observable::Jz, Parameter::H)).unwrap();
            let q = thermo::qfi_h(&s).value;
            assert!((f - q).abs() <= 1e-9 * q + 1e-24 * 1e4 * n as f64, "N={n} h={h}: {f:e} vs {q:e}");
        }
    }

    #[test]
    fn oracle_slope_matches_finite_difference() {
        let s = ChainSpec::xy(6, 1.0, 0.95, 1.0, 5.0).unwrap();
        let st = oracle::thermal_state(&s).unwrap();
        let o = oracle::jx_squared(6).unwrap();
        let a = st.to_eigenbasis(&o).unwrap();
        let d = oracle::state_derivative(&st, Parameter::H).unwrap();
        let mut slope = 0.0;
        for k in 0..st.dim {
            for l in 0..st.dim {
                slope += d[(k, l)] * a[(l, k)];
            }
        }
        let fd = diff::first(
            |h| oracle::thermal_state(&s.with_h(h))?.expectation(&o),
            s.h,
        )
        .unwrap()
        .checked(0.0)
        .unwrap();
        assert!((slope / fd - 1.0).abs() < 1e-6, "{slope} {fd}");
    }

    #[test]
    fn jz_variance_matches_oracle() {
        let s = ChainSpec::xx(8, 1.0, 0.6, 7.0).unwrap();
        let st = oracle::thermal_state(&s).unwrap();
        let m = oracle::observable_moments(&st, &oracle::jz(8).unwrap(), 2).unwrap();
        let v = thermo::jz_variance_xx(&s).unwrap();
        assert!((m[1] - m[0] * m[0] - v).abs() < 1e-10);
    }
}
