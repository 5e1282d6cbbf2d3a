//! Probe description and free-fermion mode data for periodic XX and XY chains.
//!
//! After the Jordan-Wigner and Fourier transforms a periodic chain of `N`
//! spins splits into two fermion-parity sectors. Even-parity states live on
//! the antiperiodic momentum grid `p = π(2l+1)/N`, odd-parity states on the
//! periodic grid `p = 2πl/N`, with `l ∈ [-N/2, N/2-1]` in both cases. The
//! single-particle energies are
//!
//! ```text
//! XX:  ε_p = 2J (cos p − h/J)                         (signed)
//! XY:  ε_p = 2J sqrt((cos p − h/J)² + (γ sin p)²)     (≥ 0)
//! ```
//!
//! and in each sector `H = Σ_p ε_p (η†_p η_p − 1/2)` with no further additive
//! constant. [`ModeTable`] exposes the antiperiodic grid (the one that
//! dominates at large `N`); the exact finite-`N` thermodynamics in
//! [`crate::thermo`] combines both sectors.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Model {
    XX,
    XY,
}

impl Model {
    pub fn as_str(self) -> &'static str {
        match self {
            Model::XX => "XX",
            Model::XY => "XY",
        }
    }
}

impl std::str::FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "XX" => Ok(Model::XX),
            "XY" => Ok(Model::XY),
            other => Err(Error::InvalidSpec(format!("unknown model '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Boundary {
    #[default]
    Periodic,
}

/// Full description of a thermal spin-chain probe.
///
/// `H_XY = −J Σ_i [(1+γ)/2 σˣᵢσˣᵢ₊₁ + (1−γ)/2 σʸᵢσʸᵢ₊₁] − h Σ_i σᶻᵢ` with
/// periodic wrap-around; `γ = 0` is the XX chain. Units: `k_B = ħ = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub model: Model,
    pub n: usize,
    pub j: f64,
    pub h: f64,
    pub gamma: f64,
    pub beta: f64,
    #[serde(default)]
    pub boundary: Boundary,
}

impl ChainSpec {
    pub fn xx(n: usize, j: f64, h: f64, beta: f64) -> Result<Self> {
        Self::new(Model::XX, n, j, h, 0.0, beta)
    }

    pub fn xy(n: usize, j: f64, h: f64, gamma: f64, beta: f64) -> Result<Self> {
        Self::new(Model::XY, n, j, h, gamma, beta)
    }

    pub fn new(model: Model, n: usize, j: f64, h: f64, gamma: f64, beta: f64) -> Result<Self> {
        let spec = ChainSpec {
            model,
            n,
            j,
            h,
            gamma,
            beta,
            boundary: Boundary::Periodic,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.n % 2 != 0 {
            return Err(Error::InvalidSpec(format!(
                "N must be even and >= 2, got {}",
                self.n
            )));
        }
        if !(self.j > 0.0) || !self.j.is_finite() {
            return Err(Error::InvalidSpec(format!("J must be > 0, got {}", self.j)));
        }
        if !self.h.is_finite() {
            return Err(Error::InvalidSpec(format!("h must be finite, got {}", self.h)));
        }
        if !(self.beta > 0.0) || self.beta.is_nan() {
            return Err(Error::InvalidSpec(format!(
                "beta must be > 0, got {}",
                self.beta
            )));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidSpec(format!(
                "gamma must lie in [0, 1], got {}",
                self.gamma
            )));
        }
        if self.model == Model::XX && self.gamma != 0.0 {
            return Err(Error::InvalidSpec(format!(
                "XX model requires gamma = 0, got {}",
                self.gamma
            )));
        }
        Ok(())
    }

    pub fn with_h(mut self, h: f64) -> Self {
        self.h = h;
        self
    }

    pub fn with_j(mut self, j: f64) -> Self {
        self.j = j;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    /// Temperature `k_B T = 1/β`.
    pub fn temperature(&self) -> f64 {
        1.0 / self.beta
    }

    pub(crate) fn require(&self, model: Model) -> Result<()> {
        if self.model != model {
            return Err(Error::ModelMismatch {
                expected: model,
                found: self.model,
            });
        }
        Ok(())
    }

    fn check_index(&self, l: i64) -> Result<()> {
        let half = (self.n / 2) as i64;
        if l < -half || l > half - 1 {
            return Err(Error::ModeIndex { l, n: self.n });
        }
        Ok(())
    }
}

/// Fermion-parity sector of the periodic chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sector {
    /// Even fermion parity, `p = π(2l+1)/N`.
    Antiperiodic,
    /// Odd fermion parity, `p = 2πl/N`.
    Periodic,
}

impl Sector {
    pub const BOTH: [Sector; 2] = [Sector::Antiperiodic, Sector::Periodic];

    /// Fermion parity (0 even, 1 odd) of the physical states in this sector.
    pub fn parity(self) -> u8 {
        match self {
            Sector::Antiperiodic => 0,
            Sector::Periodic => 1,
        }
    }

    pub fn momentum(self, n: usize, l: i64) -> f64 {
        match self {
            Sector::Antiperiodic => PI * (2 * l + 1) as f64 / n as f64,
            Sector::Periodic => 2.0 * PI * l as f64 / n as f64,
        }
    }
}

/// Index range `l ∈ [-N/2, N/2-1]`.
pub fn mode_indices(n: usize) -> impl Iterator<Item = i64> {
    let half = (n / 2) as i64;
    -half..half
}

/// Signed XX dispersion `2J cos p − 2h` at momentum `p`.
pub(crate) fn xx_energy(j: f64, h: f64, p: f64) -> f64 {
    2.0 * (j * p.cos() - h)
}

/// Non-negative XY quasiparticle energy at momentum `p`.
pub(crate) fn xy_energy(j: f64, h: f64, gamma: f64, p: f64) -> f64 {
    let xi = 2.0 * (j * p.cos() - h);
    let delta = 2.0 * j * gamma * p.sin();
    xi.hypot(delta)
}

/// Bogoliubov angle with `tan 2θ = γ sin p / (h/J − cos p)`.
///
/// `atan2` fixes the branch; `θ = 0` when `γ = 0` and `cos p < h/J`, and at
/// the degenerate point `cos p = h/J, γ sin p = 0`.
pub(crate) fn bogoliubov_theta(j: f64, h: f64, gamma: f64, p: f64) -> f64 {
    0.5 * (gamma * p.sin()).atan2(h / j - p.cos())
}

pub fn dispersion_xx(spec: &ChainSpec, l: i64) -> Result<f64> {
    spec.require(Model::XX)?;
    spec.check_index(l)?;
    let p = Sector::Antiperiodic.momentum(spec.n, l);
    Ok(xx_energy(spec.j, spec.h, p))
}

pub fn dispersion_xy(spec: &ChainSpec, l: i64) -> Result<f64> {
    spec.require(Model::XY)?;
    spec.check_index(l)?;
    let p = Sector::Antiperiodic.momentum(spec.n, l);
    Ok(xy_energy(spec.j, spec.h, spec.gamma, p))
}

pub fn bogoliubov_angle(spec: &ChainSpec, l: i64) -> Result<f64> {
    spec.require(Model::XY)?;
    spec.check_index(l)?;
    let p = Sector::Antiperiodic.momentum(spec.n, l);
    Ok(bogoliubov_theta(spec.j, spec.h, spec.gamma, p))
}

/// Mode energy in the antiperiodic sector for either model.
pub fn mode_energy(spec: &ChainSpec, l: i64) -> Result<f64> {
    match spec.model {
        Model::XX => dispersion_xx(spec, l),
        Model::XY => dispersion_xy(spec, l),
    }
}

/// Thermal occupation `1/(1 + e^{βε})` of mode `l`.
pub fn occupation(spec: &ChainSpec, l: i64) -> Result<f64> {
    Ok(fermi(spec.beta * mode_energy(spec, l)?))
}

/// Fermi factor `1/(1+eˣ)`, evaluated without overflow for any finite `x`.
pub fn fermi(x: f64) -> f64 {
    if x > 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

/// `n(1−n)` for `n = fermi(x)`; even in `x`.
pub fn fermi_variance(x: f64) -> f64 {
    let e = (-x.abs()).exp();
    e / ((1.0 + e) * (1.0 + e))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub l: i64,
    pub p: f64,
    pub epsilon: f64,
    pub occupation: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeTable {
    pub sector: Sector,
    pub modes: Vec<Mode>,
}

impl ModeTable {
    pub fn total_occupation(&self) -> f64 {
        self.modes.iter().map(|m| m.occupation).sum()
    }
}

/// Mode data on the antiperiodic grid, `l` ascending.
pub fn mode_table(spec: &ChainSpec) -> Result<ModeTable> {
    mode_table_in(spec, Sector::Antiperiodic)
}

pub fn mode_table_in(spec: &ChainSpec, sector: Sector) -> Result<ModeTable> {
    spec.validate()?;
    let modes = mode_indices(spec.n)
        .map(|l| {
            let p = sector.momentum(spec.n, l);
            let (epsilon, theta) = match spec.model {
                Model::XX => (xx_energy(spec.j, spec.h, p), 0.0),
                Model::XY => (
                    xy_energy(spec.j, spec.h, spec.gamma, p),
                    bogoliubov_theta(spec.j, spec.h, spec.gamma, p),
                ),
            };
            Mode {
                l,
                p,
                epsilon,
                occupation: fermi(spec.beta * epsilon),
                theta,
            }
        })
        .collect();
    Ok(ModeTable { sector, modes })
}
