//! Brute-force reference: dense `2^N` Hamiltonians and Gibbs states.
//!
//! Basis states are bit strings with bit `i` set when spin `i` points down,
//! so `σᶻ_i = 1 − 2 b_i`. Periodic bonds are `(i, i+1 mod N)` for every `i`,
//! which for `N = 2` counts the single physical bond twice.

use faer::{Mat, Side};

use crate::chain::ChainSpec;
use crate::diff;
use crate::error::{Error, Result};
use crate::thermo::Parameter;

/// Largest chain the oracle will build (dimension 4096).
pub const MAX_SPINS: usize = 12;

/// Population sums at or below this are treated as zero when forming the SLD.
pub const SLD_CUTOFF: f64 = 1e-14;

fn check_size(n: usize) -> Result<usize> {
    if n > MAX_SPINS {
        return Err(Error::Resource {
            requested: n,
            max: MAX_SPINS,
        });
    }
    Ok(1usize << n)
}

fn spin_z(s: usize, i: usize) -> f64 {
    1.0 - 2.0 * ((s >> i) & 1) as f64
}

fn bonds(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).map(move |i| (i, (i + 1) % n))
}

/// `J_z = Σ σᶻ_i`.
pub fn jz(n: usize) -> Result<Mat<f64>> {
    let dim = check_size(n)?;
    Ok(Mat::from_fn(dim, dim, |r, c| {
        if r == c {
            (0..n).map(|i| spin_z(r, i)).sum()
        } else {
            0.0
        }
    }))
}

/// `J_x = Σ σˣ_i`.
pub fn jx(n: usize) -> Result<Mat<f64>> {
    let dim = check_size(n)?;
    let mut m = Mat::zeros(dim, dim);
    for s in 0..dim {
        for i in 0..n {
            m[(s ^ (1 << i), s)] += 1.0;
        }
    }
    Ok(m)
}

/// `J_x²`, assembled directly rather than by squaring.
pub fn jx_squared(n: usize) -> Result<Mat<f64>> {
    let dim = check_size(n)?;
    let mut m = Mat::zeros(dim, dim);
    for s in 0..dim {
        m[(s, s)] += n as f64;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    m[(s ^ (1 << i) ^ (1 << j), s)] += 1.0;
                }
            }
        }
    }
    Ok(m)
}

/// Bond operator `Σ_i (σˣσˣ + σʸσʸ)`; only antiparallel pairs are flipped.
pub fn o_j(n: usize) -> Result<Mat<f64>> {
    let dim = check_size(n)?;
    let mut m = Mat::zeros(dim, dim);
    for s in 0..dim {
        for (i, k) in bonds(n) {
            if (s >> i) & 1 != (s >> k) & 1 {
                m[(s ^ (1 << i) ^ (1 << k), s)] += 2.0;
            }
        }
    }
    Ok(m)
}

/// `−Σ_i [(1+γ)/2 σˣσˣ + (1−γ)/2 σʸσʸ]`, i.e. `∂H/∂J`.
fn coupling_operator(n: usize, gamma: f64) -> Result<Mat<f64>> {
    let dim = check_size(n)?;
    let mut m = Mat::zeros(dim, dim);
    for s in 0..dim {
        for (i, k) in bonds(n) {
            // σʸσʸ contributes −1 on parallel and +1 on antiparallel pairs
            let amp = if (s >> i) & 1 == (s >> k) & 1 { -gamma } else { -1.0 };
            m[(s ^ (1 << i) ^ (1 << k), s)] += amp;
        }
    }
    Ok(m)
}

/// Dense Hamiltonian. Only the size is checked, so `J = 0` is accepted.
pub fn build_hamiltonian(spec: &ChainSpec) -> Result<Mat<f64>> {
    let mut h = coupling_operator(spec.n, spec.gamma)?;
    for s in 0..h.nrows() {
        let z: f64 = (0..spec.n).map(|i| spin_z(s, i)).sum();
        h[(s, s)] = spec.j * h[(s, s)] - spec.h * z;
    }
    let dim = h.nrows();
    for r in 0..dim {
        for c in 0..dim {
            if r != c {
                h[(r, c)] *= spec.j;
            }
        }
    }
    Ok(h)
}

/// `∂H/∂λ`.
pub fn hamiltonian_derivative(spec: &ChainSpec, target: Parameter) -> Result<Mat<f64>> {
    match target {
        Parameter::H => Ok(-jz(spec.n)?),
        Parameter::J => coupling_operator(spec.n, spec.gamma),
    }
}

/// Gibbs state in its eigenbasis.
#[derive(Debug, Clone)]
pub struct DenseThermalState {
    pub spec: ChainSpec,
    pub dim: usize,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Eigenvectors as columns.
    pub eigenvectors: Mat<f64>,
    pub populations: Vec<f64>,
    pub log_z: f64,
}

impl DenseThermalState {
    pub fn from_hamiltonian(spec: ChainSpec, h: &Mat<f64>) -> Result<Self> {
        let evd = h
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Numerical(format!("eigendecomposition failed: {e:?}")))?;
        let dim = h.nrows();
        let s = evd.S().column_vector();
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| s[a].total_cmp(&s[b]));
        let u = evd.U();
        let eigenvalues: Vec<f64> = order.iter().map(|&k| s[k]).collect();
        let eigenvectors = Mat::from_fn(dim, dim, |r, c| u[(r, order[c])]);

        let e0 = eigenvalues[0];
        let weights: Vec<f64> = eigenvalues.iter().map(|e| (-spec.beta * (e - e0)).exp()).collect();
        let total: f64 = weights.iter().sum();
        let populations = weights.iter().map(|w| w / total).collect();
        Ok(DenseThermalState {
            spec,
            dim,
            eigenvalues,
            eigenvectors,
            populations,
            log_z: -spec.beta * e0 + total.ln(),
        })
    }

    /// `Vᵀ O V`.
    pub fn to_eigenbasis(&self, o: &Mat<f64>) -> Result<Mat<f64>> {
        if o.nrows() != self.dim || o.ncols() != self.dim {
            return Err(Error::DimensionMismatch {
                state: self.dim,
                observable: o.nrows(),
            });
        }
        let v = &self.eigenvectors;
        Ok(v.transpose() * (o * v))
    }

    /// `V A Vᵀ`.
    pub fn from_eigenbasis(&self, a: &Mat<f64>) -> Mat<f64> {
        let v = &self.eigenvectors;
        v * (a * v.transpose())
    }

    /// The density matrix in the computational basis.
    pub fn density_matrix(&self) -> Mat<f64> {
        let p = Mat::from_fn(self.dim, self.dim, |r, c| if r == c { self.populations[r] } else { 0.0 });
        self.from_eigenbasis(&p)
    }

    pub fn expectation(&self, o: &Mat<f64>) -> Result<f64> {
        Ok(observable_moments(self, o, 1)?[0])
    }
}

pub fn thermal_state(spec: &ChainSpec) -> Result<DenseThermalState> {
    let h = build_hamiltonian(spec)?;
    DenseThermalState::from_hamiltonian(*spec, &h)
}

/// `(p_k − p_l) / (E_k − E_l)`, with the derivative `−β p_k` as its limit.
fn divided_difference(state: &DenseThermalState, k: usize, l: usize) -> f64 {
    let (lo, hi) = if state.eigenvalues[k] <= state.eigenvalues[l] { (k, l) } else { (l, k) };
    let gap = state.eigenvalues[hi] - state.eigenvalues[lo];
    let beta = state.spec.beta;
    let p = state.populations[lo];
    if beta * gap < 1e-10 {
        -beta * p * (1.0 - 0.5 * beta * gap)
    } else {
        p * (-beta * gap).exp_m1() / gap
    }
}

/// `∂τ/∂λ` in the eigenbasis of `τ`, from the exact divided-difference
/// formula for the derivative of a matrix function.
pub fn state_derivative(state: &DenseThermalState, target: Parameter) -> Result<Mat<f64>> {
    let dh = state.to_eigenbasis(&hamiltonian_derivative(&state.spec, target)?)?;
    let mean: f64 = (0..state.dim).map(|k| state.populations[k] * dh[(k, k)]).sum();
    let beta = state.spec.beta;
    Ok(Mat::from_fn(state.dim, state.dim, |k, l| {
        let base = dh[(k, l)] * divided_difference(state, k, l);
        if k == l {
            base + beta * mean * state.populations[k]
        } else {
            base
        }
    }))
}

/// `∂τ/∂λ` in the eigenbasis of `τ` by central differences of the full
/// thermal state, Richardson-extrapolated over `δ` and `δ/2`.
pub fn state_derivative_fd(state: &DenseThermalState, target: Parameter) -> Result<Mat<f64>> {
    let spec = state.spec;
    let x = match target {
        Parameter::H => spec.h,
        Parameter::J => spec.j,
    };
    let at = |v: f64| match target {
        Parameter::H => spec.with_h(v),
        Parameter::J => spec.with_j(v),
    };
    let v = &state.eigenvectors;
    let shifted = |v_at: f64| -> Result<Mat<f64>> {
        let s = thermal_state(&at(v_at))?;
        let overlap = v.transpose() * &s.eigenvectors;
        let weighted = Mat::from_fn(state.dim, state.dim, |r, c| overlap[(r, c)] * s.populations[c]);
        Ok(&weighted * overlap.transpose())
    };
    let d = diff::step(x);
    let central = |h: f64| -> Result<Mat<f64>> {
        let plus = shifted(x + h)?;
        let minus = shifted(x - h)?;
        Ok((plus - minus) * faer::Scale(1.0 / (2.0 * h)))
    };
    let coarse = central(d)?;
    let fine = central(0.5 * d)?;
    let spread = (&fine - &coarse).norm_l2();
    let scale = fine.norm_l2().max(coarse.norm_l2());
    if scale > 0.0 && spread > diff::AGREEMENT * scale {
        return Err(Error::Derivative(format!(
            "thermal-state difference quotients differ by {:.3e} relative",
            spread / scale
        )));
    }
    Ok((fine * faer::Scale(4.0) - coarse) * faer::Scale(1.0 / 3.0))
}

/// Spectral QFI `Σ 2 |D_kl|² / (p_k + p_l)` from an eigenbasis derivative.
///
/// Every pair with a non-zero population sum is kept. Each entry of `D`
/// carries a factor of the larger population, so the ratio stays accurate
/// even for populations far below any fixed cutoff, and in gapped cold
/// chains those terms are the whole answer.
pub fn qfi_from_derivative(state: &DenseThermalState, d: &Mat<f64>) -> f64 {
    let p = &state.populations;
    let mut total = 0.0;
    for k in 0..state.dim {
        for l in 0..state.dim {
            let s = p[k] + p[l];
            if s > 0.0 {
                total += 2.0 * d[(k, l)].powi(2) / s;
            }
        }
    }
    total
}

pub fn qfi_spectral(spec: &ChainSpec, target: Parameter) -> Result<f64> {
    let state = thermal_state(spec)?;
    let d = state_derivative(&state, target)?;
    Ok(qfi_from_derivative(&state, &d))
}

/// Symmetric logarithmic derivative in the computational basis.
pub fn sld(spec: &ChainSpec, target: Parameter) -> Result<Mat<f64>> {
    let state = thermal_state(spec)?;
    let d = state_derivative(&state, target)?;
    Ok(state.from_eigenbasis(&sld_eigenbasis(&state, &d)))
}

pub fn sld_eigenbasis(state: &DenseThermalState, d: &Mat<f64>) -> Mat<f64> {
    let p = &state.populations;
    Mat::from_fn(state.dim, state.dim, |k, l| {
        let s = p[k] + p[l];
        if s > SLD_CUTOFF {
            2.0 * d[(k, l)] / s
        } else {
            0.0
        }
    })
}

/// `tr(τ Oᵏ)` for `k = 1..=order`, `order ≤ 4`.
pub fn observable_moments(state: &DenseThermalState, o: &Mat<f64>, order: usize) -> Result<Vec<f64>> {
    if !(1..=4).contains(&order) {
        return Err(Error::InvalidSpec(format!("moment order {order} outside 1..=4")));
    }
    let a = state.to_eigenbasis(o)?;
    moments_in_eigenbasis(state, &a, order)
}

pub(crate) fn moments_in_eigenbasis(state: &DenseThermalState, a: &Mat<f64>, order: usize) -> Result<Vec<f64>> {
    let p = &state.populations;
    let n = state.dim;
    let mut out = Vec::with_capacity(order);
    out.push((0..n).map(|k| p[k] * a[(k, k)]).sum());
    if order >= 2 {
        // a is symmetric, so (a²)_kk = Σ_l a_kl²
        out.push((0..n).map(|k| p[k] * (0..n).map(|l| a[(k, l)].powi(2)).sum::<f64>()).sum());
    }
    if order >= 3 {
        let a2 = a * a;
        out.push((0..n).map(|k| p[k] * (0..n).map(|l| a[(k, l)] * a2[(l, k)]).sum::<f64>()).sum());
        if order >= 4 {
            out.push((0..n).map(|k| p[k] * (0..n).map(|l| a2[(k, l)].powi(2)).sum::<f64>()).sum());
        }
    }
    Ok(out)
}
