//! Exact thermal ensemble of the periodic chain as two parity-projected free-fermion sectors.
//!
//! Modes `p` and `−p` share an energy and are grouped into pair units; the
//! periodic sector additionally carries the unpaired modes `p = 0` and
//! `p = π`. A unit with `m` modes sits in occupation `c ∈ {0..m}` with energy
//! `(c − m/2) ε` and parity `c mod 2`. Sums over all configurations of a given
//! total parity are accumulated unit by unit, keeping one running weight per
//! parity class plus weighted first and second moments of the parameter
//! derivatives of the energy. All weights are kept max-normalised with a
//! separate log scale, so no Boltzmann factor is ever formed unscaled.

use rand::Rng;

use crate::chain::{ChainSpec, Sector};

/// Number of linear features tracked: ∂ε/∂h, ∂ε/∂J, ∂²ε/∂h², ∂²ε/∂J², ∂²ε/∂h∂J.
const FEATURES: usize = 5;
/// Leading features whose second moments are tracked.
const SECOND: usize = 2;

pub(crate) const H: usize = 0;
pub(crate) const J: usize = 1;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Unit {
    /// 1 for an unpaired mode, 2 for a `(p, −p)` pair.
    pub modes: u8,
    pub p: f64,
    pub energy: f64,
    /// Derivatives of `energy` with respect to (h, J, hh, JJ, hJ).
    pub deriv: [f64; FEATURES],
    /// `∂θ/∂h`, `∂θ/∂J` of the Bogoliubov angle (zero without pairing).
    pub dtheta: [f64; 2],
}

impl Unit {
    fn states(&self) -> &'static [(u8, f64)] {
        // (occupation, multiplicity)
        if self.modes == 1 {
            &[(0, 1.0), (1, 1.0)]
        } else {
            &[(0, 1.0), (1, 2.0), (2, 1.0)]
        }
    }

    fn half(&self) -> f64 {
        0.5 * self.modes as f64
    }

    /// Scaled weights `mult · e^{−β(c−m/2)ε − shift}` and the shift, from a
    /// single exponential.
    fn weights(&self, beta: f64) -> ([f64; 3], f64) {
        let a = beta * self.energy.abs();
        let x = (-a).exp();
        let up = self.energy >= 0.0;
        if self.modes == 1 {
            let w = if up { [1.0, x, 0.0] } else { [x, 1.0, 0.0] };
            (w, 0.5 * a)
        } else {
            let w = if up { [1.0, 2.0 * x, x * x] } else { [x * x, 2.0 * x, 1.0] };
            (w, a)
        }
    }

    /// Mean occupation of the unit in the unconstrained grand-canonical state.
    fn free_occupation(&self, beta: f64) -> f64 {
        self.modes as f64 * crate::chain::fermi(beta * self.energy)
    }
}

/// Units of one parity sector for a spec.
pub(crate) fn sector_units(spec: &ChainSpec, sector: Sector) -> Vec<Unit> {
    let n = spec.n;
    let mut units = Vec::with_capacity(n / 2 + 1);
    let paired = |p: f64| unit_for(spec, p, 2);
    match sector {
        Sector::Antiperiodic => {
            for l in 0..(n / 2) as i64 {
                units.push(paired(sector.momentum(n, l)));
            }
        }
        Sector::Periodic => {
            units.push(unit_for(spec, 0.0, 1));
            units.push(unit_for(spec, std::f64::consts::PI, 1));
            for l in 1..(n / 2) as i64 {
                units.push(paired(sector.momentum(n, l)));
            }
        }
    }
    units
}

fn unit_for(spec: &ChainSpec, p: f64, modes: u8) -> Unit {
    let (j, h, g) = (spec.j, spec.h, spec.gamma);
    let (sin, cos) = if modes == 1 {
        // exact values for p ∈ {0, π}
        (0.0, p.cos().round())
    } else {
        p.sin_cos()
    };
    let xi = 2.0 * (j * cos - h);
    let xi_d = [-2.0, 2.0 * cos];
    if g == 0.0 || modes == 1 {
        return Unit {
            modes,
            p,
            energy: xi,
            deriv: [xi_d[0], xi_d[1], 0.0, 0.0, 0.0],
            dtheta: [0.0, 0.0],
        };
    }
    let delta = 2.0 * j * g * sin;
    let delta_d = [0.0, 2.0 * g * sin];
    let e = xi.hypot(delta);
    let e_d = [
        (xi * xi_d[0] + delta * delta_d[0]) / e,
        (xi * xi_d[1] + delta * delta_d[1]) / e,
    ];
    let hess = |a: usize, b: usize| (xi_d[a] * xi_d[b] + delta_d[a] * delta_d[b] - e_d[a] * e_d[b]) / e;
    // 2θ = atan2(Δ, −ξ)
    let e2 = e * e;
    let dtheta = [
        (delta * xi_d[0] - xi * delta_d[0]) / (2.0 * e2),
        (delta * xi_d[1] - xi * delta_d[1]) / (2.0 * e2),
    ];
    Unit {
        modes,
        p,
        energy: e,
        deriv: [e_d[0], e_d[1], hess(0, 0), hess(1, 1), hess(0, 1)],
        dtheta,
    }
}

/// Running parity-resolved sums.
#[derive(Debug, Clone, Copy)]
struct Accum {
    log_scale: f64,
    w: [f64; 2],
    s: [[f64; FEATURES]; 2],
    q: [[[f64; SECOND]; SECOND]; 2],
}

impl Accum {
    fn empty() -> Self {
        Accum {
            log_scale: 0.0,
            w: [1.0, 0.0],
            s: [[0.0; FEATURES]; 2],
            q: [[[0.0; SECOND]; SECOND]; 2],
        }
    }

    fn push(&mut self, unit: &Unit, beta: f64) {
        let (wts, shift) = unit.weights(beta);
        let centre = unit.free_occupation(beta);
        let mut next = Accum {
            log_scale: self.log_scale + shift,
            w: [0.0; 2],
            s: [[0.0; FEATURES]; 2],
            q: [[[0.0; SECOND]; SECOND]; 2],
        };
        for (slot, &(c, _)) in unit.states().iter().enumerate() {
            let wc = wts[slot];
            if wc == 0.0 {
                continue;
            }
            let occ = c as f64 - centre;
            let x: [f64; FEATURES] = std::array::from_fn(|k| occ * unit.deriv[k]);
            for from in 0..2 {
                let to = from ^ (c as usize & 1);
                let w0 = self.w[from];
                next.w[to] += wc * w0;
                for k in 0..FEATURES {
                    next.s[to][k] += wc * (self.s[from][k] + w0 * x[k]);
                }
                for a in 0..SECOND {
                    for b in 0..SECOND {
                        next.q[to][a][b] += wc
                            * (self.q[from][a][b]
                                + self.s[from][a] * x[b]
                                + self.s[from][b] * x[a]
                                + w0 * x[a] * x[b]);
                    }
                }
            }
        }
        next.renormalise();
        *self = next;
    }

    fn renormalise(&mut self) {
        let r = self.w[0].max(self.w[1]);
        if r > 0.0 && r.is_finite() {
            let inv = 1.0 / r;
            for par in 0..2 {
                self.w[par] *= inv;
                for v in self.s[par].iter_mut() {
                    *v *= inv;
                }
                for row in self.q[par].iter_mut() {
                    for v in row.iter_mut() {
                        *v *= inv;
                    }
                }
            }
            self.log_scale += r.ln();
        }
    }

    /// `ln` of the total weight in parity class `par`.
    fn log_weight(&self, par: usize) -> f64 {
        self.log_scale + self.w[par].ln()
    }
}

/// Exact thermodynamic moments of the energy derivatives.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Moments {
    pub log_z: f64,
    /// `⟨∂E/∂h⟩`, `⟨∂E/∂J⟩`.
    pub mean: [f64; 2],
    /// Covariance matrix of (`∂E/∂h`, `∂E/∂J`).
    pub cov: [[f64; 2]; 2],
    /// `⟨∂²E/∂h²⟩`, `⟨∂²E/∂J²⟩`, `⟨∂²E/∂h∂J⟩`.
    pub mean_hess: [f64; 3],
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

pub(crate) fn moments(spec: &ChainSpec) -> Moments {
    let beta = spec.beta;
    let mut parts = Vec::with_capacity(2);
    for sector in Sector::BOTH {
        let units = sector_units(spec, sector);
        let mut acc = Accum::empty();
        let mut offset = [0.0; FEATURES];
        for u in &units {
            acc.push(u, beta);
            let centre = u.free_occupation(beta) - u.half();
            for k in 0..FEATURES {
                offset[k] += centre * u.deriv[k];
            }
        }
        parts.push((sector.parity() as usize, acc, offset));
    }
    let logs: Vec<f64> = parts.iter().map(|(par, acc, _)| acc.log_weight(*par)).collect();
    let log_z = log_sum_exp(logs[0], logs[1]);

    // Normalised by their own sum: ln Z can be large enough that its rounding
    // would otherwise leak into every moment.
    let raw: Vec<f64> = logs.iter().map(|lw| (lw - log_z).exp()).collect();
    let omegas: Vec<f64> = raw.iter().map(|w| w / (raw[0] + raw[1])).collect();
    let mut mean = [0.0; FEATURES];
    let mut sector_means = [[0.0; SECOND]; 2];
    let mut within = [[0.0; SECOND]; SECOND];
    for (idx, (par, acc, offset)) in parts.iter().enumerate() {
        let w = acc.w[*par];
        let centred: [f64; FEATURES] = if w > 0.0 {
            std::array::from_fn(|k| acc.s[*par][k] / w)
        } else {
            [0.0; FEATURES]
        };
        for a in 0..SECOND {
            sector_means[idx][a] = offset[a] + centred[a];
        }
        if omegas[idx] == 0.0 {
            continue;
        }
        for k in 0..FEATURES {
            mean[k] += omegas[idx] * (offset[k] + centred[k]);
        }
        // Within-sector covariance from the centred sums; the offsets never
        // enter, so large means do not cancel against each other.
        for a in 0..SECOND {
            for b in 0..SECOND {
                within[a][b] += omegas[idx] * (acc.q[*par][a][b] / w - centred[a] * centred[b]);
            }
        }
    }
    let mut cov = [[0.0; 2]; 2];
    for a in 0..SECOND {
        for b in 0..SECOND {
            let between = omegas[0]
                * omegas[1]
                * (sector_means[0][a] - sector_means[1][a])
                * (sector_means[0][b] - sector_means[1][b]);
            cov[a][b] = within[a][b] + between;
        }
    }

    Moments {
        log_z,
        mean: [mean[0], mean[1]],
        cov,
        mean_hess: [mean[2], mean[3], mean[4]],
    }
}

/// Mean and variance of the total fermion number of an XX chain as a
/// function of `h`, with the momentum grid cached.
#[derive(Debug, Clone)]
pub(crate) struct CountCurve {
    j: f64,
    beta: f64,
    /// Per sector: parity, then `(modes, cos p)` of each unit.
    sectors: Vec<(usize, Vec<(u8, f64)>)>,
}

impl CountCurve {
    pub fn new(spec: &ChainSpec) -> Self {
        let sectors = Sector::BOTH
            .iter()
            .map(|&sector| {
                let units = sector_units(spec, sector)
                    .iter()
                    .map(|u| (u.modes, if u.modes == 1 { u.p.cos().round() } else { u.p.cos() }))
                    .collect();
                (sector.parity() as usize, units)
            })
            .collect();
        CountCurve {
            j: spec.j,
            beta: spec.beta,
            sectors,
        }
    }

    /// Exact `(mean, variance)` of the fermion number at field `h`.
    pub fn at(&self, h: f64) -> (f64, f64) {
        let beta = self.beta;
        let mut logs = [0.0; 2];
        let mut stats = [(0.0, 0.0); 2];
        for (slot, (target, units)) in self.sectors.iter().enumerate() {
            // per parity: weight, Σ w x, Σ w x² with x the centred count
            let mut log_scale = 0.0;
            let mut w = [1.0, 0.0];
            let mut s = [0.0; 2];
            let mut q = [0.0; 2];
            let mut offset = 0.0;
            for &(modes, cos) in units {
                let energy = 2.0 * (self.j * cos - h);
                let a = beta * energy.abs();
                let x = (-a).exp();
                let up = energy >= 0.0;
                let m = modes as f64;
                let centre = m * if up { x / (1.0 + x) } else { 1.0 / (1.0 + x) };
                offset += centre;
                let (wts, shift, count): ([f64; 3], f64, usize) = if modes == 1 {
                    (if up { [1.0, x, 0.0] } else { [x, 1.0, 0.0] }, 0.5 * a, 2)
                } else {
                    (if up { [1.0, 2.0 * x, x * x] } else { [x * x, 2.0 * x, 1.0] }, a, 3)
                };
                let (mut nw, mut ns, mut nq) = ([0.0; 2], [0.0; 2], [0.0; 2]);
                for (c, &wc) in wts.iter().enumerate().take(count) {
                    let d = c as f64 - centre;
                    for from in 0..2 {
                        let to = from ^ (c & 1);
                        nw[to] += wc * w[from];
                        ns[to] += wc * (s[from] + w[from] * d);
                        nq[to] += wc * (q[from] + 2.0 * s[from] * d + w[from] * d * d);
                    }
                }
                let r = nw[0].max(nw[1]);
                log_scale += shift + r.ln();
                let inv = 1.0 / r;
                for par in 0..2 {
                    w[par] = nw[par] * inv;
                    s[par] = ns[par] * inv;
                    q[par] = nq[par] * inv;
                }
            }
            let par = *target;
            logs[slot] = log_scale + w[par].ln();
            let mean = s[par] / w[par];
            stats[slot] = (offset + mean, q[par] / w[par] - mean * mean);
        }
        let log_z = log_sum_exp(logs[0], logs[1]);
        let raw = [(logs[0] - log_z).exp(), (logs[1] - log_z).exp()];
        let om = [raw[0] / (raw[0] + raw[1]), raw[1] / (raw[0] + raw[1])];
        let mean = om[0] * stats[0].0 + om[1] * stats[1].0;
        let between = om[0] * om[1] * (stats[0].0 - stats[1].0).powi(2);
        (mean, om[0] * stats[0].1 + om[1] * stats[1].1 + between)
    }
}

/// Prefix or suffix parity weights (normalised, with log scale).
#[derive(Debug, Clone, Copy)]
struct ParityWeight {
    log_scale: f64,
    w: [f64; 2],
}

impl ParityWeight {
    fn unit() -> Self {
        ParityWeight {
            log_scale: 0.0,
            w: [1.0, 0.0],
        }
    }

    fn push(&self, unit: &Unit, beta: f64) -> Self {
        let (wts, shift) = unit.weights(beta);
        let mut w = [0.0; 2];
        for (slot, &(c, _)) in unit.states().iter().enumerate() {
            for from in 0..2 {
                w[from ^ (c as usize & 1)] += wts[slot] * self.w[from];
            }
        }
        let r = w[0].max(w[1]);
        let mut log_scale = self.log_scale + shift;
        if r > 0.0 && r.is_finite() {
            w[0] /= r;
            w[1] /= r;
            log_scale += r.ln();
        }
        ParityWeight { log_scale, w }
    }
}

/// Probabilities of each occupation of every unit, jointly with the sector.
#[derive(Debug, Clone)]
pub(crate) struct SectorMarginals {
    #[cfg_attr(not(test), allow(dead_code))]
    pub probability: f64,
    pub units: Vec<Unit>,
    /// `state_probs[i][c]` = P(sector, unit i has occupation c).
    pub state_probs: Vec<[f64; 3]>,
}

pub(crate) fn marginals(spec: &ChainSpec) -> Vec<SectorMarginals> {
    let beta = spec.beta;
    let log_z = moments_log_z(spec);
    Sector::BOTH
        .iter()
        .map(|&sector| {
            let units = sector_units(spec, sector);
            let target = sector.parity() as usize;
            let m = units.len();
            let mut prefix = Vec::with_capacity(m + 1);
            prefix.push(ParityWeight::unit());
            for u in &units {
                let next = prefix.last().unwrap().push(u, beta);
                prefix.push(next);
            }
            let mut suffix = vec![ParityWeight::unit(); m + 1];
            for i in (0..m).rev() {
                suffix[i] = suffix[i + 1].push(&units[i], beta);
            }
            let total = prefix[m];
            let probability = (total.log_scale + total.w[target].ln() - log_z).exp();
            let state_probs = units
                .iter()
                .enumerate()
                .map(|(i, u)| {
                    let (wts, shift) = u.weights(beta);
                    let (pre, suf) = (prefix[i], suffix[i + 1]);
                    let base = pre.log_scale + suf.log_scale + shift - log_z;
                    let mut out = [0.0; 3];
                    for (slot, &(c, _)) in u.states().iter().enumerate() {
                        let q = c as usize & 1;
                        let mut acc = 0.0;
                        for a in 0..2 {
                            acc += pre.w[a] * suf.w[target ^ a ^ q];
                        }
                        let v = wts[slot] * acc;
                        out[c as usize] = if v > 0.0 { (base + v.ln()).exp() } else { 0.0 };
                    }
                    out
                })
                .collect();
            SectorMarginals {
                probability,
                units,
                state_probs,
            }
        })
        .collect()
}

fn moments_log_z(spec: &ChainSpec) -> f64 {
    let mut logs = [0.0; 2];
    for (slot, sector) in Sector::BOTH.iter().enumerate() {
        let mut acc = ParityWeight::unit();
        for u in sector_units(spec, *sector) {
            acc = acc.push(&u, spec.beta);
        }
        logs[slot] = acc.log_scale + acc.w[sector.parity() as usize].ln();
    }
    log_sum_exp(logs[0], logs[1])
}

/// Quantum (basis-rotation) part of the QFI from the Bogoliubov pairs:
/// `Σ_pairs 4 (∂θ)² tanh²(βE) P(pair in 00 or 11)`.
pub(crate) fn rotation_qfi(spec: &ChainSpec, param: usize) -> f64 {
    let mut total = 0.0;
    for sm in marginals(spec) {
        for (u, probs) in sm.units.iter().zip(&sm.state_probs) {
            if u.modes != 2 || u.dtheta[param] == 0.0 {
                continue;
            }
            let t = (spec.beta * u.energy).tanh();
            total += 4.0 * u.dtheta[param].powi(2) * t * t * (probs[0] + probs[2]);
        }
    }
    total
}

/// Exact sampler of total fermion occupation for fixed-sign (γ = 0) chains.
///
/// A sector is drawn with its Gibbs weight; units are then drawn one at a
/// time from their distribution conditioned on the parity still required of
/// the remaining units.
#[derive(Debug, Clone)]
pub(crate) struct OccupationSampler {
    sector_prob: [f64; 2],
    /// Per sector, per unit, per required parity: cumulative probabilities over occupations.
    tables: [Vec<[[f64; 3]; 2]>; 2],
}

impl OccupationSampler {
    pub(crate) fn new(spec: &ChainSpec) -> Self {
        let beta = spec.beta;
        let mut tables: [Vec<[[f64; 3]; 2]>; 2] = [Vec::new(), Vec::new()];
        let mut logs = [0.0; 2];
        for (slot, sector) in Sector::BOTH.iter().enumerate() {
            let units = sector_units(spec, *sector);
            let m = units.len();
            let mut suffix = vec![ParityWeight::unit(); m + 1];
            for i in (0..m).rev() {
                suffix[i] = suffix[i + 1].push(&units[i], beta);
            }
            logs[slot] = suffix[0].log_scale + suffix[0].w[sector.parity() as usize].ln();
            tables[slot] = units
                .iter()
                .enumerate()
                .map(|(i, u)| {
                    let (wts, _) = u.weights(beta);
                    let suf = suffix[i + 1];
                    let mut cdf = [[0.0; 3]; 2];
                    for need in 0..2 {
                        let mut acc = [0.0; 3];
                        for (slot, &(c, _)) in u.states().iter().enumerate() {
                            acc[slot] = wts[slot] * suf.w[need ^ (c as usize & 1)];
                        }
                        let total: f64 = acc.iter().sum();
                        let mut run = 0.0;
                        for slot in 0..3 {
                            run += if total > 0.0 { acc[slot] / total } else { 0.0 };
                            cdf[need][slot] = run;
                        }
                    }
                    cdf
                })
                .collect();
        }
        let log_z = log_sum_exp(logs[0], logs[1]);
        let p0 = (logs[0] - log_z).exp();
        OccupationSampler {
            sector_prob: [p0, 1.0 - p0],
            tables,
        }
    }

    /// Total number of occupied fermion modes in one draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let slot = if rng.gen::<f64>() < self.sector_prob[0] { 0 } else { 1 };
        let mut need = slot; // sector parity equals its index
        let mut total = 0usize;
        for cdf in &self.tables[slot] {
            let u: f64 = rng.gen();
            let row = &cdf[need];
            let c = if u < row[0] {
                0
            } else if u < row[1] {
                1
            } else {
                2
            };
            total += c;
            need ^= c & 1;
        }
        total
    }
}
