//! Exact small-n reference: Trotterized state-vector evolution, dense
//! spectra of `H(s) = (1 - s) H_X + s H_Z`, gap profiles and the adiabatic
//! metric tensor.
//!
//! Basis states are indexed by bit pattern with bit `i` set when spin `i`
//! is `-1`.

use std::path::Path;

use nalgebra::{Complex, DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::instance::{diagonal_energies, is_tie, optimal_indices, IsingInstance};
use crate::schedule::ScheduleFunction;

pub type C64 = Complex<f64>;

/// Largest n accepted by state-vector evolution.
pub const STATE_GUARD: usize = 22;
/// Largest n accepted by dense diagonalization.
pub const DIAG_GUARD: usize = 12;
/// Largest n accepted by the metric tensor.
pub const METRIC_GUARD: usize = 12;
/// Gaps below this are treated as level crossings.
pub const DEGENERACY_TOL: f64 = 1e-12;
/// Finest spacing of the gap-minimum refinement, `2^-10`.
pub const REFINED_SPACING: f64 = 1.0 / 1024.0;

fn guard(what: &'static str, n: usize, max: usize) -> Result<()> {
    if n > max {
        Err(Error::SizeGuard { what, n, max })
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n: usize,
    amps: Vec<C64>,
}

impl StateVector {
    /// `|+>^n`.
    pub fn plus(n: usize) -> Result<Self> {
        guard("state vector", n, STATE_GUARD)?;
        let dim = 1usize << n;
        let a = (1.0 / dim as f64).sqrt();
        Ok(Self {
            n,
            amps: vec![C64::new(a, 0.0); dim],
        })
    }

    pub fn basis(n: usize, index: usize) -> Result<Self> {
        guard("state vector", n, STATE_GUARD)?;
        let mut amps = vec![C64::new(0.0, 0.0); 1usize << n];
        *amps
            .get_mut(index)
            .ok_or_else(|| invalid(format!("basis index {index} out of range")))? =
            C64::new(1.0, 0.0);
        Ok(Self { n, amps })
    }

    pub fn from_amplitudes(amps: Vec<C64>) -> Result<Self> {
        if !amps.len().is_power_of_two() {
            return Err(invalid("amplitude count must be a power of two"));
        }
        let n = amps.len().trailing_zeros() as usize;
        guard("state vector", n, STATE_GUARD)?;
        Ok(Self { n, amps })
    }

    pub fn n_spins(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Euclidean distance `|| a - b ||`.
    pub fn distance(&self, other: &Self) -> f64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// `exp(-i gamma H_Z)` as a phase multiply.
    pub fn apply_problem(&mut self, energies: &[f64], gamma: f64) {
        for (a, &e) in self.amps.iter_mut().zip(energies) {
            let (sin, cos) = (gamma * e).sin_cos();
            *a *= C64::new(cos, -sin);
        }
    }

    /// `exp(-i beta H_X) = prod_i (cos beta + i sin beta X_i)`.
    pub fn apply_driver(&mut self, beta: f64) {
        let (sin, cos) = beta.sin_cos();
        let isin = C64::new(0.0, sin);
        for bit in 0..self.n {
            let stride = 1usize << bit;
            for block in (0..self.amps.len()).step_by(2 * stride) {
                for k in block..block + stride {
                    let a = self.amps[k];
                    let b = self.amps[k + stride];
                    self.amps[k] = a * cos + b * isin;
                    self.amps[k + stride] = b * cos + a * isin;
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrotterOrder {
    #[serde(rename = "1")]
    First,
    #[serde(rename = "2")]
    Second,
}

impl TrotterOrder {
    pub fn from_int(order: u8) -> Result<Self> {
        match order {
            1 => Ok(Self::First),
            2 => Ok(Self::Second),
            _ => Err(invalid(format!(
                "Trotter order must be 1 or 2, got {order}"
            ))),
        }
    }

    pub fn as_int(self) -> u8 {
        match self {
            Self::First => 1,
            Self::Second => 2,
        }
    }
}

/// Number of layers `p = round(T / step)`.
pub fn layers_for(total_time: f64, step: f64) -> Result<usize> {
    if !(step > 0.0 && total_time > 0.0) {
        return Err(invalid("T and the Trotter step must be positive"));
    }
    let p = (total_time / step).round();
    if p < 1.0 {
        return Err(invalid("Trotter step exceeds T"));
    }
    Ok(p as usize)
}

/// One instance with its classical spectrum cached for repeated runs.
#[derive(Debug, Clone)]
pub struct Simulator {
    inst: IsingInstance,
    energies: Vec<f64>,
    optimal: Vec<usize>,
}

impl Simulator {
    pub fn new(inst: &IsingInstance) -> Result<Self> {
        guard("state-vector simulation", inst.n_spins(), STATE_GUARD)?;
        let energies = diagonal_energies(inst);
        let optimal = optimal_indices(&energies);
        Ok(Self {
            inst: inst.clone(),
            energies,
            optimal,
        })
    }

    pub fn instance(&self) -> &IsingInstance {
        &self.inst
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn optimal_indices(&self) -> &[usize] {
        &self.optimal
    }

    /// Evolves `|+>^n` through `p` Trotter layers of the schedule over time `T`.
    pub fn evolve(
        &self,
        sched: &ScheduleFunction,
        total_time: f64,
        p: usize,
        order: TrotterOrder,
    ) -> Result<StateVector> {
        if p == 0 {
            return Err(invalid("p must be at least 1"));
        }
        if !(total_time >= 0.0 && total_time.is_finite()) {
            return Err(invalid("T must be non-negative"));
        }
        let tau = total_time / p as f64;
        let mut psi = StateVector::plus(self.inst.n_spins())?;
        match order {
            TrotterOrder::First => {
                for k in 1..=p {
                    let s = sched.s(k as f64 / p as f64);
                    psi.apply_problem(&self.energies, tau * s);
                    psi.apply_driver(tau * (1.0 - s));
                }
            }
            TrotterOrder::Second => {
                // Adjacent half-steps of the driver commute and are merged.
                let mut pending = 0.0;
                for k in 1..=p {
                    let s = sched.s((k as f64 - 0.5) / p as f64);
                    let half = 0.5 * tau * (1.0 - s);
                    psi.apply_driver(pending + half);
                    psi.apply_problem(&self.energies, tau * s);
                    pending = half;
                }
                psi.apply_driver(pending);
            }
        }
        Ok(psi)
    }

    pub fn success_probability(&self, state: &StateVector) -> f64 {
        self.optimal.iter().map(|&i| state.amps[i].norm_sqr()).sum()
    }

    /// Probability mass per distinct classical energy level, ascending.
    pub fn eigenstate_distribution(&self, state: &StateVector) -> LevelDistribution {
        let mut order: Vec<usize> = (0..self.energies.len()).collect();
        order.sort_by(|&a, &b| {
            self.energies[a]
                .total_cmp(&self.energies[b])
                .then(a.cmp(&b))
        });
        let mut levels: Vec<LevelMass> = Vec::new();
        for idx in order {
            let e = self.energies[idx];
            let p = state.amps[idx].norm_sqr();
            match levels.last_mut() {
                Some(last) if is_tie(e, last.energy) => {
                    last.degeneracy += 1;
                    last.mass += p;
                }
                _ => levels.push(LevelMass {
                    energy: e,
                    degeneracy: 1,
                    mass: p,
                }),
            }
        }
        let most_likely = levels
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (k, l)| {
                if l.mass > best.1 {
                    (k, l.mass)
                } else {
                    best
                }
            })
            .0;
        LevelDistribution {
            levels,
            most_likely,
        }
    }

    pub fn run(
        &self,
        sched: &ScheduleFunction,
        total_time: f64,
        step: f64,
        order: TrotterOrder,
    ) -> Result<AnnealResult> {
        let p = layers_for(total_time, step)?;
        let state = self.evolve(sched, total_time, p, order)?;
        let distribution = self.eigenstate_distribution(&state);
        Ok(AnnealResult {
            label: self.inst.label.clone(),
            schedule_id: sched.id.clone(),
            total_time,
            p,
            order: order.as_int(),
            success_probability: self.success_probability(&state),
            most_likely_level: distribution.most_likely,
            levels: distribution.levels,
            norm: state.norm(),
        })
    }
}

/// Trotterized evolution of `|+>^n` under the schedule.
pub fn trotter_evolve(
    inst: &IsingInstance,
    sched: &ScheduleFunction,
    total_time: f64,
    p: usize,
    order: TrotterOrder,
) -> Result<StateVector> {
    Simulator::new(inst)?.evolve(sched, total_time, p, order)
}

/// Summed probability of every optimal basis state.
pub fn success_probability(state: &StateVector, inst: &IsingInstance) -> Result<f64> {
    if state.n_spins() != inst.n_spins() {
        return Err(invalid("state and instance sizes differ"));
    }
    Ok(Simulator::new(inst)?.success_probability(state))
}

pub fn eigenstate_distribution(
    state: &StateVector,
    inst: &IsingInstance,
) -> Result<LevelDistribution> {
    if state.n_spins() != inst.n_spins() {
        return Err(invalid("state and instance sizes differ"));
    }
    Ok(Simulator::new(inst)?.eigenstate_distribution(state))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelMass {
    pub energy: f64,
    pub degeneracy: usize,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelDistribution {
    pub levels: Vec<LevelMass>,
    /// Index of the level carrying the most probability.
    pub most_likely: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealResult {
    pub label: Option<String>,
    pub schedule_id: String,
    #[serde(rename = "T")]
    pub total_time: f64,
    pub p: usize,
    pub order: u8,
    pub success_probability: f64,
    pub most_likely_level: usize,
    pub levels: Vec<LevelMass>,
    pub norm: f64,
}

impl AnnealResult {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Dense `H(s)` in the computational basis.
pub fn hamiltonian_matrix(inst: &IsingInstance, energies: &[f64], s: f64) -> DMatrix<f64> {
    let dim = energies.len();
    let n = inst.n_spins();
    let mut h = DMatrix::zeros(dim, dim);
    for (i, &e) in energies.iter().enumerate() {
        h[(i, i)] = s * e;
        for bit in 0..n {
            h[(i ^ (1 << bit), i)] = -(1.0 - s);
        }
    }
    h
}

/// Dense `H_X` or `H_Z` action needed for metric matrix elements.
fn apply_driver_real(n: usize, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for (i, o) in out.iter_mut().enumerate() {
        for bit in 0..n {
            *o -= v[i ^ (1 << bit)];
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct SpectrumRecord {
    pub s: f64,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Column `k` belongs to `eigenvalues[k]`.
    pub eigenvectors: Option<DMatrix<f64>>,
}

impl SpectrumRecord {
    pub fn gap(&self) -> f64 {
        self.eigenvalues[1] - self.eigenvalues[0]
    }
}

pub fn instantaneous_spectrum(
    inst: &IsingInstance,
    s: f64,
    want_vectors: bool,
) -> Result<SpectrumRecord> {
    instantaneous_spectrum_with_guard(inst, s, want_vectors, DIAG_GUARD)
}

pub fn instantaneous_spectrum_with_guard(
    inst: &IsingInstance,
    s: f64,
    want_vectors: bool,
    max_n: usize,
) -> Result<SpectrumRecord> {
    guard("dense diagonalization", inst.n_spins(), max_n)?;
    let energies = diagonal_energies(inst);
    spectrum_from_energies(inst, &energies, s, want_vectors)
}

fn spectrum_from_energies(
    inst: &IsingInstance,
    energies: &[f64],
    s: f64,
    want_vectors: bool,
) -> Result<SpectrumRecord> {
    if !(0.0..=1.0).contains(&s) {
        return Err(invalid(format!("s = {s} outside [0, 1]")));
    }
    let h = hamiltonian_matrix(inst, energies, s);
    if !want_vectors {
        let mut eigenvalues: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
        eigenvalues.sort_by(f64::total_cmp);
        return Ok(SpectrumRecord {
            s,
            eigenvalues,
            eigenvectors: None,
        });
    }
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    Ok(SpectrumRecord {
        s,
        eigenvalues,
        eigenvectors: Some(vectors),
    })
}

/// Ground-state gap sampled on `[0, 1]`, with the minimum refined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapProfile {
    /// Strictly increasing sample positions.
    pub s: Vec<f64>,
    pub gap: Vec<f64>,
    /// Position of the smallest sampled gap.
    pub s_star: f64,
    pub gap_min: f64,
    pub degenerate: bool,
}

impl GapProfile {
    /// Builds a profile from unsorted samples, merging duplicates.
    pub fn from_samples(mut samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.is_empty() {
            return Err(invalid("gap profile needs samples"));
        }
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        samples.dedup_by(|b, a| (b.0 - a.0).abs() < 1e-14);
        let (s, gap): (Vec<f64>, Vec<f64>) = samples.into_iter().unzip();
        let k = gap
            .iter()
            .enumerate()
            .fold(0, |best, (k, &g)| if g < gap[best] { k } else { best });
        Ok(Self {
            s_star: s[k],
            gap_min: gap[k],
            degenerate: gap[k] < DEGENERACY_TOL,
            s,
            gap,
        })
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["s", "gap"])?;
        for (s, g) in self.s.iter().zip(&self.gap) {
            w.write_record([s.to_string(), g.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Gap on the `2^-r` grid, golden-section refinement of the minimum to
/// `2^-10`, plus a symmetric stencil `s* +- k 2^-10`, `k = 1, 2`.
pub fn gap_profile(inst: &IsingInstance, resolution_exponent: u32) -> Result<GapProfile> {
    guard("gap profile", inst.n_spins(), DIAG_GUARD)?;
    if inst.n_spins() < 1 || resolution_exponent == 0 || resolution_exponent > 10 {
        return Err(invalid("resolution exponent must be in 1..=10"));
    }
    let energies = diagonal_energies(inst);
    let gap_at =
        |s: f64| -> Result<f64> { Ok(spectrum_from_energies(inst, &energies, s, false)?.gap()) };
    let m = 1usize << resolution_exponent;
    let mut samples = Vec::new();
    for k in 0..=m {
        let s = k as f64 / m as f64;
        samples.push((s, gap_at(s)?));
    }
    let k = (0..=m).fold(0, |best, k| {
        if samples[k].1 < samples[best].1 {
            k
        } else {
            best
        }
    });
    let (mut a, mut b) = (samples[k.saturating_sub(1)].0, samples[(k + 1).min(m)].0);

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = gap_at(c)?;
    let mut fd = gap_at(d)?;
    samples.push((c, fc));
    samples.push((d, fd));
    while b - a > REFINED_SPACING {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = gap_at(c)?;
            samples.push((c, fc));
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = gap_at(d)?;
            samples.push((d, fd));
        }
    }
    let best =
        samples.iter().copied().fold(
            (0.0, f64::INFINITY),
            |best, x| if x.1 < best.1 { x } else { best },
        );
    for j in [-2.0, -1.0, 1.0, 2.0] {
        let s = best.0 + j * REFINED_SPACING;
        if (0.0..=1.0).contains(&s) {
            samples.push((s, gap_at(s)?));
        }
    }
    GapProfile::from_samples(samples)
}

/// The 2x2 adiabatic metric in `(s^1, s^2)` coordinates, summed over all
/// excited states.
pub fn metric_tensor(inst: &IsingInstance, s: f64) -> Result<[[f64; 2]; 2]> {
    Ok(metric_terms(inst, s)?.total)
}

/// Metric tensor with the first-excited-state term kept separately.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricTerms {
    pub total: [[f64; 2]; 2],
    pub first_excited: [[f64; 2]; 2],
    pub gap: f64,
}

impl MetricTerms {
    /// Pullback onto `s^1 = 1 - s`, `s^2 = s`.
    pub fn pullback(m: &[[f64; 2]; 2]) -> f64 {
        m[0][0] - m[0][1] - m[1][0] + m[1][1]
    }
}

pub fn metric_terms(inst: &IsingInstance, s: f64) -> Result<MetricTerms> {
    guard("metric tensor", inst.n_spins(), METRIC_GUARD)?;
    let n = inst.n_spins();
    let energies = diagonal_energies(inst);
    let spec = spectrum_from_energies(inst, &energies, s, true)?;
    let gap = spec.gap();
    if gap < DEGENERACY_TOL {
        return Err(Error::Degenerate(format!(
            "ground state degenerate at s = {s} (gap {gap:e})"
        )));
    }
    let vecs = spec.eigenvectors.as_ref().expect("vectors requested");
    let ground: Vec<f64> = vecs.column(0).iter().copied().collect();
    let dx = apply_driver_real(n, &ground);
    let dz: Vec<f64> = ground.iter().zip(&energies).map(|(g, e)| g * e).collect();
    let mut total = [[0.0; 2]; 2];
    let mut first_excited = [[0.0; 2]; 2];
    for lambda in 1..vecs.ncols() {
        let col = vecs.column(lambda);
        let mx: f64 = col.iter().zip(&dx).map(|(a, b)| a * b).sum();
        let mz: f64 = col.iter().zip(&dz).map(|(a, b)| a * b).sum();
        let de = spec.eigenvalues[lambda] - spec.eigenvalues[0];
        let w = 1.0 / (de * de);
        let term = [[mx * mx * w, mx * mz * w], [mz * mx * w, mz * mz * w]];
        for r in 0..2 {
            for c in 0..2 {
                total[r][c] += term[r][c];
                if lambda == 1 {
                    first_excited[r][c] = term[r][c];
                }
            }
        }
    }
    Ok(MetricTerms {
        total,
        first_excited,
        gap,
    })
}
