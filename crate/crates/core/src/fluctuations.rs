//! Gaussian (paramagnon) fluctuations around a mean-field trajectory.
//!
//! The quadratic Hamiltonian has the block form `H = [[A, B], [B^H, conj(A)]]`.
//! The equal-time statistical function obeys `i dF/dt = [sigma3 H, F]` from
//! `F(0) = -i sigma3`; its diagonal gives the paramagnon numbers
//! `N_i = (i F_ii - 1) / 2`.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exactsim::C64;
use crate::instance::IsingInstance;
use crate::meanfield::{FrustrationReport, SpinTrajectory};

/// Floor on `1 + sigma* n^z` in the diagonal coefficient and the projection.
pub const DENOMINATOR_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct ParamagnonBlocks {
    pub a: DMatrix<C64>,
    pub b: DMatrix<C64>,
    /// Spins whose denominator was floored.
    pub flagged: Vec<bool>,
}

impl ParamagnonBlocks {
    /// `sigma3 H` as a `2n x 2n` matrix.
    pub fn sigma3_h(&self) -> DMatrix<C64> {
        let n = self.a.nrows();
        let mut k = DMatrix::zeros(2 * n, 2 * n);
        for r in 0..n {
            for c in 0..n {
                k[(r, c)] = self.a[(r, c)];
                k[(r, c + n)] = self.b[(r, c)];
                k[(r + n, c)] = -self.b[(c, r)].conj();
                k[(r + n, c + n)] = -self.a[(r, c)].conj();
            }
        }
        k
    }
}

fn blocks_from_flat(
    inst: &IsingInstance,
    sigma: &[i8],
    flat: &[f64],
    m: &[f64],
    s1: f64,
    s2: f64,
) -> ParamagnonBlocks {
    let n = inst.n_spins();
    let mut a = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, n);
    let mut flagged = vec![false; n];
    let plus: Vec<C64> = (0..n)
        .map(|i| C64::new(sigma[i] as f64 * flat[3 * i], flat[3 * i + 1]))
        .collect();
    for i in 0..n {
        let sg = sigma[i] as f64;
        let mut den = 1.0 + sg * flat[3 * i + 2];
        if den < DENOMINATOR_FLOOR {
            den = DENOMINATOR_FLOOR;
            flagged[i] = true;
        }
        a[(i, i)] = C64::new(2.0 * s1 * flat[3 * i] / den + 2.0 * s2 * sg * m[i], 0.0);
        for j in 0..n {
            let jij = inst.coupling(i, j);
            if i == j || jij == 0.0 {
                continue;
            }
            a[(i, j)] = -plus[i] * plus[j].conj() * (s2 * jij);
            b[(i, j)] = plus[i] * plus[j] * (s2 * jij);
        }
    }
    ParamagnonBlocks { a, b, flagged }
}

/// Blocks at time `t` from the trajectory's dense output.
pub fn build_blocks(
    inst: &IsingInstance,
    traj: &SpinTrajectory,
    t: f64,
) -> Result<ParamagnonBlocks> {
    if inst.n_spins() != traj.n_spins() {
        return Err(invalid("instance and trajectory sizes differ"));
    }
    if !(0.0..=traj.total_time).contains(&t) {
        return Err(invalid(format!("t = {t} outside [0, {}]", traj.total_time)));
    }
    let mut flat = vec![0.0; 3 * inst.n_spins()];
    traj.interpolate_into(t, &mut flat);
    let m: Vec<f64> = (0..inst.n_spins())
        .map(|i| traj.local_field_flat(&flat, i))
        .collect();
    let s2 = traj.schedule().s2(t, traj.total_time);
    Ok(blocks_from_flat(
        inst,
        &traj.sigma_star,
        &flat,
        &m,
        1.0 - s2,
        s2,
    ))
}

#[derive(Debug, Clone)]
pub struct FluctuationRecord {
    pub total_time: f64,
    pub times: Vec<f64>,
    /// `F(t, t)` at each stored time.
    pub f: Vec<DMatrix<C64>>,
    /// `paramagnon[k][i]`.
    pub paramagnon: Vec<Vec<f64>>,
    pub chi: Vec<Vec<f64>>,
    pub z_norm2: Vec<Vec<f64>>,
    /// Values involving a floored denominator.
    pub flagged: Vec<Vec<bool>>,
    /// Largest distance of an eigenvalue of `iF` from `+-1`.
    pub spectrum_deviation: f64,
    /// Largest entry of `M - M^H` with `M = i F sigma3`.
    pub hermiticity_deviation: f64,
    /// Smallest `Re(i F_ii)` over the upper block.
    pub min_diagonal: f64,
    /// Set when the spectrum drifts by more than `100 tol`.
    pub spectrum_warning: bool,
}

impl FluctuationRecord {
    pub fn n_spins(&self) -> usize {
        self.paramagnon.first().map_or(0, Vec::len)
    }

    pub fn s_grid(&self) -> Vec<f64> {
        self.times.iter().map(|t| t / self.total_time).collect()
    }

    /// CSV with columns `s,spin,N,chi`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["s", "spin", "N", "chi"])?;
        for (k, s) in self.s_grid().iter().enumerate() {
            for i in 0..self.n_spins() {
                w.write_record([
                    s.to_string(),
                    i.to_string(),
                    self.paramagnon[k][i].to_string(),
                    self.chi[k][i].to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Eigenvalue distance from `+-1` of `iF`, using `iF = M sigma3` with
/// `M = i F sigma3 = U U^H` positive definite: `iF` is similar to the
/// Hermitian `L^H sigma3 L` for the Cholesky factor `M = L L^H`.
fn spectrum_checks(f: &DMatrix<C64>) -> (f64, f64) {
    let dim = f.nrows();
    let n = dim / 2;
    let i = C64::new(0.0, 1.0);
    let mut m = f * i;
    for c in n..dim {
        for r in 0..dim {
            m[(r, c)] = -m[(r, c)];
        }
    }
    let herm = (&m - m.adjoint())
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    let sym = (&m + m.adjoint()) * C64::new(0.5, 0.0);
    let Some(chol) = sym.cholesky() else {
        return (f64::INFINITY, herm);
    };
    let l = chol.l();
    let mut s3l = l.clone();
    for r in n..dim {
        for c in 0..dim {
            s3l[(r, c)] = -s3l[(r, c)];
        }
    }
    let w = l.adjoint() * s3l;
    let w = (&w + w.adjoint()) * C64::new(0.5, 0.0);
    let mut ev: Vec<f64> = w.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    let dev = ev
        .iter()
        .enumerate()
        .map(|(k, &e)| {
            if k < n {
                (e + 1.0).abs()
            } else {
                (e - 1.0).abs()
            }
        })
        .fold(0.0, f64::max);
    (dev, herm)
}

/// `X sigma3`: flips the sign of the lower half of the columns.
fn times_sigma3(mut x: DMatrix<C64>, n: usize) -> DMatrix<C64> {
    for c in n..2 * n {
        x.column_mut(c).neg_mut();
    }
    x
}

/// `E F E^-1` with `E^-1 = sigma3 E^H sigma3`, so that `i F sigma3` is
/// transformed by congruence.
fn conjugate(e: &DMatrix<C64>, f: &DMatrix<C64>, n: usize) -> DMatrix<C64> {
    times_sigma3(e * times_sigma3(f.clone(), n) * e.adjoint(), n)
}

/// Replaces `M = i F sigma3` by its Hermitian part.
fn hermitize(f: DMatrix<C64>, n: usize) -> DMatrix<C64> {
    let m = times_sigma3(f, n) * C64::new(0.0, 1.0);
    let m = (&m + m.adjoint()) * C64::new(0.5, 0.0);
    times_sigma3(m, n) * C64::new(0.0, -1.0)
}

/// Fourth-order Magnus propagator over `[t, t + h]` for `dU/dt = A(t) U`.
fn magnus_step(generator: &mut impl FnMut(f64) -> DMatrix<C64>, t: f64, h: f64) -> DMatrix<C64> {
    let c = 3f64.sqrt() / 6.0;
    let a1 = generator(t + (0.5 - c) * h);
    let a2 = generator(t + (0.5 + c) * h);
    let comm = &a2 * &a1 - &a1 * &a2;
    let omega =
        (a1 + a2) * C64::new(h / 2.0, 0.0) + comm * C64::new(3f64.sqrt() * h * h / 12.0, 0.0);
    omega.exp()
}

const MAX_MAGNUS_STEPS: usize = 2_000_000;

/// Adaptive isospectral integration of `dF/dt = [A, F]`, where each step is
/// a similarity transform by a fourth-order Magnus exponential. The local
/// error is estimated by step doubling.
fn magnus_on_grid(
    mut generator: impl FnMut(f64) -> DMatrix<C64>,
    grid: &[f64],
    f0: DMatrix<C64>,
    n: usize,
    tol: f64,
) -> Result<Vec<DMatrix<C64>>> {
    let span = grid.last().copied().unwrap_or(0.0) - grid.first().copied().unwrap_or(0.0);
    let mut t = grid.first().copied().unwrap_or(0.0);
    let mut f = f0;
    let mut out = Vec::with_capacity(grid.len());
    out.push(f.clone());
    let norm0 = generator(t)
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
        .max(1e-3);
    let mut h = (0.1 / norm0).min(span.max(f64::MIN_POSITIVE));
    let mut steps = 0usize;
    for &target in &grid[1..] {
        while target - t > 1e-14 * span.max(1.0) {
            steps += 1;
            if steps > MAX_MAGNUS_STEPS {
                return Err(Error::Integration {
                    t,
                    message: "too many steps".into(),
                });
            }
            let clamped = h >= target - t;
            let step = if clamped { target - t } else { h };
            let big = conjugate(&magnus_step(&mut generator, t, step), &f, n);
            let half = conjugate(&magnus_step(&mut generator, t, step / 2.0), &f, n);
            let small = conjugate(
                &magnus_step(&mut generator, t + step / 2.0, step / 2.0),
                &half,
                n,
            );
            let mut err = 0.0f64;
            for ((a, b), c) in small.iter().zip(big.iter()).zip(f.iter()) {
                let scale = tol * (1.0 + a.norm().max(c.norm()));
                err = err.max((a - b).norm() / (15.0 * scale));
            }
            if !err.is_finite() {
                return Err(Error::Integration {
                    t,
                    message: "non-finite statistical function".into(),
                });
            }
            let factor = (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 5.0);
            if err <= 1.0 {
                t = if clamped { target } else { t + step };
                f = hermitize(small, n);
                h = if clamped {
                    h.max(step * factor)
                } else {
                    step * factor
                };
            } else {
                h = step * factor;
                if h < 1e-14 * span.max(1.0) {
                    return Err(Error::Integration {
                        t,
                        message: "step size underflow".into(),
                    });
                }
            }
        }
        out.push(f.clone());
    }
    Ok(out)
}

/// Evolves `F(t, t)` along the trajectory and stores it on the trajectory grid.
pub fn evolve_statistical_function(
    inst: &IsingInstance,
    traj: &SpinTrajectory,
    tol: f64,
) -> Result<FluctuationRecord> {
    if inst.n_spins() != traj.n_spins() {
        return Err(invalid("instance and trajectory sizes differ"));
    }
    if !(tol > 0.0) {
        return Err(invalid("tolerance must be positive"));
    }
    let n = inst.n_spins();
    let dim = 2 * n;
    let mut f0 = DMatrix::zeros(dim, dim);
    for k in 0..dim {
        f0[(k, k)] = C64::new(0.0, if k < n { -1.0 } else { 1.0 });
    }
    let mut flat = vec![0.0; 3 * n];
    let mut m = vec![0.0; n];
    let generator = |t: f64| {
        traj.interpolate_into(t, &mut flat);
        for (i, mi) in m.iter_mut().enumerate() {
            *mi = traj.local_field_flat(&flat, i);
        }
        let s2 = traj.schedule().s2(t, traj.total_time);
        blocks_from_flat(inst, &traj.sigma_star, &flat, &m, 1.0 - s2, s2).sigma3_h()
            * C64::new(0.0, -1.0)
    };
    let f = magnus_on_grid(generator, &traj.times, f0, n, tol)?;

    let i = C64::new(0.0, 1.0);
    let paramagnon: Vec<Vec<f64>> = f
        .iter()
        .map(|fk| (0..n).map(|d| ((i * fk[(d, d)]).re - 1.0) / 2.0).collect())
        .collect();
    let min_diagonal = f
        .iter()
        .flat_map(|fk| (0..n).map(move |d| (i * fk[(d, d)]).re))
        .fold(f64::INFINITY, f64::min);
    let (mut spectrum_deviation, mut hermiticity_deviation) = (0.0f64, 0.0f64);
    for fk in &f {
        let (dev, herm) = spectrum_checks(fk);
        spectrum_deviation = spectrum_deviation.max(dev);
        hermiticity_deviation = hermiticity_deviation.max(herm);
    }
    let mut record = FluctuationRecord {
        total_time: traj.total_time,
        times: traj.times.clone(),
        f,
        paramagnon,
        chi: Vec::new(),
        z_norm2: Vec::new(),
        flagged: Vec::new(),
        spectrum_deviation,
        hermiticity_deviation,
        min_diagonal,
        spectrum_warning: spectrum_deviation > 100.0 * tol,
    };
    let sus = localization_susceptibility(&record, traj)?;
    record.chi = sus.chi;
    record.z_norm2 = sus.z_norm2;
    record.flagged = sus.flagged;
    Ok(record)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Susceptibility {
    pub chi: Vec<Vec<f64>>,
    pub z_norm2: Vec<Vec<f64>>,
    pub flagged: Vec<Vec<bool>>,
}

/// `chi_i = q_i (1 + |z_i|^2)^2 N_i` with the projection
/// `z_i = (n^x + i sigma* n^y) / (1 + sigma* n^z)`.
pub fn localization_susceptibility(
    record: &FluctuationRecord,
    traj: &SpinTrajectory,
) -> Result<Susceptibility> {
    if record.times.len() != traj.times.len()
        || record.times.iter().zip(&traj.times).any(|(a, b)| a != b)
    {
        return Err(invalid("record and trajectory grids differ"));
    }
    let mut out = Susceptibility {
        chi: Vec::with_capacity(traj.times.len()),
        z_norm2: Vec::with_capacity(traj.times.len()),
        flagged: Vec::with_capacity(traj.times.len()),
    };
    for (row, np) in traj.spins.iter().zip(&record.paramagnon) {
        let mut chi = Vec::with_capacity(row.len());
        let mut z2 = Vec::with_capacity(row.len());
        let mut flags = Vec::with_capacity(row.len());
        for (i, v) in row.iter().enumerate() {
            let sg = traj.sigma_star[i] as f64;
            let mut den = 1.0 + sg * v[2];
            let flagged = den < DENOMINATOR_FLOOR;
            if flagged {
                den = DENOMINATOR_FLOOR;
            }
            let zn = (v[0] * v[0] + v[1] * v[1]) / (den * den);
            let q = v[2] * v[2];
            let weight = (1.0 + zn) * (1.0 + zn);
            chi.push(if q == 0.0 || np[i] == 0.0 {
                0.0
            } else {
                q * weight * np[i]
            });
            z2.push(zn);
            flags.push(flagged);
        }
        out.chi.push(chi);
        out.z_norm2.push(z2);
        out.flagged.push(flags);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakOptions {
    pub min_s: f64,
    pub max_s: f64,
    /// Minimum prominence as a fraction of the global interior maximum.
    pub prominence_fraction: f64,
    /// Candidates closer than this to a better-ranked one are dropped.
    pub min_separation: f64,
}

impl Default for PeakOptions {
    fn default() -> Self {
        Self {
            min_s: 0.05,
            max_s: 0.97,
            prominence_fraction: 0.1,
            min_separation: 0.02,
        }
    }
}

pub const DEFAULT_MAX_CANDIDATES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BottleneckCandidate {
    pub position: f64,
    pub peak_chi: f64,
    pub spin: usize,
    pub frustration: f64,
    pub peak_paramagnon: f64,
    pub prominence: f64,
    pub rank: usize,
    pub low_confidence: bool,
}

/// Topographic prominence of `y[k]` within `y`.
fn prominence(y: &[f64], k: usize) -> f64 {
    let peak = y[k];
    let mut left_min = peak;
    for &v in y[..k].iter().rev() {
        if v > peak {
            break;
        }
        left_min = left_min.min(v);
    }
    let mut right_min = peak;
    for &v in &y[k + 1..] {
        if v > peak {
            break;
        }
        right_min = right_min.min(v);
    }
    peak - left_min.max(right_min)
}

/// Interior maxima of `chi_i(s)` ranked by the frustration of their spin,
/// then by the paramagnon number at the peak.
pub fn detect_bottlenecks(
    record: &FluctuationRecord,
    frustration: &FrustrationReport,
    max_candidates: usize,
    opts: &PeakOptions,
) -> Result<Vec<BottleneckCandidate>> {
    let n = record.n_spins();
    if record.times.len() < 3 || n == 0 {
        return Err(invalid("fluctuation record is empty"));
    }
    if frustration.scores.len() != n {
        return Err(invalid("frustration report and record sizes differ"));
    }
    if max_candidates == 0 {
        return Err(invalid("max_candidates must be at least 1"));
    }
    let s = record.s_grid();
    let window: Vec<usize> = (0..s.len())
        .filter(|&k| s[k] >= opts.min_s && s[k] <= opts.max_s)
        .collect();
    if window.len() < 3 {
        return Err(invalid(
            "exclusion margins leave fewer than three interior samples",
        ));
    }
    let (lo, hi) = (window[0], window[window.len() - 1]);
    let value = |k: usize, i: usize| {
        let c = record.chi[k][i];
        if record.flagged[k][i] || !c.is_finite() {
            0.0
        } else {
            c
        }
    };
    let global = window
        .iter()
        .flat_map(|&k| (0..n).map(move |i| (k, i)))
        .map(|(k, i)| value(k, i))
        .fold(0.0, f64::max);

    let mut found = Vec::new();
    if global > 0.0 {
        for i in 0..n {
            let series: Vec<f64> = (lo..=hi).map(|k| value(k, i)).collect();
            for w in 1..series.len() - 1 {
                let k = lo + w;
                if record.flagged[k][i]
                    || !(series[w] > series[w - 1] && series[w] >= series[w + 1])
                {
                    continue;
                }
                let prom = prominence(&series, w);
                if prom >= opts.prominence_fraction * global {
                    found.push(BottleneckCandidate {
                        position: s[k],
                        peak_chi: series[w],
                        spin: i,
                        frustration: frustration.scores[i],
                        peak_paramagnon: record.paramagnon[k][i],
                        prominence: prom,
                        rank: 0,
                        low_confidence: false,
                    });
                }
            }
        }
    }
    found.sort_by(|a, b| {
        b.frustration
            .total_cmp(&a.frustration)
            .then(b.peak_paramagnon.total_cmp(&a.peak_paramagnon))
            .then(a.position.total_cmp(&b.position))
            .then(a.spin.cmp(&b.spin))
    });
    let mut out: Vec<BottleneckCandidate> = Vec::new();
    for c in found {
        if out.len() == max_candidates {
            break;
        }
        if out
            .iter()
            .all(|o| (o.position - c.position).abs() >= opts.min_separation)
        {
            out.push(BottleneckCandidate {
                rank: out.len(),
                ..c
            });
        }
    }
    if !out.is_empty() {
        return Ok(out);
    }

    let total = |k: usize| (0..n).map(|i| value(k, i)).sum::<f64>();
    let k = (lo..=hi).fold(lo, |best, k| if total(k) > total(best) { k } else { best });
    let spin = (0..n).fold(0, |best, i| {
        if value(k, i) > value(k, best) {
            i
        } else {
            best
        }
    });
    Ok(vec![BottleneckCandidate {
        position: s[k],
        peak_chi: total(k),
        spin,
        frustration: frustration.scores[spin],
        peak_paramagnon: record.paramagnon[k][spin],
        prominence: 0.0,
        rank: 0,
        low_confidence: true,
    }])
}

pub fn write_candidates_json(
    candidates: &[BottleneckCandidate],
    path: impl AsRef<Path>,
) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(candidates)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::generate_sk;
    use crate::meanfield::{frustration_report, integrate_meanfield};
    use crate::ode;
    use crate::schedule::linear_schedule;

    fn synthetic(chi: Vec<Vec<f64>>, paramagnon: Vec<Vec<f64>>) -> FluctuationRecord {
        let len = chi.len();
        let n = chi[0].len();
        FluctuationRecord {
            total_time: 1.0,
            times: ode::uniform_grid(0.0, 1.0, len - 1),
            f: Vec::new(),
            paramagnon,
            z_norm2: vec![vec![0.0; n]; len],
            flagged: vec![vec![false; n]; len],
            chi,
            spectrum_deviation: 0.0,
            hermiticity_deviation: 0.0,
            min_diagonal: 1.0,
            spectrum_warning: false,
        }
    }

    fn bump(s: f64, centre: f64, height: f64) -> f64 {
        height * (-((s - centre) / 0.02).powi(2)).exp()
    }

    #[test]
    fn initial_blocks() {
        let inst = generate_sk(4, 9).unwrap();
        let traj = integrate_meanfield(&inst, &linear_schedule(), 16.0, 1e-8).unwrap();
        let b = build_blocks(&inst, &traj, 0.0).unwrap();
        for i in 0..4 {
            assert!((b.a[(i, i)] - C64::new(2.0, 0.0)).norm() < 1e-14);
            for j in 0..4 {
                assert_eq!(b.b[(i, i)], C64::new(0.0, 0.0));
                if i != j {
                    assert!(b.a[(i, j)].norm() < 1e-14);
                }
            }
        }
        let mid = build_blocks(&inst, &traj, 9.0).unwrap();
        assert!((&mid.a - mid.a.adjoint()).iter().all(|z| z.norm() < 1e-12));
        assert!((&mid.b - mid.b.transpose())
            .iter()
            .all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn free_spins_have_no_paramagnons() {
        let inst = IsingInstance::new(vec![0.0; 2], vec![0.0; 4], 0.0).unwrap();
        let traj = integrate_meanfield(&inst, &linear_schedule(), 8.0, 1e-8).unwrap();
        let rec = evolve_statistical_function(&inst, &traj, 1e-8).unwrap();
        assert!(rec.paramagnon.iter().flatten().all(|&x| x.abs() < 1e-12));
        assert!(rec.chi.iter().flatten().all(|&x| x == 0.0));
        let cands =
            detect_bottlenecks(&rec, &frustration_report(&traj), 3, &PeakOptions::default())
                .unwrap();
        assert_eq!(cands.len(), 1);
        assert!(cands[0].low_confidence);
    }

    #[test]
    fn spectrum_is_conserved() {
        let inst = generate_sk(5, 21).unwrap();
        let traj = integrate_meanfield(&inst, &linear_schedule(), 32.0, 1e-8).unwrap();
        let rec = evolve_statistical_function(&inst, &traj, 1e-8).unwrap();
        assert!(rec.spectrum_deviation < 1e-6, "{}", rec.spectrum_deviation);
        assert!(
            rec.hermiticity_deviation < 1e-8,
            "{}",
            rec.hermiticity_deviation
        );
        assert!(rec.min_diagonal > 1.0 - 1e-6);
        assert!(rec.paramagnon[0].iter().all(|&x| x == 0.0));
        assert!(rec.chi[0].iter().all(|&x| x == 0.0));
        assert!(!rec.spectrum_warning);
    }

    #[test]
    fn single_peak_is_found() {
        let s = ode::uniform_grid(0.0, 1.0, 512);
        let chi = s.iter().map(|&x| vec![bump(x, 0.62, 3.0), 0.0]).collect();
        let np = s.iter().map(|&x| vec![bump(x, 0.62, 1.0), 0.0]).collect();
        let rec = synthetic(chi, np);
        let fr = FrustrationReport::from_final_magnetizations(&[0.1, 0.9]);
        let c = detect_bottlenecks(&rec, &fr, 3, &PeakOptions::default()).unwrap();
        assert_eq!(c.len(), 1);
        assert!((c[0].position - 0.62).abs() < 1.0 / 512.0);
        assert_eq!(c[0].spin, 0);
        assert!(!c[0].low_confidence);
    }

    #[test]
    fn frustrated_spin_outranks_taller_peak() {
        let s = ode::uniform_grid(0.0, 1.0, 512);
        let chi = s
            .iter()
            .map(|&x| vec![bump(x, 0.3, 5.0), bump(x, 0.7, 2.0)])
            .collect();
        let np = s
            .iter()
            .map(|&x| vec![bump(x, 0.3, 1.0), bump(x, 0.7, 1.0)])
            .collect();
        let rec = synthetic(chi, np);
        let fr = FrustrationReport::from_final_magnetizations(&[0.95, 0.05]);
        let c = detect_bottlenecks(&rec, &fr, 3, &PeakOptions::default()).unwrap();
        assert_eq!(c.len(), 2);
        assert!((c[0].position - 0.7).abs() < 1.0 / 512.0);
        assert_eq!((c[0].rank, c[1].rank), (0, 1));
    }

    #[test]
    fn margins_and_prominence_filter_peaks() {
        let s = ode::uniform_grid(0.0, 1.0, 512);
        let chi = s
            .iter()
            .map(|&x| vec![bump(x, 0.02, 10.0) + bump(x, 0.5, 1.0) + bump(x, 0.8, 0.05)])
            .collect();
        let np = s.iter().map(|_| vec![1.0]).collect();
        let rec = synthetic(chi, np);
        let fr = FrustrationReport::from_final_magnetizations(&[0.0]);
        let c = detect_bottlenecks(&rec, &fr, 3, &PeakOptions::default()).unwrap();
        assert_eq!(c.len(), 1);
        assert!((c[0].position - 0.5).abs() < 1.0 / 512.0);
    }

    #[test]
    fn prominence_matches_topography() {
        let y = [0.0, 3.0, 1.0, 2.0, 0.5, 4.0, 0.0];
        assert_eq!(prominence(&y, 1), 2.5);
        assert_eq!(prominence(&y, 3), 1.0);
        assert_eq!(prominence(&y, 5), 4.0);
    }
}
