//! Classical spin (mean-field) dynamics of the annealing Hamiltonian.
//!
//! Each spin is a unit Bloch vector `(n^x, n^y, n^z)` starting at
//! `(1, 0, 0)` and precessing in the local field
//! `m_i = h_i + sum_j J_ij n^z_j`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::instance::IsingInstance;
use crate::ode::{self, DenseSolution, OdeOptions};
use crate::schedule::ScheduleFunction;

pub const DEFAULT_TOL: f64 = 1e-8;
/// Stored output points on `[0, T]`.
pub const DEFAULT_GRID_POINTS: usize = 513;
/// Final magnetizations smaller than this leave the sign unresolved.
pub const UNRESOLVED_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanFieldOptions {
    pub tol: f64,
    pub grid_points: usize,
}

impl Default for MeanFieldOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            grid_points: DEFAULT_GRID_POINTS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpinTrajectory {
    pub total_time: f64,
    pub tol: f64,
    pub times: Vec<f64>,
    /// `spins[k][i]` is the Bloch vector of spin `i` at `times[k]`.
    pub spins: Vec<Vec<[f64; 3]>>,
    pub local_fields: Vec<Vec<f64>>,
    /// `sign(n^z_i(T))`, `+1` where unresolved.
    pub sigma_star: Vec<i8>,
    pub unresolved: Vec<bool>,
    schedule: ScheduleFunction,
    fields: Vec<f64>,
    couplings: Vec<Vec<f64>>,
    dense: DenseSolution,
}

fn local_field(fields: &[f64], couplings: &[Vec<f64>], nz: impl Fn(usize) -> f64, i: usize) -> f64 {
    fields[i]
        + couplings[i]
            .iter()
            .enumerate()
            .map(|(j, &c)| c * nz(j))
            .sum::<f64>()
}

impl SpinTrajectory {
    pub fn n_spins(&self) -> usize {
        self.sigma_star.len()
    }

    pub fn schedule(&self) -> &ScheduleFunction {
        &self.schedule
    }

    /// Normalised times `s = t / T` of the stored grid.
    pub fn s_grid(&self) -> Vec<f64> {
        self.times.iter().map(|t| t / self.total_time).collect()
    }

    pub fn final_spins(&self) -> &[[f64; 3]] {
        &self.spins[self.spins.len() - 1]
    }

    /// Bloch vectors at any `t` in `[0, T]` from the dense output.
    pub fn spins_at(&self, t: f64) -> Result<Vec<[f64; 3]>> {
        if !(0.0..=self.total_time).contains(&t) {
            return Err(invalid(format!("t = {t} outside [0, {}]", self.total_time)));
        }
        let mut flat = vec![0.0; self.dense.dim()];
        self.interpolate_into(t, &mut flat);
        Ok(flat.chunks(3).map(|c| [c[0], c[1], c[2]]).collect())
    }

    /// Raw interpolation into a flat `[x0, y0, z0, x1, ...]` buffer.
    pub fn interpolate_into(&self, t: f64, out: &mut [f64]) {
        self.dense.eval(t, out);
    }

    /// Local field `m_i` from a flat spin buffer.
    pub fn local_field_flat(&self, flat: &[f64], i: usize) -> f64 {
        local_field(&self.fields, &self.couplings, |j| flat[3 * j + 2], i)
    }

    /// Largest `| |n_i| - 1 |` over spins and stored times.
    pub fn norm_drift(&self) -> f64 {
        self.spins
            .iter()
            .flatten()
            .map(|n| ((n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// CSV with columns `t,spin,nx,ny,nz`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "spin", "nx", "ny", "nz"])?;
        for (t, row) in self.times.iter().zip(&self.spins) {
            for (i, n) in row.iter().enumerate() {
                w.write_record([
                    t.to_string(),
                    i.to_string(),
                    n[0].to_string(),
                    n[1].to_string(),
                    n[2].to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub fn integrate_meanfield(
    inst: &IsingInstance,
    sched: &ScheduleFunction,
    total_time: f64,
    tol: f64,
) -> Result<SpinTrajectory> {
    integrate_meanfield_with(
        inst,
        sched,
        total_time,
        MeanFieldOptions {
            tol,
            ..MeanFieldOptions::default()
        },
    )
}

pub fn integrate_meanfield_with(
    inst: &IsingInstance,
    sched: &ScheduleFunction,
    total_time: f64,
    opts: MeanFieldOptions,
) -> Result<SpinTrajectory> {
    if !(total_time > 0.0 && total_time.is_finite()) {
        return Err(invalid("T must be positive"));
    }
    if !(opts.tol > 0.0) {
        return Err(invalid("tolerance must be positive"));
    }
    if opts.grid_points < 2 {
        return Err(invalid("output grid needs at least two points"));
    }
    let n = inst.n_spins();
    let fields = inst.fields().to_vec();
    let couplings: Vec<Vec<f64>> = (0..n).map(|i| inst.coupling_row(i).to_vec()).collect();
    let times = ode::uniform_grid(0.0, total_time, opts.grid_points - 1);
    let mut y0 = vec![0.0; 3 * n];
    for i in 0..n {
        y0[3 * i] = 1.0;
    }
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
        let s2 = sched.s2(t, total_time);
        let s1 = 1.0 - s2;
        for i in 0..n {
            let m = local_field(&fields, &couplings, |j| y[3 * j + 2], i);
            let (nx, ny, nz) = (y[3 * i], y[3 * i + 1], y[3 * i + 2]);
            dy[3 * i] = 2.0 * s2 * m * ny;
            dy[3 * i + 1] = -2.0 * s2 * m * nx + 2.0 * s1 * nz;
            dy[3 * i + 2] = -2.0 * s1 * ny;
        }
    };
    let (dense, at_grid) = ode::solve_dense(
        rhs,
        0.0,
        total_time,
        &y0,
        &times,
        OdeOptions::with_tol(opts.tol),
    )?;
    let spins: Vec<Vec<[f64; 3]>> = at_grid
        .iter()
        .map(|y| y.chunks(3).map(|c| [c[0], c[1], c[2]]).collect())
        .collect();
    let local_fields = at_grid
        .iter()
        .map(|y| {
            (0..n)
                .map(|i| local_field(&fields, &couplings, |j| y[3 * j + 2], i))
                .collect()
        })
        .collect();
    let last = &spins[spins.len() - 1];
    let unresolved: Vec<bool> = last.iter().map(|v| v[2].abs() < UNRESOLVED_TOL).collect();
    let sigma_star = last
        .iter()
        .zip(&unresolved)
        .map(|(v, &u)| if u || v[2] > 0.0 { 1 } else { -1 })
        .collect();
    Ok(SpinTrajectory {
        total_time,
        tol: opts.tol,
        times,
        spins,
        local_fields,
        sigma_star,
        unresolved,
        schedule: sched.clone(),
        fields,
        couplings,
        dense,
    })
}

/// Mean-field energy at time `t`; the instance offset is not included.
pub fn mf_energy(inst: &IsingInstance, traj: &SpinTrajectory, t: f64) -> Result<f64> {
    if inst.n_spins() != traj.n_spins() {
        return Err(invalid("instance and trajectory sizes differ"));
    }
    let spins = traj.spins_at(t)?;
    let s2 = traj.schedule.s2(t, traj.total_time);
    let s1 = 1.0 - s2;
    let n = spins.len();
    let mut e = 0.0;
    for i in 0..n {
        let mut field = inst.field(i);
        for j in i + 1..n {
            field += inst.coupling(i, j) * spins[j][2];
        }
        e -= s1 * spins[i][0] + s2 * field * spins[i][2];
    }
    Ok(e)
}

/// Local Edwards-Anderson parameters `q_i = (n^z_i)^2` on the stored grid.
pub fn ea_parameter(traj: &SpinTrajectory) -> Vec<Vec<f64>> {
    traj.spins
        .iter()
        .map(|row| row.iter().map(|n| n[2] * n[2]).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrustrationReport {
    /// `1 - |n^z_i(T)|`, clamped to `[0, 1]`.
    pub scores: Vec<f64>,
    /// Spin indices by descending score, ties by index.
    pub ranking: Vec<usize>,
}

impl FrustrationReport {
    pub fn from_final_magnetizations(nz: &[f64]) -> Self {
        let scores: Vec<f64> = nz.iter().map(|z| (1.0 - z.abs()).clamp(0.0, 1.0)).collect();
        let mut ranking: Vec<usize> = (0..scores.len()).collect();
        ranking.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        Self { scores, ranking }
    }

    /// Smallest `|n^z_i(T)|`, the mining criterion.
    pub fn min_magnetization(&self) -> f64 {
        self.scores
            .iter()
            .map(|f| 1.0 - f)
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn frustration_report(traj: &SpinTrajectory) -> FrustrationReport {
    let nz: Vec<f64> = traj.final_spins().iter().map(|n| n[2]).collect();
    FrustrationReport::from_final_magnetizations(&nz)
}
