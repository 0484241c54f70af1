//! Dormand-Prince 5(4) with the 4th-order continuous extension.
//!
//! The stepper is shared by the mean-field, fluctuation, and geodesic
//! solvers. Three drivers sit on top of it:
//!
//! * [`solve_dense`] keeps every accepted step's interpolation coefficients,
//!   so the solution can be evaluated anywhere on the interval;
//! * [`solve_on_grid`] lands steps exactly on a prescribed output grid and
//!   hands each grid state to a callback (nothing else is stored);
//! * [`solve_final`] returns only the end state.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on the step size; `0` means the full interval.
    pub max_step: f64,
    pub max_steps: usize,
}

impl OdeOptions {
    /// Equal relative and absolute tolerance.
    pub fn with_tol(tol: f64) -> Self {
        Self {
            rtol: tol,
            atol: tol,
            ..Self::default()
        }
    }
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-8,
            max_step: 0.0,
            max_steps: 5_000_000,
        }
    }
}

/// Interpolation data of one accepted step.
#[derive(Debug, Clone, Copy)]
pub struct StepView<'a> {
    pub t0: f64,
    pub h: f64,
    /// Five coefficient blocks of length `dim`, concatenated.
    pub coeffs: &'a [f64],
}

impl StepView<'_> {
    pub fn eval(&self, t: f64, out: &mut [f64]) {
        interpolate(self.coeffs, self.t0, self.h, t, out);
    }
}

fn interpolate(coeffs: &[f64], t0: f64, h: f64, t: f64, out: &mut [f64]) {
    let dim = out.len();
    let theta = (t - t0) / h;
    let theta1 = 1.0 - theta;
    let (r1, rest) = coeffs.split_at(dim);
    let (r2, rest) = rest.split_at(dim);
    let (r3, rest) = rest.split_at(dim);
    let (r4, r5) = rest.split_at(dim);
    for i in 0..dim {
        out[i] = r1[i] + theta * (r2[i] + theta1 * (r3[i] + theta * (r4[i] + theta1 * r5[i])));
    }
}

struct Stepper<F> {
    rhs: F,
    dim: usize,
    opts: OdeOptions,
    k: [Vec<f64>; 7],
    ytmp: Vec<f64>,
    ynew: Vec<f64>,
    coeffs: Vec<f64>,
    nfev: usize,
}

impl<F: FnMut(f64, &[f64], &mut [f64])> Stepper<F> {
    fn new(rhs: F, dim: usize, opts: OdeOptions) -> Self {
        Self {
            rhs,
            dim,
            opts,
            k: std::array::from_fn(|_| vec![0.0; dim]),
            ytmp: vec![0.0; dim],
            ynew: vec![0.0; dim],
            coeffs: vec![0.0; 5 * dim],
            nfev: 0,
        }
    }

    fn scale(&self, a: f64, b: f64) -> f64 {
        self.opts.atol + self.opts.rtol * a.abs().max(b.abs())
    }

    /// Hairer's starting step heuristic; expects `k[0] = f(t, y)`.
    fn initial_step(&mut self, t: f64, y: &[f64], span: f64) -> f64 {
        let dim = self.dim as f64;
        let mut d0 = 0.0;
        let mut d1 = 0.0;
        for i in 0..self.dim {
            let sk = self.scale(y[i], y[i]);
            d0 += (y[i] / sk).powi(2);
            d1 += (self.k[0][i] / sk).powi(2);
        }
        let (d0, d1) = ((d0 / dim).sqrt(), (d1 / dim).sqrt());
        let mut h = if d0 < 1e-10 || d1 < 1e-10 {
            1e-6
        } else {
            0.01 * d0 / d1
        };
        h = h.min(span);
        for i in 0..self.dim {
            self.ytmp[i] = y[i] + h * self.k[0][i];
        }
        let (k0, k1) = {
            let (a, b) = self.k.split_at_mut(1);
            (&a[0], &mut b[0])
        };
        (self.rhs)(t + h, &self.ytmp, k1);
        self.nfev += 1;
        let (atol, rtol) = (self.opts.atol, self.opts.rtol);
        let mut d2 = 0.0;
        for i in 0..self.dim {
            let sk = atol + rtol * y[i].abs();
            d2 += ((k1[i] - k0[i]) / sk).powi(2);
        }
        let d2 = (d2 / dim).sqrt() / h;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h).min(h1).min(span)
    }

    /// One trial step from `(t, y)` with `k[0] = f(t, y)`. Leaves the
    /// proposal in `ynew`, `f(t+h, ynew)` in `k[6]`, and returns the
    /// scaled error norm.
    fn attempt(&mut self, t: f64, y: &[f64], h: f64) -> f64 {
        let n = self.dim;
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
        let ytmp = &mut self.ytmp;
        let rhs = &mut self.rhs;
        for i in 0..n {
            ytmp[i] = y[i] + h * A21 * k1[i];
        }
        rhs(t + C2 * h, ytmp, k2);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        rhs(t + C3 * h, ytmp, k3);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        rhs(t + C4 * h, ytmp, k4);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        rhs(t + C5 * h, ytmp, k5);
        for i in 0..n {
            ytmp[i] =
                y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        rhs(t + h, ytmp, k6);
        for i in 0..n {
            self.ynew[i] =
                y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        rhs(t + h, &self.ynew, k7);
        self.nfev += 6;

        let mut err = 0.0;
        for i in 0..n {
            let e =
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sk = self.opts.atol + self.opts.rtol * y[i].abs().max(self.ynew[i].abs());
            err += (e / sk).powi(2);
        }
        (err / n as f64).sqrt()
    }

    fn build_coeffs(&mut self, y: &[f64], h: f64) {
        let n = self.dim;
        let [k1, _, k3, k4, k5, k6, k7] = &self.k;
        let (r1, rest) = self.coeffs.split_at_mut(n);
        let (r2, rest) = rest.split_at_mut(n);
        let (r3, rest) = rest.split_at_mut(n);
        let (r4, r5) = rest.split_at_mut(n);
        for i in 0..n {
            let dy = self.ynew[i] - y[i];
            let bspl = h * k1[i] - dy;
            r1[i] = y[i];
            r2[i] = dy;
            r3[i] = bspl;
            r4[i] = dy - h * k7[i] - bspl;
            r5[i] =
                h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
        }
    }

    /// Integrates from `t0` to `t1` (`t1 > t0`). `stops` are times the
    /// stepper must land on exactly (sorted, inside the interval). Calls
    /// `on_step` after every accepted step and `on_stop` at every stop.
    fn run(
        &mut self,
        t0: f64,
        t1: f64,
        y0: &[f64],
        stops: &[f64],
        mut on_step: impl FnMut(StepView<'_>),
        mut on_stop: impl FnMut(usize, &[f64]),
        mut halt: impl FnMut(f64, &[f64]) -> bool,
    ) -> Result<(f64, Vec<f64>)> {
        if !(t1 > t0) {
            return Err(Error::InvalidArgument(format!(
                "integration interval [{t0}, {t1}] is empty"
            )));
        }
        if y0.len() != self.dim {
            return Err(Error::InvalidArgument("state dimension mismatch".into()));
        }
        let span = t1 - t0;
        let max_step = if self.opts.max_step > 0.0 {
            self.opts.max_step
        } else {
            span
        };
        let mut y = y0.to_vec();
        let mut t = t0;
        (self.rhs)(t, &y, &mut self.k[0]);
        self.nfev += 1;
        let mut h = self.initial_step(t, &y, span).min(max_step);
        let mut next_stop = 0;
        while next_stop < stops.len() && stops[next_stop] <= t0 {
            on_stop(next_stop, &y);
            next_stop += 1;
        }
        let mut fac_old: f64 = 1e-4;
        let mut rejected_last = false;
        let mut steps = 0usize;

        while t < t1 {
            if steps >= self.opts.max_steps {
                return Err(Error::Integration {
                    t,
                    message: format!("exceeded {} steps", self.opts.max_steps),
                });
            }
            if h < 1e-14 * t.abs().max(span) {
                return Err(Error::Integration {
                    t,
                    message: format!("step size underflow (h = {h:e})"),
                });
            }
            let target = stops.get(next_stop).copied().unwrap_or(t1).min(t1);
            let mut step = h;
            let hit = t + 1.01 * step >= target;
            if hit {
                step = target - t;
            }
            let err = self.attempt(t, &y, step);
            steps += 1;
            if !err.is_finite() {
                h = 0.2 * step;
                rejected_last = true;
                continue;
            }
            // Step-size controller with Lund stabilisation (beta = 0.04).
            let fac11 = err.powf(0.2 - 0.04 * 0.75);
            let fac = (fac11 / fac_old.powf(0.04) / 0.9).clamp(0.1, 5.0);
            let h_new = step / fac;
            if err <= 1.0 {
                fac_old = err.max(1e-4);
                self.build_coeffs(&y, step);
                on_step(StepView {
                    t0: t,
                    h: step,
                    coeffs: &self.coeffs,
                });
                t = if hit { target } else { t + step };
                std::mem::swap(&mut y, &mut self.ynew);
                let (first, rest) = self.k.split_at_mut(1);
                first[0].copy_from_slice(&rest[5]);
                if hit && next_stop < stops.len() && stops[next_stop] == target {
                    on_stop(next_stop, &y);
                    next_stop += 1;
                    while next_stop < stops.len() && stops[next_stop] <= t {
                        on_stop(next_stop, &y);
                        next_stop += 1;
                    }
                }
                if halt(t, &y) {
                    return Ok((t, y));
                }
                h = h_new.min(max_step);
                if rejected_last {
                    h = h.min(step);
                }
                rejected_last = false;
            } else {
                h = step / (fac11 / 0.9).min(5.0);
                rejected_last = true;
            }
        }
        Ok((t, y))
    }
}

/// A solution that can be evaluated anywhere on `[t0, t1]`.
#[derive(Debug, Clone)]
pub struct DenseSolution {
    dim: usize,
    starts: Vec<f64>,
    steps: Vec<f64>,
    coeffs: Vec<f64>,
    final_state: Vec<f64>,
}

impl DenseSolution {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn t_start(&self) -> f64 {
        self.starts[0]
    }

    pub fn t_end(&self) -> f64 {
        let last = self.starts.len() - 1;
        self.starts[last] + self.steps[last]
    }

    pub fn n_steps(&self) -> usize {
        self.starts.len()
    }

    pub fn final_state(&self) -> &[f64] {
        &self.final_state
    }

    /// Evaluates the interpolant at `t`, clamped to the covered interval.
    pub fn eval(&self, t: f64, out: &mut [f64]) {
        let t = t.clamp(self.t_start(), self.t_end());
        let seg = match self.starts.binary_search_by(|s| s.total_cmp(&t)) {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        };
        let block = 5 * self.dim;
        interpolate(
            &self.coeffs[seg * block..(seg + 1) * block],
            self.starts[seg],
            self.steps[seg],
            t,
            out,
        );
    }

    pub fn eval_vec(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval(t, &mut out);
        out
    }
}

/// Integrates and keeps dense output. `stops` are forced step boundaries;
/// the states there are returned alongside the solution.
pub fn solve_dense<F>(
    rhs: F,
    t0: f64,
    t1: f64,
    y0: &[f64],
    stops: &[f64],
    opts: OdeOptions,
) -> Result<(DenseSolution, Vec<Vec<f64>>)>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let dim = y0.len();
    let mut stepper = Stepper::new(rhs, dim, opts);
    let mut starts = Vec::new();
    let mut steps = Vec::new();
    let mut coeffs = Vec::new();
    let mut at_stops = vec![Vec::new(); stops.len()];
    let final_state = stepper
        .run(
            t0,
            t1,
            y0,
            stops,
            |view| {
                starts.push(view.t0);
                steps.push(view.h);
                coeffs.extend_from_slice(view.coeffs);
            },
            |i, y| at_stops[i] = y.to_vec(),
            |_, _| false,
        )?
        .1;
    Ok((
        DenseSolution {
            dim,
            starts,
            steps,
            coeffs,
            final_state,
        },
        at_stops,
    ))
}

/// Integrates over `grid` (sorted; first entry is the start time) and calls
/// `on_grid(index, state)` at every grid point, landing on each exactly.
pub fn solve_on_grid<F>(
    rhs: F,
    grid: &[f64],
    y0: &[f64],
    opts: OdeOptions,
    on_grid: impl FnMut(usize, &[f64]),
) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    if grid.len() < 2 {
        return Err(Error::InvalidArgument(
            "output grid needs two points".into(),
        ));
    }
    let mut stepper = Stepper::new(rhs, y0.len(), opts);
    Ok(stepper
        .run(
            grid[0],
            grid[grid.len() - 1],
            y0,
            grid,
            |_| {},
            on_grid,
            |_, _| false,
        )?
        .1)
}

/// Integrates from `t0` to `t1` and returns the final state only.
pub fn solve_final<F>(rhs: F, t0: f64, t1: f64, y0: &[f64], opts: OdeOptions) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let mut stepper = Stepper::new(rhs, y0.len(), opts);
    Ok(stepper
        .run(t0, t1, y0, &[], |_| {}, |_, _| {}, |_, _| false)?
        .1)
}

/// Integrates from `t0` towards `t1` and stops after the first accepted
/// step for which `halt(t, y)` holds. Returns the time reached and the state.
pub fn solve_until<F>(
    rhs: F,
    t0: f64,
    t1: f64,
    y0: &[f64],
    opts: OdeOptions,
    halt: impl FnMut(f64, &[f64]) -> bool,
) -> Result<(f64, Vec<f64>)>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let mut stepper = Stepper::new(rhs, y0.len(), opts);
    stepper.run(t0, t1, y0, &[], |_| {}, |_, _| {}, halt)
}

/// `n + 1` equally spaced points covering `[a, b]`, endpoints exact.
pub fn uniform_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    let mut g: Vec<f64> = (0..=n).map(|k| a + (b - a) * k as f64 / n as f64).collect();
    g[n] = b;
    g
}
