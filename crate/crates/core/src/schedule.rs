//! Annealing schedules `s(u)`, `u = t / T`, and the one-parameter geodesic
//! boundary-value problem
//!
//! ```text
//! s''(u) = -Gamma(s) s'(u)^2,   s(0) = 0,  s(1) = 1
//! ```
//!
//! solved by shooting on `s'(0)`. `Gamma` is either the Lorentzian "force"
//! centred on a predicted bottleneck or the Christoffel symbol tabulated
//! from an exact gap profile, `Gamma = -(log Delta)'`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exactsim::GapProfile;
use crate::ode::{self, OdeOptions};

/// Samples per schedule: a uniform grid with spacing `2^-10` in `u`.
pub const GRID_POINTS: usize = 1025;

/// A strictly increasing map `[0, 1] -> [0, 1]` sampled on a uniform grid
/// and evaluated by monotone cubic Hermite interpolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleFunction {
    pub id: String,
    samples: Vec<f64>,
    slopes: Vec<f64>,
}

impl ScheduleFunction {
    /// Builds a schedule from samples on `u_k = k / (len - 1)` with
    /// Fritsch-Carlson (PCHIP) slopes.
    pub fn from_samples(id: impl Into<String>, samples: Vec<f64>) -> Result<Self> {
        validate_samples(&samples)?;
        let slopes = pchip_slopes(&samples);
        Ok(Self {
            id: id.into(),
            samples,
            slopes,
        })
    }

    /// Builds a schedule from samples and known derivatives `ds/du`. The
    /// derivatives are clipped where needed to keep every cubic piece
    /// monotone.
    pub fn from_samples_and_slopes(
        id: impl Into<String>,
        samples: Vec<f64>,
        mut slopes: Vec<f64>,
    ) -> Result<Self> {
        validate_samples(&samples)?;
        if slopes.len() != samples.len() {
            return Err(invalid("slope count must match sample count"));
        }
        let m = (samples.len() - 1) as f64;
        for k in 0..samples.len() - 1 {
            let secant = (samples[k + 1] - samples[k]) * m;
            for d in [k, k + 1] {
                slopes[d] = slopes[d].clamp(0.0, 3.0 * secant);
            }
        }
        Ok(Self {
            id: id.into(),
            samples,
            slopes,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// Stored derivatives `ds/du` at the sample points.
    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn grid(&self) -> Vec<f64> {
        ode::uniform_grid(0.0, 1.0, self.samples.len() - 1)
    }

    fn locate(&self, u: f64) -> (usize, f64, f64) {
        let m = self.samples.len() - 1;
        let x = u.clamp(0.0, 1.0) * m as f64;
        let k = (x.floor() as usize).min(m - 1);
        (k, x - k as f64, 1.0 / m as f64)
    }

    /// `s(u)`, with `u` clamped to `[0, 1]`.
    pub fn s(&self, u: f64) -> f64 {
        let (k, x, h) = self.locate(u);
        let (y0, y1) = (self.samples[k], self.samples[k + 1]);
        let (d0, d1) = (self.slopes[k] * h, self.slopes[k + 1] * h);
        let x2 = x * x;
        let x3 = x2 * x;
        (2.0 * x3 - 3.0 * x2 + 1.0) * y0
            + (x3 - 2.0 * x2 + x) * d0
            + (-2.0 * x3 + 3.0 * x2) * y1
            + (x3 - x2) * d1
    }

    /// `ds/du` of the interpolant.
    pub fn ds(&self, u: f64) -> f64 {
        let (k, x, h) = self.locate(u);
        let (y0, y1) = (self.samples[k], self.samples[k + 1]);
        let (d0, d1) = (self.slopes[k] * h, self.slopes[k + 1] * h);
        let x2 = x * x;
        ((6.0 * x2 - 6.0 * x) * y0
            + (3.0 * x2 - 4.0 * x + 1.0) * d0
            + (-6.0 * x2 + 6.0 * x) * y1
            + (3.0 * x2 - 2.0 * x) * d1)
            / h
    }

    /// Driver weight `s^1(t) = 1 - s(t / T)`.
    pub fn s1(&self, t: f64, total_time: f64) -> f64 {
        1.0 - self.s(t / total_time)
    }

    /// Problem weight `s^2(t) = s(t / T)`.
    pub fn s2(&self, t: f64, total_time: f64) -> f64 {
        self.s(t / total_time)
    }

    /// Normalised time of the smallest stored slope.
    pub fn slope_minimum(&self) -> (f64, f64) {
        let m = (self.samples.len() - 1) as f64;
        let (k, _) = self
            .slopes
            .iter()
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |best, (k, &d)| if d < best.1 { (k, d) } else { best },
            );
        (k as f64 / m, self.samples[k])
    }

    /// CSV with columns `u,s`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["u", "s"])?;
        for (u, s) in self.grid().iter().zip(&self.samples) {
            w.write_record([u.to_string(), s.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a `u,s` CSV on a uniform grid.
    pub fn read_csv(id: impl Into<String>, path: impl AsRef<Path>) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut us = Vec::new();
        let mut ss = Vec::new();
        for row in r.records() {
            let row = row?;
            let parse = |i: usize| -> Result<f64> {
                row.get(i)
                    .ok_or_else(|| invalid("schedule CSV rows need two columns"))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| invalid(format!("bad schedule value: {e}")))
            };
            us.push(parse(0)?);
            ss.push(parse(1)?);
        }
        if us.len() < 2 {
            return Err(invalid("schedule CSV needs at least two rows"));
        }
        let m = (us.len() - 1) as f64;
        if us
            .iter()
            .enumerate()
            .any(|(k, &u)| (u - k as f64 / m).abs() > 1e-9)
        {
            return Err(invalid("schedule CSV must use a uniform grid on [0, 1]"));
        }
        Self::from_samples(id, ss)
    }
}

fn validate_samples(samples: &[f64]) -> Result<()> {
    if samples.len() < 2 {
        return Err(invalid("a schedule needs at least two samples"));
    }
    if samples[0] != 0.0 || samples[samples.len() - 1] != 1.0 {
        return Err(invalid("schedules must satisfy s(0) = 0 and s(1) = 1"));
    }
    if let Some(k) = samples.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(invalid(format!(
            "schedule is not strictly increasing at sample {k}"
        )));
    }
    Ok(())
}

fn pchip_slopes(y: &[f64]) -> Vec<f64> {
    let m = y.len() - 1;
    let h = 1.0 / m as f64;
    let delta: Vec<f64> = y.windows(2).map(|w| (w[1] - w[0]) / h).collect();
    if m == 1 {
        return vec![delta[0]; 2];
    }
    let mut d = vec![0.0; m + 1];
    for k in 1..m {
        let (a, b) = (delta[k - 1], delta[k]);
        d[k] = if a * b <= 0.0 {
            0.0
        } else {
            2.0 / (1.0 / a + 1.0 / b)
        };
    }
    let end = |d0: f64, d1: f64| {
        let v = (3.0 * d0 - d1) / 2.0;
        if v * d0 <= 0.0 {
            0.0
        } else if d0 * d1 <= 0.0 && v.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            v
        }
    };
    d[0] = end(delta[0], delta[1]);
    d[m] = end(delta[m - 1], delta[m - 2]);
    d
}

/// The linear schedule `s(u) = u`.
pub fn linear_schedule() -> ScheduleFunction {
    let grid = ode::uniform_grid(0.0, 1.0, GRID_POINTS - 1);
    ScheduleFunction {
        id: "linear".into(),
        slopes: vec![1.0; grid.len()],
        samples: grid,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BumpShape {
    #[default]
    Cauchy,
    Gaussian,
}

/// Parameters of the bottleneck force.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeodesicParams {
    pub center: f64,
    pub sigma: f64,
    pub gamma0: f64,
    #[serde(default)]
    pub shape: BumpShape,
}

impl GeodesicParams {
    pub const DEFAULT_GAMMA0: f64 = 3.20;
    pub const DEFAULT_SIGMA: f64 = 0.05;

    pub fn centered(center: f64) -> Self {
        Self {
            center,
            sigma: Self::DEFAULT_SIGMA,
            gamma0: Self::DEFAULT_GAMMA0,
            shape: BumpShape::Cauchy,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.center > 0.0 && self.center < 1.0) {
            return Err(invalid(format!(
                "bottleneck centre {} must lie in (0, 1)",
                self.center
            )));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(invalid("sigma must be positive"));
        }
        if !(self.gamma0 >= 0.0 && self.gamma0.is_finite()) {
            return Err(invalid("gamma0 must be non-negative"));
        }
        Ok(())
    }
}

impl Default for GeodesicParams {
    fn default() -> Self {
        Self::centered(0.5)
    }
}

/// A one-parameter Christoffel symbol together with its antiderivative,
/// which gives the first integral `s'(u) exp(potential(s)) = const`.
pub trait Christoffel {
    fn gamma(&self, s: f64) -> f64;
    fn potential(&self, s: f64) -> f64;
}

/// `-Gamma0 (s - c) / ((s - c)^2 + sigma^2)` for the Cauchy bump. The
/// Gaussian variant swaps the scaled Cauchy profile `sigma / (x^2 + sigma^2)`
/// for `exp(-x^2 / (2 sigma^2)) / sigma` in `-Gamma0 x / sigma * f(x)`.
pub fn lorentzian_force(p: &GeodesicParams, s: f64) -> f64 {
    p.gamma(s)
}

impl Christoffel for GeodesicParams {
    fn gamma(&self, s: f64) -> f64 {
        let x = s - self.center;
        match self.shape {
            BumpShape::Cauchy => -self.gamma0 * x / (x * x + self.sigma * self.sigma),
            BumpShape::Gaussian => {
                let sig2 = self.sigma * self.sigma;
                -self.gamma0 * x / sig2 * (-x * x / (2.0 * sig2)).exp()
            }
        }
    }

    fn potential(&self, s: f64) -> f64 {
        let x = s - self.center;
        let sig2 = self.sigma * self.sigma;
        match self.shape {
            BumpShape::Cauchy => -0.5 * self.gamma0 * (x * x + sig2).ln(),
            BumpShape::Gaussian => self.gamma0 * (-x * x / (2.0 * sig2)).exp(),
        }
    }
}

/// Christoffel symbol tabulated on a (possibly non-uniform) grid and
/// interpolated linearly; the potential is its exact piecewise-quadratic
/// antiderivative.
#[derive(Debug, Clone)]
pub struct TabulatedChristoffel {
    s: Vec<f64>,
    gamma: Vec<f64>,
    potential: Vec<f64>,
}

impl TabulatedChristoffel {
    pub fn new(s: Vec<f64>, gamma: Vec<f64>) -> Result<Self> {
        if s.len() < 2 || s.len() != gamma.len() {
            return Err(invalid(
                "tabulated Christoffel symbol needs matching grids of length >= 2",
            ));
        }
        if s.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("tabulation grid must be strictly increasing"));
        }
        let mut potential = vec![0.0; s.len()];
        for k in 1..s.len() {
            potential[k] = potential[k - 1] + 0.5 * (gamma[k] + gamma[k - 1]) * (s[k] - s[k - 1]);
        }
        Ok(Self {
            s,
            gamma,
            potential,
        })
    }

    /// `Gamma = -(log Delta)'` from central differences of `log Delta`
    /// (three-point weights on non-uniform spacing, one-sided at the ends).
    pub fn from_gap(gap: &GapProfile) -> Result<Self> {
        if gap.s.len() < 3 {
            return Err(invalid("gap profile needs at least three samples"));
        }
        if let Some(bad) = gap.gap.iter().position(|&d| !(d > 0.0) || !d.is_finite()) {
            return Err(Error::Degenerate(format!(
                "non-positive gap {} at s = {}",
                gap.gap[bad], gap.s[bad]
            )));
        }
        let s = &gap.s;
        let f: Vec<f64> = gap.gap.iter().map(|d| d.ln()).collect();
        let m = s.len() - 1;
        let mut gamma = vec![0.0; s.len()];
        gamma[0] = -(f[1] - f[0]) / (s[1] - s[0]);
        gamma[m] = -(f[m] - f[m - 1]) / (s[m] - s[m - 1]);
        for k in 1..m {
            let h1 = s[k] - s[k - 1];
            let h2 = s[k + 1] - s[k];
            let d = -h2 / (h1 * (h1 + h2)) * f[k - 1]
                + (h2 - h1) / (h1 * h2) * f[k]
                + h1 / (h2 * (h1 + h2)) * f[k + 1];
            gamma[k] = -d;
        }
        Self::new(s.clone(), gamma)
    }

    pub fn nodes(&self) -> (&[f64], &[f64]) {
        (&self.s, &self.gamma)
    }

    fn segment(&self, s: f64) -> usize {
        match self.s.binary_search_by(|x| x.total_cmp(&s)) {
            Ok(i) => i.min(self.s.len() - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(self.s.len() - 2),
        }
    }
}

impl Christoffel for TabulatedChristoffel {
    fn gamma(&self, s: f64) -> f64 {
        let last = self.s.len() - 1;
        if s <= self.s[0] {
            return self.gamma[0];
        }
        if s >= self.s[last] {
            return self.gamma[last];
        }
        let k = self.segment(s);
        let w = (s - self.s[k]) / (self.s[k + 1] - self.s[k]);
        self.gamma[k] + w * (self.gamma[k + 1] - self.gamma[k])
    }

    fn potential(&self, s: f64) -> f64 {
        let last = self.s.len() - 1;
        if s <= self.s[0] {
            return self.potential[0] + self.gamma[0] * (s - self.s[0]);
        }
        if s >= self.s[last] {
            return self.potential[last] + self.gamma[last] * (s - self.s[last]);
        }
        let k = self.segment(s);
        let x = s - self.s[k];
        let slope = (self.gamma[k + 1] - self.gamma[k]) / (self.s[k + 1] - self.s[k]);
        self.potential[k] + self.gamma[k] * x + 0.5 * slope * x * x
    }
}

/// Shooting controls.
#[derive(Debug, Clone, Copy)]
pub struct ShootingOptions {
    pub ode_tol: f64,
    /// Target for `|s(1) - 1|`.
    pub endpoint_tol: f64,
    pub max_iterations: usize,
    /// Largest continuation increment in `gamma0`.
    pub continuation_step: f64,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        Self {
            ode_tol: 1e-12,
            endpoint_tol: 1e-11,
            max_iterations: 200,
            continuation_step: 0.25,
        }
    }
}

/// Shots are abandoned once `s` passes this value; beyond `s = 1` the
/// accelerating branch of the force can blow up in finite time.
const OVERSHOOT_STOP: f64 = 1.5;

fn shoot_rhs<'a, C: Christoffel + ?Sized>(
    force: &'a C,
) -> impl FnMut(f64, &[f64], &mut [f64]) + 'a {
    move |_u, y, dy| {
        dy[0] = y[1];
        dy[1] = -force.gamma(y[0]) * y[1] * y[1];
    }
}

/// `s(1) - 1`, or for an abandoned shot the linear extrapolation of the
/// miss from the stopping point, which keeps the residual increasing in `v0`.
fn endpoint_miss<C: Christoffel + ?Sized>(force: &C, v0: f64, tol: f64) -> Result<f64> {
    let (u, y) = ode::solve_until(
        shoot_rhs(force),
        0.0,
        1.0,
        &[0.0, v0],
        OdeOptions::with_tol(tol),
        |_, y| y[0] > OVERSHOOT_STOP,
    )?;
    Ok(y[0] - 1.0 + (1.0 - u) * y[1])
}

/// Finds `s'(0)` with `s(1) = 1` by bracketing and Brent's method.
fn shoot<C: Christoffel + ?Sized>(force: &C, guess: f64, opts: &ShootingOptions) -> Result<f64> {
    let f = |v: f64| endpoint_miss(force, v, opts.ode_tol);
    let mut a = guess.max(1e-12);
    let mut fa = f(a)?;
    if fa == 0.0 {
        return Ok(a);
    }
    let mut b = a;
    let mut fb = fa;
    let mut expansions = 0;
    while fa.signum() == fb.signum() {
        if expansions > 80 {
            return Err(invalid("could not bracket the initial slope"));
        }
        a = b;
        fa = fb;
        b = if fa < 0.0 { b * 2.0 } else { b * 0.5 };
        fb = f(b)?;
        expansions += 1;
    }
    // Brent's method on [a, b].
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..opts.max_iterations {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 1e-15;
        let m = 0.5 * (c - b);
        if fb.abs() <= opts.endpoint_tol || m.abs() <= tol {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = d;
            }
        } else {
            d = m;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b)?;
    }
    Err(invalid("Brent iteration budget exhausted"))
}

/// Integrates the converged trajectory onto the output grid.
fn sample_geodesic<C: Christoffel + ?Sized>(
    force: &C,
    v0: f64,
    id: String,
    opts: &ShootingOptions,
) -> Result<ScheduleFunction> {
    let grid = ode::uniform_grid(0.0, 1.0, GRID_POINTS - 1);
    let mut samples = vec![0.0; GRID_POINTS];
    let mut slopes = vec![0.0; GRID_POINTS];
    ode::solve_on_grid(
        shoot_rhs(force),
        &grid,
        &[0.0, v0],
        OdeOptions::with_tol(opts.ode_tol),
        |k, y| {
            samples[k] = y[0];
            slopes[k] = y[1];
        },
    )?;
    let miss = samples[GRID_POINTS - 1] - 1.0;
    if miss.abs() > 1e3 * opts.endpoint_tol.max(opts.ode_tol) {
        return Err(invalid(format!(
            "geodesic endpoint misses s(1) = 1 by {miss:e}"
        )));
    }
    samples[0] = 0.0;
    samples[GRID_POINTS - 1] = 1.0;
    ScheduleFunction::from_samples_and_slopes(id, samples, slopes)
}

/// Solves the geodesic BVP for an arbitrary Christoffel symbol.
pub fn solve_bvp<C: Christoffel + ?Sized>(
    force: &C,
    id: impl Into<String>,
    guess: f64,
    opts: &ShootingOptions,
) -> Result<(ScheduleFunction, f64)> {
    let v0 = shoot(force, guess, opts)?;
    Ok((sample_geodesic(force, v0, id.into(), opts)?, v0))
}

/// Geodesic schedule for the bottleneck force, reached by continuation in
/// `gamma0` from `1.00` in increments of at most `continuation_step`.
pub fn solve_geodesic(p: &GeodesicParams) -> Result<ScheduleFunction> {
    solve_geodesic_with(p, &ShootingOptions::default())
}

pub fn solve_geodesic_with(p: &GeodesicParams, opts: &ShootingOptions) -> Result<ScheduleFunction> {
    p.validate()?;
    let id = format!(
        "geodesic-{:?}-c{:.4}-g{:.3}-w{:.4}",
        p.shape, p.center, p.gamma0, p.sigma
    )
    .to_lowercase();
    let mut ladder = Vec::new();
    if p.gamma0 > 1.0 {
        let steps = ((p.gamma0 - 1.0) / opts.continuation_step).ceil() as usize;
        for k in 0..steps {
            ladder.push(1.0 + (p.gamma0 - 1.0) * k as f64 / steps as f64);
        }
    }
    ladder.push(p.gamma0);

    let mut guess = 1.0;
    let mut last: Option<(f64, f64)> = None;
    for (rung, &g0) in ladder.iter().enumerate() {
        let params = GeodesicParams { gamma0: g0, ..*p };
        match shoot(&params, guess, opts) {
            Ok(v0) => {
                guess = v0;
                last = Some((g0, v0));
            }
            Err(_) => {
                let last_schedule = last.and_then(|(g, v)| {
                    let prev = GeodesicParams { gamma0: g, ..*p };
                    sample_geodesic(&prev, v, format!("{id}-partial"), opts)
                        .ok()
                        .map(Box::new)
                });
                return Err(Error::Shooting {
                    failed_gamma0: g0,
                    last_converged_gamma0: last.map(|(g, _)| g).filter(|_| rung > 0),
                    last_schedule,
                });
            }
        }
    }
    let (_, v0) = last.expect("ladder is non-empty");
    sample_geodesic(p, v0, id, opts)
}

/// Geodesic schedule for the metric `g = Delta^-2` of an exact gap profile.
pub fn exact_christoffel_schedule(gap: &GapProfile) -> Result<ScheduleFunction> {
    let table = TabulatedChristoffel::from_gap(gap)?;
    let (schedule, _) = solve_bvp(
        &table,
        "exact-christoffel",
        1.0,
        &ShootingOptions::default(),
    )?;
    Ok(schedule)
}

/// Relative drift of the first integral `s'(u) exp(potential(s(u)))` over
/// the stored samples; zero for an exact solution of the geodesic equation.
pub fn first_integral_residual<C: Christoffel + ?Sized>(
    schedule: &ScheduleFunction,
    force: &C,
) -> f64 {
    let invariant: Vec<f64> = schedule
        .samples()
        .iter()
        .zip(schedule.slopes())
        .map(|(&s, &v)| v.ln() + force.potential(s))
        .collect();
    let reference = invariant[0];
    invariant
        .iter()
        .map(|&c| (c - reference).exp_m1().abs())
        .fold(0.0, f64::max)
}

/// Largest `|s'' + Gamma(s) s'^2|` with both derivatives taken by second-order
/// central differences of the samples.
pub fn second_difference_residual<C: Christoffel + ?Sized>(
    schedule: &ScheduleFunction,
    force: &C,
) -> f64 {
    let y = schedule.samples();
    let h = 1.0 / (y.len() - 1) as f64;
    (1..y.len() - 1)
        .map(|k| {
            let d2 = (y[k + 1] - 2.0 * y[k] + y[k - 1]) / (h * h);
            let d1 = (y[k + 1] - y[k - 1]) / (2.0 * h);
            (d2 + force.gamma(y[k]) * d1 * d1).abs()
        })
        .fold(0.0, f64::max)
}

/// Fixed QAOA angles from a schedule by lowest-order Trotterization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaoaAngles {
    #[serde(rename = "T")]
    pub total_time: f64,
    pub p: usize,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
}

/// `beta_k = tau s^1(Tk/p)`, `gamma_k = tau s^2(Tk/p)`, `tau = T/p`.
pub fn qaoa_angles(sched: &ScheduleFunction, total_time: f64, p: usize) -> Result<QaoaAngles> {
    if p == 0 {
        return Err(invalid("QAOA depth p must be at least 1"));
    }
    if !(total_time > 0.0 && total_time.is_finite()) {
        return Err(invalid("total time T must be positive"));
    }
    let tau = total_time / p as f64;
    let (beta, gamma) = (1..=p)
        .map(|k| {
            let u = k as f64 / p as f64;
            (tau * (1.0 - sched.s(u)), tau * sched.s(u))
        })
        .unzip();
    Ok(QaoaAngles {
        total_time,
        p,
        beta,
        gamma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_schedule_values() {
        let lin = linear_schedule();
        assert_eq!(lin.s(0.5), 0.5);
        assert_eq!(lin.s(0.0), 0.0);
        assert_eq!(lin.s(1.0), 1.0);
        assert_eq!(lin.s1(64.0, 128.0), 0.5);
        assert_eq!(lin.s2(64.0, 128.0), 0.5);
        assert!((lin.s(0.3141) - 0.3141).abs() < 1e-15);
    }

    #[test]
    fn schedule_invariants_are_enforced() {
        assert!(ScheduleFunction::from_samples("x", vec![0.0, 0.5, 0.4, 1.0]).is_err());
        assert!(ScheduleFunction::from_samples("x", vec![0.1, 0.5, 1.0]).is_err());
        assert!(ScheduleFunction::from_samples("x", vec![0.0, 0.5, 0.99]).is_err());
        assert!(ScheduleFunction::from_samples("x", vec![0.0, 0.5, 0.5, 1.0]).is_err());
    }

    #[test]
    fn pchip_interpolant_is_monotone() {
        let samples = vec![0.0, 0.01, 0.02, 0.5, 0.51, 0.52, 1.0];
        let sched = ScheduleFunction::from_samples("steps", samples).unwrap();
        let mut prev = -1.0;
        for k in 0..=6000 {
            let s = sched.s(k as f64 / 6000.0);
            assert!(s >= prev, "not monotone at {k}");
            prev = s;
        }
    }

    #[test]
    fn force_shape() {
        let p = GeodesicParams::centered(0.62);
        assert_eq!(lorentzian_force(&p, 0.62), 0.0);
        for d in [0.01, 0.05, 0.2] {
            let plus = lorentzian_force(&p, 0.62 + d);
            let minus = lorentzian_force(&p, 0.62 - d);
            assert!((plus + minus).abs() < 1e-12);
        }
        let peak = lorentzian_force(&p, 0.62 - p.sigma);
        assert!((peak - p.gamma0 / (2.0 * p.sigma)).abs() < 1e-12);
        // Extremum: neighbours are smaller in magnitude.
        for d in [-1e-3, 1e-3] {
            assert!(lorentzian_force(&p, 0.62 - p.sigma + d) < peak);
        }
        let g = GeodesicParams {
            shape: BumpShape::Gaussian,
            ..p
        };
        assert_eq!(lorentzian_force(&g, 0.62), 0.0);
        assert!(lorentzian_force(&g, 0.5) > 0.0 && lorentzian_force(&g, 0.7) < 0.0);
    }

    #[test]
    fn potential_is_antiderivative() {
        for shape in [BumpShape::Cauchy, BumpShape::Gaussian] {
            let p = GeodesicParams {
                shape,
                ..GeodesicParams::centered(0.4)
            };
            for s in [0.1, 0.39, 0.45, 0.8] {
                let h = 1e-6;
                let fd = (p.potential(s + h) - p.potential(s - h)) / (2.0 * h);
                assert!((fd - p.gamma(s)).abs() < 1e-5 * (1.0 + p.gamma(s).abs()));
            }
        }
    }

    #[test]
    fn vanishing_force_is_linear() {
        let p = GeodesicParams {
            gamma0: 1e-12,
            ..GeodesicParams::centered(0.62)
        };
        let sched = solve_geodesic(&p).unwrap();
        let err = sched
            .grid()
            .iter()
            .zip(sched.samples())
            .map(|(u, s)| (u - s).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-6, "max deviation {err}");
    }

    #[test]
    fn default_geodesic_slows_at_centre() {
        let p = GeodesicParams::centered(0.62);
        let sched = solve_geodesic(&p).unwrap();
        let (_, s_at_min) = sched.slope_minimum();
        assert!(
            (s_at_min - 0.62).abs() <= 0.05,
            "slope minimum at s = {s_at_min}"
        );
        assert!(first_integral_residual(&sched, &p) < 1e-6);
        assert_eq!(sched, solve_geodesic(&p).unwrap());
    }

    #[test]
    fn reflected_centre_gives_reflected_schedule() {
        let a = solve_geodesic(&GeodesicParams::centered(0.3)).unwrap();
        let b = solve_geodesic(&GeodesicParams::centered(0.7)).unwrap();
        for k in 0..=100 {
            let u = k as f64 / 100.0;
            let reflected = 1.0 - b.s(1.0 - u);
            assert!((a.s(u) - reflected).abs() < 1e-6, "u = {u}");
        }
    }

    #[test]
    fn invalid_params_are_rejected() {
        assert!(solve_geodesic(&GeodesicParams::centered(1.2)).is_err());
        let bad = GeodesicParams {
            sigma: 0.0,
            ..GeodesicParams::centered(0.5)
        };
        assert!(solve_geodesic(&bad).is_err());
    }

    #[test]
    fn angles_for_linear_schedule() {
        let a = qaoa_angles(&linear_schedule(), 8.0, 64).unwrap();
        for k in 1..=64 {
            let expect_beta = 0.125 * (1.0 - k as f64 / 64.0);
            let expect_gamma = 0.125 * k as f64 / 64.0;
            assert!((a.beta[k - 1] - expect_beta).abs() < 1e-15);
            assert!((a.gamma[k - 1] - expect_gamma).abs() < 1e-15);
        }
        assert_eq!(a.beta[63], 0.0);
        assert_eq!(a.gamma[63], 0.125);
        assert!(qaoa_angles(&linear_schedule(), 8.0, 0).is_err());
    }

    #[test]
    fn angles_sum_to_total_time() {
        let sched = solve_geodesic(&GeodesicParams::centered(0.45)).unwrap();
        let a = qaoa_angles(&sched, 128.0, 1024).unwrap();
        let total: f64 = a.beta.iter().chain(&a.gamma).sum();
        assert!((total - 128.0).abs() < 1e-9);
        assert_eq!(a.beta[1023], 0.0);
        assert_eq!(a.gamma[1023], 0.125);
    }

    #[test]
    fn constant_gap_gives_linear_schedule() {
        let s = ode::uniform_grid(0.0, 1.0, 32);
        let gap = GapProfile {
            gap: vec![1.7; s.len()],
            s,
            s_star: 0.0,
            gap_min: 1.7,
            degenerate: false,
        };
        let sched = exact_christoffel_schedule(&gap).unwrap();
        for (u, v) in sched.grid().iter().zip(sched.samples()) {
            assert!((u - v).abs() < 1e-9);
        }
        let mut bad = gap.clone();
        bad.gap[3] = 0.0;
        assert!(matches!(
            exact_christoffel_schedule(&bad),
            Err(Error::Degenerate(_))
        ));
    }
}
