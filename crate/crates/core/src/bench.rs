//! Hard-instance mining and the linear vs adaptive comparison protocol.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::exactsim::{gap_profile, layers_for, Simulator, TrotterOrder, DIAG_GUARD, STATE_GUARD};
use crate::fluctuations::{
    detect_bottlenecks, evolve_statistical_function, BottleneckCandidate, PeakOptions,
    DEFAULT_MAX_CANDIDATES,
};
use crate::instance::{generate_sk, IsingInstance};
use crate::meanfield::{frustration_report, integrate_meanfield, DEFAULT_TOL};
use crate::schedule::{
    linear_schedule, solve_geodesic, BumpShape, GeodesicParams, ScheduleFunction,
};

/// `(prod v)^(1/k)` accumulated in log space.
pub fn geometric_mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(invalid("geometric mean of an empty list"));
    }
    if let Some(v) = values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(invalid(format!(
            "geometric mean needs positive finite values, got {v}"
        )));
    }
    let log_sum: f64 = values.iter().map(|v| v.ln()).sum();
    Ok((log_sum / values.len() as f64).exp())
}

/// Lower bound `1 - (1 - P)^(1/C)` on the per-run success probability when
/// `C` candidate circuits share the budget of `R` runs.
pub fn effective_probability_bound(p: f64, candidates: usize, runs: usize) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid(format!("P = {p} must lie in (0, 1)")));
    }
    if candidates == 0 || runs == 0 {
        return Err(invalid("candidate and run counts must be at least 1"));
    }
    let fail_log = runs as f64 * (-p).ln_1p();
    Ok(-(fail_log / (candidates * runs) as f64).exp_m1())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiningConfig {
    pub n: usize,
    pub pool_size: usize,
    /// Stage 1 keeps instances with `min_i |n^z_i(T)|` at most this.
    pub frustration_threshold: f64,
    #[serde(rename = "screening_T")]
    pub screening_time: f64,
    /// Stage 2 keeps instances with `P_lin` below this.
    pub p_cutoff: f64,
    pub trotter_step: f64,
    pub seed: u64,
    pub mf_tol: f64,
}

impl MiningConfig {
    pub fn new(n: usize, pool_size: usize, seed: u64) -> Self {
        Self {
            n,
            pool_size,
            frustration_threshold: 0.1,
            screening_time: 128.0,
            p_cutoff: 0.005,
            trotter_step: 0.125,
            seed,
            mf_tol: DEFAULT_TOL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.n > STATE_GUARD {
            return Err(invalid(format!(
                "n = {} must lie in 2..={STATE_GUARD}",
                self.n
            )));
        }
        if self.pool_size == 0 {
            return Err(invalid("pool size must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.frustration_threshold)
            || !(0.0..=1.0).contains(&self.p_cutoff)
        {
            return Err(invalid("thresholds must lie in [0, 1]"));
        }
        layers_for(self.screening_time, self.trotter_step)?;
        if !(self.mf_tol > 0.0) {
            return Err(invalid("mean-field tolerance must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinedInstance {
    pub instance: IsingInstance,
    pub min_magnetization: f64,
    pub p_lin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiningStats {
    pub pool_size: usize,
    pub stage1_pass: usize,
    pub stage2_pass: usize,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiningOutcome {
    pub config: MiningConfig,
    pub stats: MiningStats,
    pub instances: Vec<MinedInstance>,
}

enum Screen {
    Frustration,
    Easy,
    Hard(MinedInstance),
    Failed(String),
}

fn screen(cfg: &MiningConfig, seed: u64) -> Screen {
    let run = || -> Result<Screen> {
        let inst = generate_sk(cfg.n, seed)?;
        let lin = linear_schedule();
        let traj = integrate_meanfield(&inst, &lin, cfg.screening_time, cfg.mf_tol)?;
        let min_magnetization = frustration_report(&traj).min_magnetization();
        if min_magnetization > cfg.frustration_threshold {
            return Ok(Screen::Frustration);
        }
        let sim = Simulator::new(&inst)?;
        let p = layers_for(cfg.screening_time, cfg.trotter_step)?;
        let state = sim.evolve(&lin, cfg.screening_time, p, TrotterOrder::Second)?;
        let p_lin = sim.success_probability(&state);
        Ok(if p_lin < cfg.p_cutoff {
            Screen::Hard(MinedInstance {
                instance: inst,
                min_magnetization,
                p_lin,
            })
        } else {
            Screen::Easy
        })
    };
    run().unwrap_or_else(|e| Screen::Failed(format!("seed {seed}: {e}")))
}

/// Two-stage filter over a pool of SK instances whose seeds are drawn in
/// order from one master stream.
pub fn mine_hard_instances(cfg: &MiningConfig) -> Result<MiningOutcome> {
    cfg.validate()?;
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let seeds: Vec<u64> = (0..cfg.pool_size).map(|_| master.random()).collect();
    let screened: Vec<Screen> = seeds.par_iter().map(|&s| screen(cfg, s)).collect();
    let mut stats = MiningStats {
        pool_size: cfg.pool_size,
        stage1_pass: 0,
        stage2_pass: 0,
        failures: Vec::new(),
    };
    let mut instances = Vec::new();
    for s in screened {
        match s {
            Screen::Frustration => {}
            Screen::Easy => stats.stage1_pass += 1,
            Screen::Hard(m) => {
                stats.stage1_pass += 1;
                stats.stage2_pass += 1;
                instances.push(m);
            }
            Screen::Failed(msg) => stats.failures.push(msg),
        }
    }
    Ok(MiningOutcome {
        config: cfg.clone(),
        stats,
        instances,
    })
}

/// Schedule used for one arm of the comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScheduleChoice {
    Linear,
    /// Geodesic schedules centred on the semi-classical candidates.
    Adaptive,
    /// Geodesic schedule centred on the exact gap minimum.
    Ideal,
    Fixed {
        schedule: ScheduleFunction,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSpec {
    pub schedule: ScheduleChoice,
    pub order: TrotterOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonConfig {
    pub t_list: Vec<f64>,
    pub trotter_step: f64,
    pub cutoff: f64,
    pub baseline: ArmSpec,
    pub adaptive: ArmSpec,
    pub effective: Option<ArmSpec>,
    pub ideal: Option<ArmSpec>,
    pub gamma0: f64,
    pub sigma: f64,
    pub shape: BumpShape,
    pub max_candidates: usize,
    pub peaks: PeakOptions,
    pub mf_tol: f64,
    pub fluct_tol: f64,
    pub gap_resolution: u32,
}

impl Default for ComparisonConfig {
    fn default() -> Self {
        Self {
            t_list: vec![128.0, 256.0, 512.0, 1024.0],
            trotter_step: 0.125,
            cutoff: 0.005,
            baseline: ArmSpec {
                schedule: ScheduleChoice::Linear,
                order: TrotterOrder::Second,
            },
            adaptive: ArmSpec {
                schedule: ScheduleChoice::Adaptive,
                order: TrotterOrder::First,
            },
            effective: None,
            ideal: None,
            gamma0: GeodesicParams::DEFAULT_GAMMA0,
            sigma: GeodesicParams::DEFAULT_SIGMA,
            shape: BumpShape::Cauchy,
            max_candidates: DEFAULT_MAX_CANDIDATES,
            peaks: PeakOptions::default(),
            mf_tol: DEFAULT_TOL,
            fluct_tol: DEFAULT_TOL,
            gap_resolution: 5,
        }
    }
}

impl ComparisonConfig {
    fn force(&self, center: f64) -> GeodesicParams {
        GeodesicParams {
            center,
            sigma: self.sigma,
            gamma0: self.gamma0,
            shape: self.shape,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_list.is_empty() {
            return Err(invalid("T list is empty"));
        }
        for &t in &self.t_list {
            layers_for(t, self.trotter_step)?;
        }
        if !(0.0..=1.0).contains(&self.cutoff) {
            return Err(invalid("cutoff must lie in [0, 1]"));
        }
        if self.max_candidates == 0 {
            return Err(invalid("max_candidates must be at least 1"));
        }
        self.force(0.5).validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateOutcome {
    pub candidate: BottleneckCandidate,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub id: String,
    pub n: usize,
    #[serde(rename = "T")]
    pub total_time: f64,
    pub p_lin: Option<f64>,
    pub lin_most_likely_level: Option<usize>,
    pub candidates: Vec<CandidateOutcome>,
    pub p_ad: Option<f64>,
    /// `effective_probability_bound(p_ad, candidate count, 1)`.
    pub p_ad_bound: Option<f64>,
    pub p_eff: Option<f64>,
    pub s_star: Option<f64>,
    pub p_ideal: Option<f64>,
    pub error: Option<String>,
}

impl InstanceRecord {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    #[serde(rename = "T")]
    pub total_time: f64,
    pub instances: usize,
    pub failed: usize,
    /// Instances with `P_lin` below the cutoff.
    pub kept: usize,
    pub gm_lin: Option<f64>,
    pub gm_ad: Option<f64>,
    pub gm_ad_bound: Option<f64>,
    pub gm_eff: Option<f64>,
    pub gm_ideal: Option<f64>,
    pub improvement: Option<f64>,
    pub improvement_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub cutoff: f64,
    pub records: Vec<InstanceRecord>,
    pub aggregates: Vec<AggregateRow>,
}

fn gm_of(rows: &[&InstanceRecord], pick: impl Fn(&InstanceRecord) -> Option<f64>) -> Option<f64> {
    let values: Option<Vec<f64>> = rows.iter().map(|r| pick(r)).collect();
    values.and_then(|v| geometric_mean(&v).ok())
}

/// Per-T aggregates over the non-failed rows with `P_lin < cutoff`.
pub fn aggregate(records: &[InstanceRecord], cutoff: f64) -> Vec<AggregateRow> {
    let mut times: Vec<f64> = records.iter().map(|r| r.total_time).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
        .into_iter()
        .map(|t| {
            let at_t: Vec<&InstanceRecord> = records.iter().filter(|r| r.total_time == t).collect();
            let kept: Vec<&InstanceRecord> = at_t
                .iter()
                .copied()
                .filter(|r| !r.failed() && r.p_lin.is_some_and(|p| p < cutoff))
                .collect();
            let gm_lin = gm_of(&kept, |r| r.p_lin);
            let gm_ad = gm_of(&kept, |r| r.p_ad);
            let gm_ad_bound = gm_of(&kept, |r| r.p_ad_bound);
            let ratio = |a: Option<f64>| a.zip(gm_lin).map(|(a, l)| a / l);
            AggregateRow {
                total_time: t,
                instances: at_t.len(),
                failed: at_t.iter().filter(|r| r.failed()).count(),
                kept: kept.len(),
                gm_lin,
                gm_ad,
                gm_ad_bound,
                gm_eff: gm_of(&kept, |r| r.p_eff),
                gm_ideal: gm_of(&kept, |r| r.p_ideal),
                improvement: ratio(gm_ad),
                improvement_bound: ratio(gm_ad_bound),
            }
        })
        .collect()
}

impl EnsembleReport {
    pub fn recompute_aggregates(&self) -> Vec<AggregateRow> {
        aggregate(&self.records, self.cutoff)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Aggregates as CSV.
    pub fn write_summary_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "T",
            "instances",
            "failed",
            "kept",
            "gm_lin",
            "gm_ad",
            "gm_ad_bound",
            "gm_eff",
            "gm_ideal",
            "improvement",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for a in &self.aggregates {
            w.write_record([
                a.total_time.to_string(),
                a.instances.to_string(),
                a.failed.to_string(),
                a.kept.to_string(),
                opt(a.gm_lin),
                opt(a.gm_ad),
                opt(a.gm_ad_bound),
                opt(a.gm_eff),
                opt(a.gm_ideal),
                opt(a.improvement),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Semi-classical bottleneck candidates from a linear mean-field run at `T`.
pub fn predict_bottlenecks(
    inst: &IsingInstance,
    total_time: f64,
    cfg: &ComparisonConfig,
) -> Result<Vec<BottleneckCandidate>> {
    let traj = integrate_meanfield(inst, &linear_schedule(), total_time, cfg.mf_tol)?;
    let record = evolve_statistical_function(inst, &traj, cfg.fluct_tol)?;
    detect_bottlenecks(
        &record,
        &frustration_report(&traj),
        cfg.max_candidates,
        &cfg.peaks,
    )
}

struct Pipeline<'a> {
    cfg: &'a ComparisonConfig,
    sim: Simulator,
    s_star: Option<f64>,
}

impl Pipeline<'_> {
    fn run_arm(
        &self,
        arm: &ArmSpec,
        total_time: f64,
        candidates: &[BottleneckCandidate],
    ) -> Result<Vec<f64>> {
        let schedules = match &arm.schedule {
            ScheduleChoice::Linear => vec![linear_schedule()],
            ScheduleChoice::Fixed { schedule } => vec![schedule.clone()],
            ScheduleChoice::Adaptive => candidates
                .iter()
                .map(|c| solve_geodesic(&self.cfg.force(c.position)))
                .collect::<Result<_>>()?,
            ScheduleChoice::Ideal => {
                let s_star = self
                    .s_star
                    .ok_or_else(|| invalid("ideal schedule needs the exact bottleneck"))?;
                vec![solve_geodesic(&self.cfg.force(s_star))?]
            }
        };
        let p = layers_for(total_time, self.cfg.trotter_step)?;
        schedules
            .iter()
            .map(|s| {
                Ok(self
                    .sim
                    .success_probability(&self.sim.evolve(s, total_time, p, arm.order)?))
            })
            .collect()
    }

    fn record(&self, id: &str, total_time: f64) -> InstanceRecord {
        let mut rec = InstanceRecord {
            id: id.to_string(),
            n: self.sim.instance().n_spins(),
            total_time,
            p_lin: None,
            lin_most_likely_level: None,
            candidates: Vec::new(),
            p_ad: None,
            p_ad_bound: None,
            p_eff: None,
            s_star: self.s_star,
            p_ideal: None,
            error: None,
        };
        if let Err(e) = self.fill(&mut rec) {
            rec.error = Some(format!("{} ({})", e, e.kind()));
        }
        rec
    }

    fn fill(&self, rec: &mut InstanceRecord) -> Result<()> {
        let t = rec.total_time;
        let cfg = self.cfg;
        let p = layers_for(t, cfg.trotter_step)?;
        let baseline = match &cfg.baseline.schedule {
            ScheduleChoice::Fixed { schedule } => schedule.clone(),
            _ => linear_schedule(),
        };
        let state = self.sim.evolve(&baseline, t, p, cfg.baseline.order)?;
        rec.p_lin = Some(self.sim.success_probability(&state));
        rec.lin_most_likely_level = Some(self.sim.eigenstate_distribution(&state).most_likely);

        let candidates = if cfg.adaptive.schedule == ScheduleChoice::Adaptive {
            predict_bottlenecks(self.sim.instance(), t, cfg)?
        } else {
            Vec::new()
        };
        let p_ad = self.run_arm(&cfg.adaptive, t, &candidates)?;
        rec.candidates = candidates
            .into_iter()
            .zip(&p_ad)
            .map(|(candidate, &p)| CandidateOutcome { candidate, p })
            .collect();
        let best = p_ad.iter().copied().fold(0.0, f64::max);
        rec.p_ad = Some(best);
        rec.p_ad_bound = Some(if best >= 1.0 {
            1.0
        } else if best > 0.0 {
            effective_probability_bound(best, p_ad.len(), 1)?
        } else {
            0.0
        });
        if let Some(arm) = &cfg.effective {
            rec.p_eff = self.run_arm(arm, t, &[])?.first().copied();
        }
        if let Some(arm) = &cfg.ideal {
            rec.p_ideal = self.run_arm(arm, t, &[])?.first().copied();
        }
        Ok(())
    }
}

fn instance_id(inst: &IsingInstance, index: usize) -> String {
    inst.label
        .clone()
        .unwrap_or_else(|| format!("instance-{index}"))
}

/// Runs every instance at every `T`; failures are kept as rows with an
/// error message and excluded from the aggregates.
pub fn run_comparison(
    instances: &[IsingInstance],
    cfg: &ComparisonConfig,
) -> Result<EnsembleReport> {
    cfg.validate()?;
    let wants_exact = cfg
        .ideal
        .as_ref()
        .is_some_and(|a| a.schedule == ScheduleChoice::Ideal);
    let per_instance: Vec<Vec<InstanceRecord>> = instances
        .par_iter()
        .enumerate()
        .map(|(index, inst)| {
            let id = instance_id(inst, index);
            let setup = || -> Result<Pipeline<'_>> {
                let s_star = if wants_exact && inst.n_spins() <= DIAG_GUARD {
                    Some(gap_profile(inst, cfg.gap_resolution)?.s_star)
                } else {
                    None
                };
                Ok(Pipeline {
                    cfg,
                    sim: Simulator::new(inst)?,
                    s_star,
                })
            };
            match setup() {
                Ok(pipe) => cfg.t_list.iter().map(|&t| pipe.record(&id, t)).collect(),
                Err(e) => cfg
                    .t_list
                    .iter()
                    .map(|&t| InstanceRecord {
                        id: id.clone(),
                        n: inst.n_spins(),
                        total_time: t,
                        p_lin: None,
                        lin_most_likely_level: None,
                        candidates: Vec::new(),
                        p_ad: None,
                        p_ad_bound: None,
                        p_eff: None,
                        s_star: None,
                        p_ideal: None,
                        error: Some(format!("{} ({})", e, e.kind())),
                    })
                    .collect(),
            }
        })
        .collect();
    let records: Vec<InstanceRecord> = per_instance.into_iter().flatten().collect();
    Ok(EnsembleReport {
        cutoff: cfg.cutoff,
        aggregates: aggregate(&records, cfg.cutoff),
        records,
    })
}

/// Counts of the most likely final level, keyed by `n` then level index.
pub fn excited_state_histogram(
    instances: &[IsingInstance],
    total_time: f64,
    schedule: &ScheduleFunction,
    trotter_step: f64,
    order: TrotterOrder,
) -> Result<BTreeMap<usize, BTreeMap<usize, usize>>> {
    let p = layers_for(total_time, trotter_step)?;
    let levels: Vec<(usize, usize)> = instances
        .par_iter()
        .map(|inst| {
            let sim = Simulator::new(inst)?;
            let state = sim.evolve(schedule, total_time, p, order)?;
            Ok((
                inst.n_spins(),
                sim.eigenstate_distribution(&state).most_likely,
            ))
        })
        .collect::<Result<_>>()?;
    let mut hist: BTreeMap<usize, BTreeMap<usize, usize>> = BTreeMap::new();
    for (n, level) in levels {
        *hist.entry(n).or_default().entry(level).or_default() += 1;
    }
    Ok(hist)
}
