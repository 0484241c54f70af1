use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use geoanneal::bench::{
    mine_hard_instances, run_comparison, ArmSpec, ComparisonConfig, EnsembleReport, MiningConfig,
    ScheduleChoice,
};
use geoanneal::exactsim::{
    gap_profile, instantaneous_spectrum, layers_for, Simulator, TrotterOrder,
};
use geoanneal::fluctuations::{
    detect_bottlenecks, evolve_statistical_function, write_candidates_json, PeakOptions,
};
use geoanneal::instance::{generate_sk, map_clauses_to_ising, parse_max2sat, IsingInstance};
use geoanneal::meanfield::{frustration_report, integrate_meanfield};
use geoanneal::schedule::{
    exact_christoffel_schedule, linear_schedule, qaoa_angles, solve_geodesic, BumpShape,
    GeodesicParams, ScheduleFunction,
};

const OUT_DIR_ENV: &str = "GEOANNEAL_OUT_DIR";
const MINING_MANIFEST: &str = "mining.json";

#[derive(Parser, Debug)]
#[command(
    name = "geoanneal",
    version,
    about = "Adaptive annealing schedules for hard Ising instances"
)]
struct Cli {
    /// Directory receiving every output file.
    #[arg(long, global = true, env = OUT_DIR_ENV, default_value = ".")]
    out_dir: PathBuf,
    /// Also write `<command>-manifest.json` with the resolved configuration.
    #[arg(long, global = true)]
    manifest: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write SK instances, or map a MAX-2-SAT file to an instance.
    Generate(GenerateArgs),
    /// Screen a pool of random SK instances for hard ones.
    Mine(MineArgs),
    /// Integrate the mean-field spin equations.
    Meanfield(MeanfieldArgs),
    /// Evolve the paramagnon statistical function and locate bottlenecks.
    Fluct(FluctArgs),
    /// Solve a geodesic schedule and optionally export discrete angles.
    Schedule(ScheduleArgs),
    /// Trotterized state-vector anneal.
    Simulate(SimulateArgs),
    /// Spectral gap profile by exact diagonalization.
    Spectrum(SpectrumArgs),
    /// Compare linear and adaptive schedules over a mined ensemble.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Shape {
    Cauchy,
    Gaussian,
}

impl From<Shape> for BumpShape {
    fn from(s: Shape) -> Self {
        match s {
            Shape::Cauchy => BumpShape::Cauchy,
            Shape::Gaussian => BumpShape::Gaussian,
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct ForceArgs {
    #[arg(long, default_value_t = GeodesicParams::DEFAULT_GAMMA0)]
    gamma0: f64,
    #[arg(long, default_value_t = GeodesicParams::DEFAULT_SIGMA)]
    sigma: f64,
    #[arg(long, value_enum, default_value_t = Shape::Cauchy)]
    shape: Shape,
}

impl ForceArgs {
    fn params(&self, center: f64) -> GeodesicParams {
        GeodesicParams {
            center,
            sigma: self.sigma,
            gamma0: self.gamma0,
            shape: self.shape.into(),
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct GenerateArgs {
    #[arg(long, required_unless_present = "sat")]
    n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of consecutive seeds starting at `--seed`.
    #[arg(long, default_value_t = 1)]
    count: u64,
    /// MAX-2-SAT file with a `p max2sat <vars> <clauses>` header.
    #[arg(long, conflicts_with = "n")]
    sat: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct MineArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    pool: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Upper bound on the smallest final mean-field magnetization.
    #[arg(long, default_value_t = 0.1)]
    frustration_threshold: f64,
    #[arg(long = "T", default_value_t = 128.0)]
    total_time: f64,
    #[arg(long, default_value_t = 0.005)]
    cutoff: f64,
    #[arg(long, default_value_t = 0.125)]
    step: f64,
    #[arg(long, default_value_t = geoanneal::meanfield::DEFAULT_TOL)]
    tol: f64,
    /// Subdirectory of the output directory for the instance files.
    #[arg(long, default_value = "mined")]
    name: String,
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
struct MeanfieldArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long = "T")]
    total_time: f64,
    /// `linear`, `geodesic:<center>` or a schedule CSV.
    #[arg(long, default_value = "linear")]
    schedule: String,
    #[arg(long, default_value_t = geoanneal::meanfield::DEFAULT_TOL)]
    tol: f64,
    #[command(flatten)]
    force: ForceArgs,
}

#[derive(Args, Debug, Serialize)]
struct FluctArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long = "T")]
    total_time: f64,
    #[arg(long, default_value = "linear")]
    schedule: String,
    #[arg(long, default_value_t = geoanneal::meanfield::DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = geoanneal::fluctuations::DEFAULT_MAX_CANDIDATES)]
    max_candidates: usize,
    #[command(flatten)]
    force: ForceArgs,
}

#[derive(Args, Debug, Serialize)]
struct ScheduleArgs {
    /// Bottleneck position; required unless `--exact` is given.
    #[arg(long, required_unless_present = "exact")]
    center: Option<f64>,
    /// Build the schedule from the exact gap profile of this instance.
    #[arg(long, conflicts_with = "center")]
    exact: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    resolution: u32,
    #[command(flatten)]
    force: ForceArgs,
    /// Also export discrete angles for this total time.
    #[arg(long = "T")]
    total_time: Option<f64>,
    #[arg(long, default_value_t = 0.125)]
    step: f64,
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value = "linear")]
    schedule: String,
    #[arg(long = "T")]
    total_time: f64,
    #[arg(long, default_value_t = 0.125)]
    step: f64,
    #[arg(long, default_value_t = 2)]
    order: u8,
    #[command(flatten)]
    force: ForceArgs,
}

#[derive(Args, Debug, Serialize)]
struct SpectrumArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Coarse grid has `2^resolution + 1` points.
    #[arg(long, default_value_t = 5)]
    resolution: u32,
    /// Also dump the full spectrum at these schedule values.
    #[arg(long = "at", value_delimiter = ',')]
    at: Vec<f64>,
}

#[derive(Args, Debug, Serialize)]
struct BenchArgs {
    /// Directory written by `mine`, or any directory of instance files.
    #[arg(long)]
    dir: PathBuf,
    /// Full comparison configuration as JSON; flags below are ignored when set.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "T", value_delimiter = ',', default_values_t = [128.0, 256.0, 512.0, 1024.0])]
    t_list: Vec<f64>,
    #[arg(long, default_value_t = 0.125)]
    step: f64,
    #[arg(long, default_value_t = 0.005)]
    cutoff: f64,
    #[arg(long, default_value_t = geoanneal::fluctuations::DEFAULT_MAX_CANDIDATES)]
    max_candidates: usize,
    /// Trotter order of the adaptive arm.
    #[arg(long, default_value_t = 1)]
    adaptive_order: u8,
    /// Add the arm centred on the exact gap minimum.
    #[arg(long)]
    ideal: bool,
    #[command(flatten)]
    force: ForceArgs,
    /// Worker threads for the instance fan-out.
    #[arg(long)]
    jobs: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            report_error("usage", &e.to_string());
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report_error(error_kind(&e), &format!("{e:#}"));
            ExitCode::FAILURE
        }
    }
}

fn report_error(kind: &str, message: &str) {
    eprintln!(
        "{}",
        json!({ "error": kind, "message": message.trim_end() })
    );
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    if let Some(err) = e.downcast_ref::<geoanneal::Error>() {
        err.kind()
    } else if e.downcast_ref::<std::io::Error>().is_some() {
        "io"
    } else if e.downcast_ref::<serde_json::Error>().is_some() {
        "json"
    } else {
        "usage"
    }
}

fn run(cli: &Cli) -> Result<()> {
    let out = &cli.out_dir;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let (name, config) = match &cli.command {
        Command::Generate(a) => ("generate", serde_json::to_value(a)?),
        Command::Mine(a) => ("mine", serde_json::to_value(a)?),
        Command::Meanfield(a) => ("meanfield", serde_json::to_value(a)?),
        Command::Fluct(a) => ("fluct", serde_json::to_value(a)?),
        Command::Schedule(a) => ("schedule", serde_json::to_value(a)?),
        Command::Simulate(a) => ("simulate", serde_json::to_value(a)?),
        Command::Spectrum(a) => ("spectrum", serde_json::to_value(a)?),
        Command::Bench(a) => ("bench", serde_json::to_value(a)?),
    };
    let written = match &cli.command {
        Command::Generate(a) => cmd_generate(a, out)?,
        Command::Mine(a) => cmd_mine(a, out)?,
        Command::Meanfield(a) => cmd_meanfield(a, out)?,
        Command::Fluct(a) => cmd_fluct(a, out)?,
        Command::Schedule(a) => cmd_schedule(a, out)?,
        Command::Simulate(a) => cmd_simulate(a, out)?,
        Command::Spectrum(a) => cmd_spectrum(a, out)?,
        Command::Bench(a) => cmd_bench(a, out)?,
    };
    if cli.manifest {
        let manifest = json!({
            "command": name,
            "version": env!("CARGO_PKG_VERSION"),
            "out_dir": out,
            "config": config,
            "outputs": written,
        });
        write_json(&out.join(format!("{name}-manifest.json")), &manifest)?;
    }
    for path in &written {
        println!("{}", path.display());
    }
    Ok(())
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn load_instance(path: &Path) -> Result<IsingInstance> {
    IsingInstance::load(path).with_context(|| format!("loading instance {}", path.display()))
}

/// `linear`, `geodesic:<center>` or the path of a `(u, s)` CSV.
fn load_schedule(spec: &str, force: &ForceArgs) -> Result<ScheduleFunction> {
    if spec == "linear" {
        return Ok(linear_schedule());
    }
    if let Some(c) = spec.strip_prefix("geodesic:") {
        let center: f64 = c
            .parse()
            .with_context(|| format!("bad centre in schedule spec {spec:?}"))?;
        return Ok(solve_geodesic(&force.params(center))?);
    }
    let path = Path::new(spec);
    if !path.is_file() {
        bail!("schedule {spec:?} is neither a known schedule nor an existing file");
    }
    let id = path
        .file_stem()
        .map_or_else(|| spec.to_string(), |s| s.to_string_lossy().into_owned());
    Ok(ScheduleFunction::read_csv(id, path)?)
}

fn thread_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        if j == 0 {
            bail!("--jobs must be at least 1");
        }
        builder = builder.num_threads(j);
    }
    Ok(builder.build()?)
}

fn cmd_generate(a: &GenerateArgs, out: &Path) -> Result<Vec<PathBuf>> {
    if let Some(sat) = &a.sat {
        let text = fs::read_to_string(sat).with_context(|| format!("reading {}", sat.display()))?;
        let stem = sat
            .file_stem()
            .map_or("sat".into(), |s| s.to_string_lossy().into_owned());
        let inst = map_clauses_to_ising(&parse_max2sat(&text)?)?.with_label(stem.clone());
        let path = out.join(format!("{stem}.json"));
        inst.save(&path)?;
        return Ok(vec![path]);
    }
    let n = a.n.context("--n is required")?;
    if a.count == 0 {
        bail!("--count must be at least 1");
    }
    let mut written = Vec::new();
    for seed in a.seed..a.seed + a.count {
        let inst = generate_sk(n, seed)?;
        let path = out.join(format!("sk-n{n}-seed{seed}.json"));
        inst.save(&path)?;
        written.push(path);
    }
    Ok(written)
}

fn cmd_mine(a: &MineArgs, out: &Path) -> Result<Vec<PathBuf>> {
    let cfg = MiningConfig {
        frustration_threshold: a.frustration_threshold,
        screening_time: a.total_time,
        p_cutoff: a.cutoff,
        trotter_step: a.step,
        mf_tol: a.tol,
        ..MiningConfig::new(a.n, a.pool, a.seed)
    };
    cfg.validate()?;
    let outcome = thread_pool(a.jobs)?.install(|| mine_hard_instances(&cfg))?;
    let dir = out.join(&a.name);
    fs::create_dir_all(&dir)?;
    let mut written = Vec::new();
    let mut listing = Vec::new();
    for (k, m) in outcome.instances.iter().enumerate() {
        let label = m
            .instance
            .label
            .clone()
            .unwrap_or_else(|| format!("instance-{k}"));
        let path = dir.join(format!("{label}.json"));
        m.instance.save(&path)?;
        listing.push(json!({ "file": format!("{label}.json"), "min_magnetization": m.min_magnetization, "p_lin": m.p_lin }));
        written.push(path);
    }
    let manifest = dir.join(MINING_MANIFEST);
    write_json(
        &manifest,
        &json!({ "config": outcome.config, "stats": outcome.stats, "instances": listing }),
    )?;
    written.push(manifest);
    Ok(written)
}

fn cmd_meanfield(a: &MeanfieldArgs, out: &Path) -> Result<Vec<PathBuf>> {
    let inst = load_instance(&a.instance)?;
    let sched = load_schedule(&a.schedule, &a.force)?;
    let traj = integrate_meanfield(&inst, &sched, a.total_time, a.tol)?;
    let report = frustration_report(&traj);
    let csv = out.join("meanfield.csv");
    traj.write_csv(&csv)?;
    let summary = out.join("frustration.json");
    let final_nz: Vec<f64> = traj.final_spins().iter().map(|n| n[2]).collect();
    write_json(
        &summary,
        &json!({
            "T": a.total_time,
            "schedule": sched.id,
            "final_nz": final_nz,
            "sigma_star": traj.sigma_star,
            "unresolved": traj.unresolved,
            "norm_drift": traj.norm_drift(),
            "min_magnetization": report.min_magnetization(),
            "frustration": report,
        }),
    )?;
    Ok(vec![csv, summary])
}

fn cmd_fluct(a: &FluctArgs, out: &Path) -> Result<Vec<PathBuf>> {
    let inst = load_instance(&a.instance)?;
    let sched = load_schedule(&a.schedule, &a.force)?;
    let traj = integrate_meanfield(&inst, &sched, a.total_time, a.tol)?;
    let record = evolve_statistical_function(&inst, &traj, a.tol)?;
    let candidates = detect_bottlenecks(
        &record,
        &frustration_report(&traj),
        a.max_candidates,
        &PeakOptions::default(),
    )?;
    let csv = out.join("fluct.csv");
    record.write_csv(&csv)?;
    let cand = out.join("candidates.json");
    write_candidates_json(&candidates, &cand)?;
    let diag = out.join("fluct-diagnostics.json");
    write_json(
        &diag,
        &json!({
            "spectrum_deviation": record.spectrum_deviation,
            "hermiticity_deviation": record.hermiticity_deviation,
            "min_diagonal": record.min_diagonal,
            "spectrum_warning": record.spectrum_warning,
        }),
    )?;
    Ok(vec![csv, cand, diag])
}

fn cmd_schedule(a: &ScheduleArgs, out: &Path) -> Result<Vec<PathBuf>> {
    let sched = match (&a.exact, a.center) {
        (Some(path), _) => {
            exact_christoffel_schedule(&gap_profile(&load_instance(path)?, a.resolution)?)?
        }
        (None, Some(c)) => solve_geodesic(&a.force.params(c))?,
        (None, None) => bail!("either --center or --exact is required"),
    };
    let csv = out.join("schedule.csv");
    sched.write_csv(&csv)?;
    let (u_min, slope_min) = sched.slope_minimum();
    let summary = out.join("schedule.json");
    write_json(
        &summary,
        &json!({ "id": sched.id, "slope_minimum_u": u_min, "slope_minimum_s": slope_min }),
    )?;
    let mut written = vec![csv, summary];
    if let Some(t) = a.total_time {
        let angles = qaoa_angles(&sched, t, layers_for(t, a.step)?)?;
        let path = out.join("angles.json");
        write_json(&path, &angles)?;
        written.push(path);
    }
    Ok(written)
}

fn cmd_simulate(a: &SimulateArgs, out: &Path) -> Result<Vec<PathBuf>> {
    let order = TrotterOrder::from_int(a.order)?;
    let inst = load_instance(&a.instance)?;
    let sched = load_schedule(&a.schedule, &a.force)?;
    let result = Simulator::new(&inst)?.run(&sched, a.total_time, a.step, order)?;
    let path = out.join("result.json");
    result.save(&path)?;
    Ok(vec![path])
}

fn cmd_spectrum(a: &SpectrumArgs, out: &Path) -> Result<Vec<PathBuf>> {
    let inst = load_instance(&a.instance)?;
    let profile = gap_profile(&inst, a.resolution)?;
    let csv = out.join("gap.csv");
    profile.write_csv(&csv)?;
    let summary = out.join("gap.json");
    write_json(
        &summary,
        &json!({ "s_star": profile.s_star, "gap_min": profile.gap_min, "degenerate": profile.degenerate }),
    )?;
    let mut written = vec![csv, summary];
    if !a.at.is_empty() {
        let spectra = a
            .at
            .iter()
            .map(|&s| Ok(json!({ "s": s, "eigenvalues": instantaneous_spectrum(&inst, s, false)?.eigenvalues })))
            .collect::<Result<Vec<_>>>()?;
        let path = out.join("spectrum.json");
        write_json(&path, &spectra)?;
        written.push(path);
    }
    Ok(written)
}

fn bench_config(a: &BenchArgs) -> Result<ComparisonConfig> {
    if let Some(path) = &a.config {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        return Ok(serde_json::from_str(&text)?);
    }
    let mut cfg = ComparisonConfig {
        t_list: a.t_list.clone(),
        trotter_step: a.step,
        cutoff: a.cutoff,
        max_candidates: a.max_candidates,
        gamma0: a.force.gamma0,
        sigma: a.force.sigma,
        shape: a.force.shape.into(),
        ..ComparisonConfig::default()
    };
    cfg.adaptive.order = TrotterOrder::from_int(a.adaptive_order)?;
    if a.ideal {
        cfg.ideal = Some(ArmSpec {
            schedule: ScheduleChoice::Ideal,
            order: cfg.adaptive.order,
        });
    }
    Ok(cfg)
}

fn load_ensemble(dir: &Path) -> Result<Vec<IsingInstance>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| {
        p.extension().is_some_and(|e| e == "json")
            && p.file_name().is_some_and(|f| f != MINING_MANIFEST)
    });
    paths.sort();
    if paths.is_empty() {
        bail!("no instance files in {}", dir.display());
    }
    paths.iter().map(|p| load_instance(p)).collect()
}

fn cmd_bench(a: &BenchArgs, out: &Path) -> Result<Vec<PathBuf>> {
    let cfg = bench_config(a)?;
    cfg.validate()?;
    let instances = load_ensemble(&a.dir)?;
    let report: EnsembleReport =
        thread_pool(a.jobs)?.install(|| run_comparison(&instances, &cfg))?;
    let json_path = out.join("report.json");
    report.save_json(&json_path)?;
    let csv = out.join("summary.csv");
    report.write_summary_csv(&csv)?;
    let cfg_path = out.join("bench-config.json");
    write_json(&cfg_path, &cfg)?;
    Ok(vec![json_path, csv, cfg_path])
}
