//! The subcommands. Each one validates its inputs, writes the manifest, then
//! computes and writes its artifacts.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use nsk_core::acceptance::{self, Level};
use nsk_core::asymptotics::{self, AsymptoticMoments, ErrorVerdict};
use nsk_core::besov::{self, DyadicPartition, NormSpec, TimeNormAccumulator};
use nsk_core::linear;
use nsk_core::ops;
use nsk_core::snapshot::Snapshot;
use nsk_core::solver::{
    self, build_initial_data, simulate, GevreyTracker, InitialData, MomentAccumulator, NormTarget, Observer, Stepper,
    Trajectory, CL_COMPONENTS,
};
use nsk_core::{NskError, State};
use serde::Serialize;

use crate::config::{C0Policy, ConfigError, ExperimentConfig, NormEntry};
use crate::output::{fmt_f64, write_json, Manifest, Table};

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Input(String),
    Io(io::Error),
    Core(NskError),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Input(s) => write!(f, "input error: {s}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<NskError> for CliError {
    fn from(e: NskError) -> Self {
        CliError::Core(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// How a completed command ended.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Complete,
    Aborted(String),
    Fail(String),
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        match self {
            Outcome::Complete => 0,
            Outcome::Aborted(_) => 2,
            Outcome::Fail(_) => 3,
        }
    }
}

pub struct Context {
    pub config: ExperimentConfig,
    pub out: PathBuf,
    pub seed: u64,
}

impl Context {
    /// Creates the output directory and writes the manifest and the
    /// effective config before any computation.
    fn start(&self, subcommand: &str, inputs: &[PathBuf], extra: serde_json::Value) -> CliResult<()> {
        fs::create_dir_all(&self.out)?;
        let mut config = serde_json::to_value(&self.config).map_err(io::Error::other)?;
        config["seed"] = self.seed.into();
        if let (Some(obj), serde_json::Value::Object(more)) = (config.as_object_mut(), extra) {
            obj.insert("arguments".into(), serde_json::Value::Object(more));
        }
        Manifest::new(subcommand, self.seed, config, inputs)?.write(&self.out.join("manifest.json"))?;
        let mut effective = self.config.clone();
        effective.seed = self.seed;
        write_json(&self.out.join("config.json"), &effective)?;
        Ok(())
    }
}

fn no_args() -> serde_json::Value {
    serde_json::Value::Object(Default::default())
}

// ---------------------------------------------------------------- linear-verify

#[derive(Serialize)]
struct LinearVerifyReport {
    #[serde(flatten)]
    report: linear::LinearReport,
    samples: usize,
    pass: bool,
}

pub fn linear_verify(ctx: &Context) -> CliResult<Outcome> {
    let params = ctx.config.linear_params()?;
    ctx.start("linear-verify", &[], no_args())?;
    let samples = ctx.config.linear_verify.samples;
    let report = linear::linear_verify(&params, ctx.config.grid.d, samples, ctx.seed)?;
    let pass = report.c0_fit > 0.0
        && report.c_fit.is_finite()
        && report.identity_err_max <= 1e-14
        && report.semigroup_err_max <= 1e-10
        && report.ode_residual_max <= 1e-6;
    write_json(&ctx.out.join("linear_verify.json"), &LinearVerifyReport { report, samples, pass })?;
    Ok(if pass {
        Outcome::Complete
    } else {
        Outcome::Fail("Green-matrix checks exceeded their tolerances".into())
    })
}

// ---------------------------------------------------------------- simulate

/// Instantaneous norms at a fixed cadence, plus Chemin-Lerner accumulators
/// for entries that carry a time index.
struct Diagnostics {
    entries: Vec<NormEntry>,
    partition: DyadicPartition,
    dxi: f64,
    every: usize,
    rows: Vec<Vec<f64>>,
    time_norms: Vec<Option<TimeNormAccumulator>>,
}

impl Diagnostics {
    fn new(grid: &nsk_core::Grid, entries: &[NormEntry], every: usize) -> CliResult<Self> {
        let partition = DyadicPartition::new(grid);
        let time_norms = entries
            .iter()
            .map(|e| {
                e.r.map(|_| TimeNormAccumulator::new(e.spec(), partition.j_min(), partition.block_count()))
                    .transpose()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Diagnostics {
            entries: entries.to_vec(),
            dxi: grid.dxi_volume(),
            partition,
            every,
            rows: Vec::new(),
            time_norms,
        })
    }

    /// With `partial`, norms lacking enough samples are left out instead of failing.
    fn chemin_lerner(&self, partial: bool) -> CliResult<BTreeMap<String, f64>> {
        let mut out = BTreeMap::new();
        for (e, acc) in self.entries.iter().zip(&self.time_norms) {
            let Some(acc) = acc else { continue };
            match acc.chemin_lerner() {
                Ok(v) => {
                    out.insert(e.name.clone(), v);
                }
                Err(_) if partial => {}
                Err(err) => return Err(err.into()),
            }
        }
        Ok(out)
    }
}

impl Observer for Diagnostics {
    fn observe(&mut self, state: &State, step: usize) -> nsk_core::Result<()> {
        if step % self.every != 0 {
            return Ok(());
        }
        let mut row = vec![state.t, ops::moment(&state.a)];
        for (e, acc) in self.entries.iter().zip(self.time_norms.iter_mut()) {
            let mags = solver::target_magnitudes(state, e.target);
            let blocks = self.partition.block_norms(&mags, e.p, self.dxi);
            row.push(besov::besov_from_blocks(&blocks, self.partition.j_min(), e.s, e.sigma));
            if let Some(acc) = acc {
                acc.push(state.t, &blocks)?;
            }
        }
        self.rows.push(row);
        Ok(())
    }
}

#[derive(Serialize)]
struct AbortInfo {
    t: f64,
    reason: String,
    snapshot: String,
}

#[derive(Serialize)]
struct SimulateSummary {
    status: &'static str,
    abort: Option<AbortInfo>,
    steps: usize,
    t_end: f64,
    mass_initial: f64,
    mass_drift: f64,
    mass_tolerance: f64,
    mass_ok: bool,
    wrap_max: f64,
    wrap_threshold: f64,
    wrap_within_threshold: bool,
    data_norms: solver::DataNorms,
    chemin_lerner: BTreeMap<String, f64>,
}

struct Run {
    data: InitialData,
    traj: Trajectory,
}

/// Writes the snapshots, `snapshots.csv` and, on abort, `abort.nskfld`.
fn write_trajectory(out: &Path, traj: &Trajectory) -> CliResult<Option<AbortInfo>> {
    let dir = out.join("snapshots");
    fs::create_dir_all(&dir)?;
    let mut index = Table::new(["index", "t", "file"]);
    for (k, s) in traj.snapshots.iter().enumerate() {
        let name = format!("snapshots/snap_{k:04}.nskfld");
        Snapshot::from_state(s).save(&out.join(&name))?;
        index.push(vec![k.to_string(), fmt_f64(s.t), name]);
    }
    index.write(&out.join("snapshots.csv"))?;
    match &traj.abort {
        Some(a) => {
            Snapshot::from_state(&a.state).save(&out.join("abort.nskfld"))?;
            Ok(Some(AbortInfo {
                t: a.t,
                reason: a.reason.clone(),
                snapshot: "abort.nskfld".into(),
            }))
        }
        None => Ok(None),
    }
}

fn summarize(run: &Run, diag: &Diagnostics, abort: Option<AbortInfo>, cfg: &ExperimentConfig) -> CliResult<SimulateSummary> {
    let mass0 = run.traj.mass.first().copied().unwrap_or(0.0);
    let tol = 1e-10 * mass0.abs().max(1.0);
    let drift = run.traj.mass_drift();
    Ok(SimulateSummary {
        status: if abort.is_some() { "aborted" } else { "complete" },
        abort,
        steps: run.traj.times.len().saturating_sub(1),
        t_end: run.traj.times.last().copied().unwrap_or(0.0),
        mass_initial: mass0,
        mass_drift: drift,
        mass_tolerance: tol,
        mass_ok: drift <= tol,
        wrap_max: run.traj.wrap_max,
        wrap_threshold: cfg.time.wrap_threshold,
        wrap_within_threshold: run.traj.wrap_max <= cfg.time.wrap_threshold,
        data_norms: run.data.norms,
        chemin_lerner: diag.chemin_lerner(run.traj.abort.is_some())?,
    })
}

fn diagnostics_table(diag: &Diagnostics) -> Table {
    let mut header = vec!["t".to_string(), "mass".to_string()];
    header.extend(diag.entries.iter().map(|e| e.name.clone()));
    let mut t = Table::new(header);
    for r in &diag.rows {
        t.push_numbers(r);
    }
    t
}

pub fn simulate_cmd(ctx: &Context) -> CliResult<Outcome> {
    let cfg = &ctx.config;
    let grid = cfg.build_grid()?;
    let params = cfg.linear_params()?;
    ctx.start("simulate", &[], no_args())?;
    let data = build_initial_data(&grid, &cfg.initial, ctx.seed)?;
    let stepper = Stepper::new(&grid, &params, &cfg.pressure, &cfg.time)?;
    let mut diag = Diagnostics::new(&grid, &cfg.norms, cfg.norm_every)?;
    let mut moments = MomentAccumulator::new(grid.dim(), params.kappa, &cfg.pressure, cfg.moment_every);
    let traj = {
        let mut obs: [&mut dyn Observer; 2] = [&mut diag, &mut moments];
        simulate(&data.state, &stepper, &cfg.time, &mut obs)?
    };
    let abort = write_trajectory(&ctx.out, &traj)?;
    diagnostics_table(&diag).write(&ctx.out.join("diagnostics.csv"))?;
    let am = if moments.times.len() >= 2 {
        AsymptoticMoments::from_data(&data).with_integrals(&moments)?
    } else {
        AsymptoticMoments::from_data(&data)
    };
    write_json(&ctx.out.join("moments.json"), &am)?;
    let run = Run { data, traj };
    let summary = summarize(&run, &diag, abort, cfg)?;
    write_json(&ctx.out.join("summary.json"), &summary)?;
    if let Some(a) = &summary.abort {
        return Ok(Outcome::Aborted(format!("t = {}: {}", a.t, a.reason)));
    }
    if !summary.mass_ok {
        return Ok(Outcome::Fail(format!(
            "mass drift {:.3e} exceeds {:.3e}",
            summary.mass_drift, summary.mass_tolerance
        )));
    }
    Ok(Outcome::Complete)
}

// ---------------------------------------------------------------- norms

/// Snapshots of a trajectory directory written by `simulate`, in time order.
fn load_trajectory(dir: &Path) -> CliResult<Vec<State>> {
    let index = dir.join("snapshots.csv");
    let mut rd = csv::Reader::from_path(&index).map_err(|e| CliError::Input(format!("{}: {e}", index.display())))?;
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let file = rec
            .get(2)
            .ok_or_else(|| CliError::Input(format!("{}: missing file column", index.display())))?;
        out.push(Snapshot::load(&dir.join(file))?.to_state()?);
    }
    if out.is_empty() {
        return Err(CliError::Input(format!("{} lists no snapshots", index.display())));
    }
    Ok(out)
}

fn norm_of(state: &State, e: &NormEntry) -> CliResult<f64> {
    let mags = solver::target_magnitudes(state, e.target);
    Ok(besov::besov_norm_of_magnitudes(state.grid(), &mags, &NormSpec::new(e.s, e.p, e.sigma))?)
}

fn time_norm(states: &[State], e: &NormEntry) -> CliResult<f64> {
    let grid = states[0].grid();
    let part = DyadicPartition::new(grid);
    let mut acc = TimeNormAccumulator::new(e.spec(), part.j_min(), part.block_count())?;
    for s in states {
        let mags = solver::target_magnitudes(s, e.target);
        acc.push(s.t, &part.block_norms(&mags, e.p, grid.dxi_volume()))?;
    }
    Ok(acc.chemin_lerner()?)
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn norms_cmd(ctx: &Context, input: Option<PathBuf>) -> CliResult<Outcome> {
    let cfg = &ctx.config;
    let input = input
        .or_else(|| cfg.input.clone())
        .ok_or_else(|| ConfigError::new("input", "norms needs a snapshot file or trajectory directory"))?;
    if cfg.norms.is_empty() {
        return Err(ConfigError::new("norms", "no norms requested").into());
    }
    let is_dir = input.is_dir();
    if !is_dir {
        if let Some((k, _)) = cfg.norms.iter().enumerate().find(|(_, e)| e.r.is_some()) {
            return Err(ConfigError::new(format!("norms[{k}].r"), "time norms need a trajectory directory").into());
        }
    }
    ctx.start("norms", &[input.clone()], serde_json::json!({ "input": input.display().to_string() }))?;
    let states = if is_dir {
        load_trajectory(&input)?
    } else {
        vec![Snapshot::load(&input)?.to_state()?]
    };
    let last = states.last().expect("non-empty");
    let mut table = Table::new(["name", "s", "p", "sigma", "r", "value"]);
    for e in &cfg.norms {
        let value = match e.r {
            Some(_) => time_norm(&states, e)?,
            None => norm_of(last, e)?,
        };
        table.push(vec![e.name.clone(), fmt_f64(e.s), fmt_f64(e.p), fmt_f64(e.sigma), opt(e.r), fmt_f64(value)]);
    }
    table.write(&ctx.out.join("norms.csv"))?;
    Ok(Outcome::Complete)
}

// ---------------------------------------------------------------- decay-fit

#[derive(Serialize)]
struct DecayFitReport {
    name: String,
    slope: f64,
    intercept: f64,
    residual: f64,
    points: usize,
    window: [f64; 2],
    target: Option<f64>,
    tolerance: f64,
    pass: Option<bool>,
}

fn parse_number(s: &str, what: &str) -> CliResult<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| CliError::Input(format!("{what}: {s:?} is not a number")))
}

/// Reads `(t, value)` columns of a CSV file with a header row.
fn read_series(path: &Path, time_col: &str, value_col: Option<&str>) -> CliResult<(String, Vec<f64>, Vec<f64>)> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let headers = rd.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let ti = find(time_col).ok_or_else(|| CliError::Input(format!("{}: no column {time_col:?}", path.display())))?;
    let (vi, name) = match value_col {
        Some(c) => (
            find(c).ok_or_else(|| CliError::Input(format!("{}: no column {c:?}", path.display())))?,
            c.to_string(),
        ),
        None => {
            let i = (0..headers.len())
                .find(|&i| i != ti)
                .ok_or_else(|| CliError::Input(format!("{}: no value column", path.display())))?;
            (i, headers[i].trim().to_string())
        }
    };
    let (mut ts, mut vs) = (Vec::new(), Vec::new());
    for (line, rec) in rd.records().enumerate() {
        let rec = rec?;
        let what = format!("{} row {}", path.display(), line + 2);
        ts.push(parse_number(rec.get(ti).unwrap_or(""), &what)?);
        vs.push(parse_number(rec.get(vi).unwrap_or(""), &what)?);
    }
    Ok((name, ts, vs))
}

pub fn decay_fit_cmd(ctx: &Context, input: Option<PathBuf>) -> CliResult<Outcome> {
    let f = &ctx.config.decay_fit;
    let input = input
        .or_else(|| f.input.clone())
        .ok_or_else(|| ConfigError::new("decay_fit.input", "decay-fit needs a CSV input"))?;
    let (name, ts, vs) = read_series(&input, &f.time_column, f.column.as_deref())?;
    let t_max = ts.iter().cloned().fold(0.0, f64::max);
    let window = f.window.unwrap_or([0.1 * t_max, t_max]);
    ctx.start("decay-fit", &[input.clone()], serde_json::json!({ "input": input.display().to_string() }))?;
    let fit = asymptotics::decay_fit(&ts, &vs, (window[0], window[1]))?;
    let pass = f.target.map(|t| (fit.slope - t).abs() <= f.tolerance);
    write_json(
        &ctx.out.join("decay_fit.json"),
        &DecayFitReport {
            name,
            slope: fit.slope,
            intercept: fit.intercept,
            residual: fit.residual,
            points: fit.points,
            window,
            target: f.target,
            tolerance: f.tolerance,
            pass,
        },
    )?;
    Ok(match pass {
        Some(false) => Outcome::Fail(format!("slope {:.4} misses the target {:?}", fit.slope, f.target)),
        _ => Outcome::Complete,
    })
}

// ---------------------------------------------------------------- asymptotics

#[derive(Serialize)]
struct ErrorSample {
    t: f64,
    error: f64,
}

#[derive(Serialize)]
struct NamedFit {
    name: String,
    slope: f64,
    target: f64,
    residual: f64,
    pass: bool,
}

#[derive(Serialize)]
struct AsymptoticsReport {
    s: f64,
    p: f64,
    moments: AsymptoticMoments,
    weighted_error_series: Vec<ErrorSample>,
    verdict: ErrorVerdict,
    decay_fits: Vec<NamedFit>,
    pass: bool,
}

pub struct AsymptoticsArgs {
    pub traj: PathBuf,
    pub s: Option<f64>,
    pub p: Option<f64>,
    /// A `.json` path names the report file; anything else is a directory.
    pub out: Option<PathBuf>,
}

pub fn asymptotics_cmd(ctx: &Context, args: &AsymptoticsArgs) -> CliResult<Outcome> {
    let traj_cfg = ExperimentConfig::load(&args.traj.join("config.json"))
        .map_err(|e| CliError::Input(format!("{}: {e}", args.traj.join("config.json").display())))?;
    let mut cfg = ctx.config.clone();
    cfg.asymptotics.s = args.s.unwrap_or(cfg.asymptotics.s);
    cfg.asymptotics.p = args.p.unwrap_or(cfg.asymptotics.p);
    cfg.grid = traj_cfg.grid.clone();
    cfg.validate()?;
    let (s, p, tol) = (cfg.asymptotics.s, cfg.asymptotics.p, cfg.asymptotics.tolerance);
    let params = traj_cfg.linear_params()?;

    let (dir, report_path) = match &args.out {
        Some(o) if o.extension().is_some_and(|e| e == "json") => {
            (o.parent().map(Path::to_path_buf).unwrap_or_default(), o.clone())
        }
        Some(o) => (o.clone(), o.join("report.json")),
        None => (ctx.out.clone(), ctx.out.join("report.json")),
    };
    let dir = if dir.as_os_str().is_empty() { PathBuf::from(".") } else { dir };
    fs::create_dir_all(&dir)?;
    let stem = report_path.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    let mut manifest_cfg = serde_json::to_value(&cfg).map_err(io::Error::other)?;
    manifest_cfg["arguments"] = serde_json::json!({ "traj": args.traj.display().to_string(), "s": s, "p": p });
    Manifest::new("asymptotics", ctx.seed, manifest_cfg, &[args.traj.clone()])?
        .write(&dir.join(format!("{stem}.manifest.json")))?;

    let moments: AsymptoticMoments = serde_json::from_slice(&fs::read(args.traj.join("moments.json"))?)
        .map_err(|e| CliError::Input(format!("moments.json: {e}")))?;
    let states: Vec<State> = load_trajectory(&args.traj)?.into_iter().filter(|u| u.t > 0.0).collect();
    let times: Vec<f64> = states.iter().map(|u| u.t).collect();
    let dens: Vec<_> = states.iter().map(|u| &u.a).collect();
    let errors = asymptotics::asymptotic_error(&times, &dens, &moments, s, p, &params)?;
    let verdict = asymptotics::judge_error_series(&times, &errors)?;

    let t_end = times.last().copied().unwrap_or(0.0);
    let d = moments.dim();
    let b0 = NormSpec::new(0.0, p, 1.0);
    let mut decay_fits = Vec::new();
    for (name, target, which) in [
        ("density", asymptotics::density_decay_exponent(d, p, 0.0), NormTarget::A),
        ("momentum", asymptotics::momentum_decay_exponent(d, p, 0.0), NormTarget::M),
    ] {
        let values = states
            .iter()
            .map(|u| besov::besov_norm_of_magnitudes(u.grid(), &solver::target_magnitudes(u, which), &b0))
            .collect::<Result<Vec<_>, _>>()?;
        let fit = asymptotics::decay_fit(&times, &values, (0.1 * t_end, t_end))?;
        decay_fits.push(NamedFit {
            name: name.into(),
            slope: fit.slope,
            target,
            residual: fit.residual,
            pass: (fit.slope - target).abs() <= tol,
        });
    }
    let pass = verdict.decreased && decay_fits.iter().all(|f| f.pass);
    let report = AsymptoticsReport {
        s,
        p,
        moments,
        weighted_error_series: times.iter().zip(&errors).map(|(&t, &error)| ErrorSample { t, error }).collect(),
        verdict,
        decay_fits,
        pass,
    };
    write_json(&report_path, &report)?;
    Ok(if pass {
        Outcome::Complete
    } else {
        Outcome::Fail("asymptotic comparator or decay fits failed".into())
    })
}

// ---------------------------------------------------------------- gevrey

#[derive(Serialize)]
struct ComponentRow {
    name: &'static str,
    weighted: f64,
    plain: f64,
}

#[derive(Serialize)]
struct GevreyReport {
    status: &'static str,
    c0: f64,
    c0_limit: f64,
    components: Vec<ComponentRow>,
    weighted_total: f64,
    data_norm: f64,
    bound_factor: f64,
    bounded: bool,
    radius_window: [f64; 2],
    radius_ratio: Option<f64>,
    radius_ok: bool,
    wrap_max: f64,
    pass: bool,
}

pub fn gevrey_cmd(ctx: &Context) -> CliResult<Outcome> {
    let cfg = &ctx.config;
    let grid = cfg.build_grid()?;
    let params = cfg.linear_params()?;
    let (ts, xis) = linear::default_fit_grids();
    let (_, c0_limit) = linear::pointwise_bound_fit(&params, &ts, &xis, grid.dim())?;
    let c0 = match cfg.c0 {
        C0Policy::Fit => cfg.c0_safety * c0_limit,
        C0Policy::Value(v) => v,
    };
    let g = &cfg.gevrey;
    let mut tracker = GevreyTracker::new(&grid, c0, c0_limit, g.p, g.sigma, g.every, g.radius_every)
        .map_err(|e| ConfigError::new("c0", e.to_string()))?;
    besov::gevrey_check(&grid, cfg.time.t_final, c0).map_err(|e| ConfigError::new("c0", e.to_string()))?;
    ctx.start("gevrey", &[], serde_json::json!({ "c0": c0, "c0_limit": c0_limit }))?;

    let data = build_initial_data(&grid, &cfg.initial, ctx.seed)?;
    let stepper = Stepper::new(&grid, &params, &cfg.pressure, &cfg.time)?;
    let traj = {
        let mut obs: [&mut dyn Observer; 1] = [&mut tracker];
        simulate(&data.state, &stepper, &cfg.time, &mut obs)?
    };
    let mut series = Table::new(["t", "weighted_norm"]);
    for (t, v) in tracker.times.iter().zip(&tracker.weighted_series) {
        series.push_numbers(&[*t, *v]);
    }
    series.write(&ctx.out.join("gevrey.csv"))?;
    let mut radius = Table::new(["t", "r", "r2_over_t"]);
    let t_end = traj.times.last().copied().unwrap_or(0.0);
    let window = [0.1 * t_end, t_end];
    let mut late = Vec::new();
    let mut missing = false;
    for (t, r) in tracker.radius_times.iter().zip(&tracker.radii) {
        let q = r.map(|r| if *t > 0.0 { r * r / t } else { f64::NAN });
        radius.push(vec![fmt_f64(*t), opt(*r), opt(q)]);
        if *t >= window[0] * (1.0 - 1e-12) && *t > 0.0 {
            match q {
                Some(q) => late.push(q),
                None => missing = true,
            }
        }
    }
    radius.write(&ctx.out.join("radius.csv"))?;

    let weighted = tracker.weighted_components()?;
    let plain = tracker.plain_components()?;
    let total: f64 = weighted.iter().sum();
    let data_norm = data.norms.a0 + data.norms.m0;
    let bounded = total.is_finite() && total <= g.bound_factor * data_norm;
    let radius_ratio = if late.len() >= 2 && !missing {
        let hi = late.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = late.iter().cloned().fold(f64::INFINITY, f64::min);
        Some(hi / lo)
    } else {
        None
    };
    let radius_ok = radius_ratio.is_some_and(|r| r <= 1.5);
    let aborted = traj.abort.is_some();
    if let Some(a) = &traj.abort {
        Snapshot::from_state(&a.state).save(&ctx.out.join("abort.nskfld"))?;
    }
    let report = GevreyReport {
        status: if aborted { "aborted" } else { "complete" },
        c0,
        c0_limit,
        components: CL_COMPONENTS
            .iter()
            .zip(weighted.iter().zip(&plain))
            .map(|(name, (&w, &p))| ComponentRow { name, weighted: w, plain: p })
            .collect(),
        weighted_total: total,
        data_norm,
        bound_factor: g.bound_factor,
        bounded,
        radius_window: window,
        radius_ratio,
        radius_ok,
        wrap_max: traj.wrap_max,
        pass: !aborted && bounded && radius_ok,
    };
    write_json(&ctx.out.join("gevrey.json"), &report)?;
    if let Some(a) = &traj.abort {
        return Ok(Outcome::Aborted(format!("t = {}: {}", a.t, a.reason)));
    }
    Ok(if report.pass {
        Outcome::Complete
    } else {
        Outcome::Fail(format!("weighted norm bounded: {bounded}, radius law: {radius_ok}"))
    })
}

// ---------------------------------------------------------------- acceptance

pub fn acceptance_cmd(ctx: &Context, level: Level) -> CliResult<Outcome> {
    ctx.start("acceptance", &[], serde_json::json!({ "level": level.to_string() }))?;
    let report = acceptance::acceptance_suite(level, ctx.seed, &mut |line| {
        if line.starts_with("criterion") {
            println!("{line}");
        } else {
            eprintln!("{line}");
        }
    });
    write_json(&ctx.out.join("acceptance.json"), &report)?;
    Ok(if report.pass {
        Outcome::Complete
    } else {
        let failed: Vec<String> = report
            .criteria
            .iter()
            .filter(|c| c.status == acceptance::Status::Fail)
            .map(|c| c.id.to_string())
            .collect();
        Outcome::Fail(format!("criteria {} failed", failed.join(", ")))
    })
}
