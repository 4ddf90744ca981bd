//! Run configuration, task dispatch and artifact emission for the `gsls` binary.
//!
//! Settings come from defaults, then an optional `key=value` file, then
//! command-line flags, later sources winning.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::testfns::{L1Norm, NsRosenbrock, Quadratic};
use crate::engine::{gsda_minimize, FitTrace, GsParams, Objective};
use crate::error::{Error, Result};
use crate::io::{self, Column, Dataset, TableColumn};
use crate::minnorm::SubgradientMethod;
use crate::pot::{self, FunctionalSpec, JacobianMode, Lambda, PotOptions};
use crate::quantile::{fit_quantile_additive, QuantileModel};
use crate::smoothing::{AdditiveFit, Bandwidth, Covariate, Factor, SmootherKind, SmootherSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

/// Gradient checks pass below this relative error.
pub const GRADCHECK_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    FitQuantile,
    FitPot,
    Simulate,
    Gradcheck,
    Minimize,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::FitQuantile => "fit-quantile",
            Task::FitPot => "fit-pot",
            Task::Simulate => "simulate",
            Task::Gradcheck => "gradcheck",
            Task::Minimize => "minimize",
        }
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fit-quantile" => Ok(Task::FitQuantile),
            "fit-pot" => Ok(Task::FitPot),
            "simulate" => Ok(Task::Simulate),
            "gradcheck" => Ok(Task::Gradcheck),
            "minimize" => Ok(Task::Minimize),
            other => Err(config_err("task", format!("unknown task `{other}`"))),
        }
    }
}

fn config_err(field: &str, message: impl Into<String>) -> Error {
    Error::Config { field: field.to_string(), message: message.into() }
}

/// A smoother request bound to a column name. `a*b` names the interaction
/// of two factor columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SmootherRequest {
    pub column: String,
    pub kind: SmootherKind,
}

impl FromStr for SmootherRequest {
    type Err = Error;

    /// `<col>=<kind>[:bw=<h>|:df=<d>]` with kind `ll`, `linear` or `cell`.
    fn from_str(s: &str) -> Result<Self> {
        let err = |m: String| config_err("smoother", m);
        let (column, rest) = s.split_once('=').ok_or_else(|| err(format!("expected <col>=<kind>, got `{s}`")))?;
        let mut parts = rest.split(':');
        let kind = parts.next().unwrap_or_default();
        let opt = parts.next();
        if parts.next().is_some() {
            return Err(err(format!("too many options in `{s}`")));
        }
        let num = |v: &str| v.parse::<f64>().map_err(|_| err(format!("bad number `{v}` in `{s}`")));
        let kind = match kind {
            "ll" | "local_linear" => SmootherKind::LocalLinear(match opt.map(|o| o.split_once('=')) {
                None => Bandwidth::RuleOfThumb,
                Some(Some(("bw", v))) => Bandwidth::Fixed(num(v)?),
                Some(Some(("df", v))) => Bandwidth::TargetDf(num(v)?),
                Some(_) => return Err(err(format!("expected bw=.. or df=.. in `{s}`"))),
            }),
            "linear" | "cell" | "cell_factor" if opt.is_some() => {
                return Err(err(format!("`{kind}` takes no options in `{s}`")));
            }
            "linear" => SmootherKind::Linear,
            "cell" | "cell_factor" => SmootherKind::CellFactor,
            other => return Err(err(format!("unknown smoother kind `{other}`"))),
        };
        if column.trim().is_empty() {
            return Err(err(format!("missing column in `{s}`")));
        }
        Ok(Self { column: column.trim().to_string(), kind })
    }
}

/// Which synthetic generator `simulate` runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    Gpd,
    Sales,
    Hetero,
    Sites,
}

impl FromStr for Generator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gpd" => Ok(Generator::Gpd),
            "sales" => Ok(Generator::Sales),
            "hetero" => Ok(Generator::Hetero),
            "sites" => Ok(Generator::Sites),
            other => Err(config_err("generator", format!("unknown generator `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub task: Task,
    pub input: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub response: String,
    pub factors: Vec<String>,
    pub alpha: f64,
    pub levels: Vec<f64>,
    pub exceed_prob: Option<f64>,
    /// Excesses are `y - threshold` over rows with `y > threshold`.
    pub threshold: Option<f64>,
    pub smoothers: Vec<SmootherRequest>,
    pub gs: GsParams,
    pub jacobian: JacobianMode,
    pub generator: Generator,
    pub n: usize,
    pub sigma: f64,
    pub kappa: f64,
    pub days: usize,
    pub hours: usize,
    pub function: String,
    pub x0: Option<Vec<f64>>,
    pub dim: usize,
    pub points: usize,
    pub h: f64,
}

/// Every key accepted in config files and as `--key` flags.
pub const CONFIG_KEYS: [&str; 35] = [
    "task", "input", "output_dir", "response", "factors", "alpha", "levels", "exceed_prob", "threshold",
    "smoother", "m", "eps0", "tau0", "eps_min", "tau_min", "mu", "lambda", "beta", "max_iter",
    "max_backtracks", "seed", "mode", "parallel", "jacobian", "generator", "n", "sigma", "kappa", "days",
    "hours", "function", "x0", "dim", "points", "h",
];

fn parse_field<T: FromStr>(field: &str, v: &str) -> Result<T> {
    v.trim().parse::<T>().map_err(|_| config_err(field, format!("cannot parse `{v}`")))
}

fn parse_list(field: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|p| parse_field(field, p)).collect()
}

impl RunConfig {
    pub fn defaults(task: Task) -> Self {
        let gs = match task {
            Task::Minimize => GsParams::default(),
            _ => GsParams::additive(),
        };
        Self {
            task,
            input: None,
            output_dir: PathBuf::from("out"),
            response: "y".into(),
            factors: Vec::new(),
            alpha: 0.5,
            levels: vec![0.01],
            exceed_prob: None,
            threshold: None,
            smoothers: Vec::new(),
            gs,
            jacobian: JacobianMode::Common,
            generator: Generator::Gpd,
            n: 1000,
            sigma: 2.0,
            kappa: 0.2,
            days: 7 * 20,
            hours: 12,
            function: "nsrosenbrock".into(),
            x0: None,
            dim: 2,
            points: 100,
            h: 1e-6,
        }
    }

    /// Builds a configuration from merged `key=value` settings.
    pub fn from_map(task: Task, map: &BTreeMap<String, String>) -> Result<Self> {
        let mut c = Self::defaults(task);
        if let Some(t) = map.get("task") {
            if t.parse::<Task>()? != task {
                log::warn!("config task `{t}` ignored in favour of `{}`", task.as_str());
            }
        }
        for (k, v) in map {
            let f = k.as_str();
            match f {
                "task" => {}
                "input" => c.input = Some(PathBuf::from(v)),
                "output_dir" => c.output_dir = PathBuf::from(v),
                "response" => c.response = v.clone(),
                "factors" => {
                    c.factors = v.split([',', ';']).map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
                }
                "alpha" => c.alpha = parse_field(f, v)?,
                "levels" => c.levels = parse_list(f, v)?,
                "exceed_prob" => c.exceed_prob = Some(parse_field(f, v)?),
                "threshold" => c.threshold = Some(parse_field(f, v)?),
                "smoother" => {
                    c.smoothers = v.split(';').filter(|s| !s.trim().is_empty()).map(str::parse).collect::<Result<_>>()?
                }
                "m" => c.gs.m = Some(parse_field(f, v)?),
                "eps0" => c.gs.eps0 = parse_field(f, v)?,
                "tau0" => c.gs.tau0 = parse_field(f, v)?,
                "eps_min" => c.gs.eps_min = parse_field(f, v)?,
                "tau_min" => c.gs.tau_min = parse_field(f, v)?,
                "mu" => c.gs.mu = parse_field(f, v)?,
                "lambda" => c.gs.lambda = parse_field(f, v)?,
                "beta" => c.gs.beta = parse_field(f, v)?,
                "max_iter" => c.gs.max_iter = parse_field(f, v)?,
                "max_backtracks" => c.gs.max_backtracks = parse_field(f, v)?,
                "seed" => c.gs.seed = parse_field(f, v)?,
                "mode" => c.gs.subgradient_mode = v.parse::<SubgradientMethod>().map_err(|e| config_err(f, e.to_string()))?,
                "parallel" => c.gs.parallel = parse_field(f, v)?,
                "jacobian" => {
                    c.jacobian = match v.as_str() {
                        "common" => JacobianMode::Common,
                        "per-sample" | "per_sample" => JacobianMode::PerSample,
                        other => return Err(config_err(f, format!("expected common or per-sample, got `{other}`"))),
                    }
                }
                "generator" => c.generator = v.parse()?,
                "n" => c.n = parse_field(f, v)?,
                "sigma" => c.sigma = parse_field(f, v)?,
                "kappa" => c.kappa = parse_field(f, v)?,
                "days" => c.days = parse_field(f, v)?,
                "hours" => c.hours = parse_field(f, v)?,
                "function" => c.function = v.clone(),
                "x0" => c.x0 = Some(parse_list(f, v)?),
                "dim" => c.dim = parse_field(f, v)?,
                "points" => c.points = parse_field(f, v)?,
                "h" => c.h = parse_field(f, v)?,
                other => return Err(config_err(other, "unknown setting")),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.gs.validate()?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(config_err("alpha", format!("must lie in (0, 1), got {}", self.alpha)));
        }
        if self.levels.is_empty() || self.levels.len() > 2 {
            return Err(config_err("levels", "give one level (return level and shortfall) or two levels"));
        }
        if self.levels.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
            return Err(config_err("levels", "tail levels must lie in (0, 1)"));
        }
        if let Some(p) = self.exceed_prob {
            if !(p > 0.0 && p <= 1.0) {
                return Err(config_err("exceed_prob", format!("must lie in (0, 1], got {p}")));
            }
        }
        if !(self.h > 0.0) {
            return Err(config_err("h", "finite-difference step must be positive"));
        }
        Ok(())
    }

    /// Functional pair given the exceedance probability in force.
    pub fn functional_spec(&self, exceed_prob: f64) -> FunctionalSpec {
        match self.levels[..] {
            [a] => FunctionalSpec::var_es(a, exceed_prob),
            [a, b, ..] => FunctionalSpec::var_var(a, b, exceed_prob),
            [] => unreachable!("validated"),
        }
    }
}

/// Command-line flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Input CSV file.
    #[arg(long)]
    pub input: Option<String>,
    /// Directory receiving the output tables.
    #[arg(long)]
    pub output_dir: Option<String>,
    /// key=value configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Response column name.
    #[arg(long)]
    pub response: Option<String>,
    /// Comma-separated factor columns.
    #[arg(long)]
    pub factors: Option<String>,
    /// Quantile level.
    #[arg(long)]
    pub alpha: Option<String>,
    /// One or two comma-separated tail levels.
    #[arg(long)]
    pub levels: Option<String>,
    /// Threshold exceedance probability.
    #[arg(long)]
    pub exceed_prob: Option<String>,
    /// Threshold subtracted from the response; rows at or below it are dropped.
    #[arg(long)]
    pub threshold: Option<String>,
    /// `<col>=<kind>[:bw=..|df=..]`, repeatable.
    #[arg(long)]
    pub smoother: Vec<String>,
    #[arg(long)]
    pub m: Option<String>,
    #[arg(long)]
    pub eps0: Option<String>,
    #[arg(long)]
    pub tau0: Option<String>,
    #[arg(long)]
    pub eps_min: Option<String>,
    #[arg(long)]
    pub tau_min: Option<String>,
    #[arg(long)]
    pub mu: Option<String>,
    #[arg(long)]
    pub lambda: Option<String>,
    #[arg(long)]
    pub beta: Option<String>,
    #[arg(long)]
    pub max_iter: Option<String>,
    #[arg(long)]
    pub max_backtracks: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// `qp` or `average`.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub parallel: Option<String>,
    /// `common` or `per-sample`.
    #[arg(long)]
    pub jacobian: Option<String>,
    /// Simulation generator: gpd, sales, hetero or sites.
    #[arg(long)]
    pub generator: Option<String>,
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long)]
    pub sigma: Option<String>,
    #[arg(long)]
    pub kappa: Option<String>,
    #[arg(long)]
    pub days: Option<String>,
    #[arg(long)]
    pub hours: Option<String>,
    /// Built-in objective for `minimize`: nsrosenbrock, quadratic or l1.
    #[arg(long)]
    pub function: Option<String>,
    /// Comma-separated starting point for `minimize`.
    #[arg(long)]
    pub x0: Option<String>,
    #[arg(long)]
    pub dim: Option<String>,
    /// Number of random points for `gradcheck`.
    #[arg(long)]
    pub points: Option<String>,
    /// Finite-difference step for `gradcheck`.
    #[arg(long)]
    pub h: Option<String>,
}

impl CommonArgs {
    fn to_map(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let pairs: [(&str, &Option<String>); 34] = [
            ("input", &self.input),
            ("output_dir", &self.output_dir),
            ("response", &self.response),
            ("factors", &self.factors),
            ("alpha", &self.alpha),
            ("levels", &self.levels),
            ("exceed_prob", &self.exceed_prob),
            ("threshold", &self.threshold),
            ("m", &self.m),
            ("eps0", &self.eps0),
            ("tau0", &self.tau0),
            ("eps_min", &self.eps_min),
            ("tau_min", &self.tau_min),
            ("mu", &self.mu),
            ("lambda", &self.lambda),
            ("beta", &self.beta),
            ("max_iter", &self.max_iter),
            ("max_backtracks", &self.max_backtracks),
            ("seed", &self.seed),
            ("mode", &self.mode),
            ("parallel", &self.parallel),
            ("jacobian", &self.jacobian),
            ("generator", &self.generator),
            ("n", &self.n),
            ("sigma", &self.sigma),
            ("kappa", &self.kappa),
            ("days", &self.days),
            ("hours", &self.hours),
            ("function", &self.function),
            ("x0", &self.x0),
            ("dim", &self.dim),
            ("points", &self.points),
            ("h", &self.h),
            ("task", &None),
        ];
        for (k, v) in pairs {
            if let Some(v) = v {
                m.insert(k.to_string(), v.clone());
            }
        }
        if !self.smoother.is_empty() {
            m.insert("smoother".into(), self.smoother.join(";"));
        }
        m
    }
}

#[derive(Debug, Parser)]
#[command(name = "gsls", version, about = "Gradient-sampling fits of additive quantile and peaks-over-threshold models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Additive quantile regression.
    FitQuantile(CommonArgs),
    /// Additive return-level fit of GPD excesses.
    FitPot(CommonArgs),
    /// Write a synthetic dataset.
    Simulate(CommonArgs),
    /// Finite-difference check of the POT derivatives.
    Gradcheck(CommonArgs),
    /// Minimize a built-in test function.
    Minimize(CommonArgs),
}

impl Command {
    pub fn split(&self) -> (Task, &CommonArgs) {
        match self {
            Command::FitQuantile(a) => (Task::FitQuantile, a),
            Command::FitPot(a) => (Task::FitPot, a),
            Command::Simulate(a) => (Task::Simulate, a),
            Command::Gradcheck(a) => (Task::Gradcheck, a),
            Command::Minimize(a) => (Task::Minimize, a),
        }
    }
}

/// Merges an optional config file under the explicit flags.
pub fn resolve(task: Task, args: &CommonArgs) -> Result<RunConfig> {
    let mut map = match &args.config {
        Some(p) => io::read_key_values(p)?,
        None => BTreeMap::new(),
    };
    map.extend(args.to_map());
    RunConfig::from_map(task, &map)
}

/// Parses arguments, runs the task and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let (task, args) = cli.command.split();
    let result = resolve(task, args).and_then(|cfg| run(&cfg));
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Exit code for a failed run.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidInput(_)
        | Error::Parse { .. }
        | Error::MissingColumn(_)
        | Error::Config { .. }
        | Error::Io(_)
        | Error::DegenerateDesign
        | Error::InfeasiblePoint => EXIT_INPUT,
        Error::NumericalFailure(_)
        | Error::SamplingExhausted { .. }
        | Error::FunctionalUndefined { .. }
        | Error::SingularBlock { .. } => EXIT_NUMERICAL,
    }
}

/// Executes the configured task, writing its artifacts under `output_dir`.
/// Returns the exit code: 0 when converged, 2 otherwise.
pub fn run(cfg: &RunConfig) -> Result<i32> {
    if matches!(cfg.task, Task::FitQuantile | Task::FitPot) && cfg.input.is_none() {
        return Err(config_err("input", "an input file is required"));
    }
    fs::create_dir_all(&cfg.output_dir)?;
    match cfg.task {
        Task::FitQuantile => run_quantile(cfg),
        Task::FitPot => run_pot(cfg),
        Task::Simulate => run_simulate(cfg),
        Task::Gradcheck => run_gradcheck(cfg),
        Task::Minimize => run_minimize(cfg),
    }
}

fn out(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.output_dir.join(name)
}

struct Diagnostics(Vec<(String, String)>);

impl Diagnostics {
    fn new(task: Task) -> Self {
        Self(vec![("task".into(), task.as_str().into())])
    }

    fn put(&mut self, k: impl Into<String>, v: impl ToString) {
        self.0.push((k.into(), v.to_string()));
    }

    fn real(&mut self, k: impl Into<String>, v: f64) {
        self.put(k, io::format_real(v));
    }

    fn trace(&mut self, t: &FitTrace) {
        self.put("converged", t.converged);
        self.real("initial_objective", t.f0);
        self.real("final_objective", t.final_objective());
        self.put("iterations", t.records.len());
        self.put("accepted_steps", t.steps());
        self.put("warnings", t.warnings.len());
        for (i, w) in t.warnings.iter().enumerate() {
            self.put(format!("warning.{i}"), w.replace('\n', " "));
        }
    }

    fn write(&self, path: &Path) -> Result<()> {
        io::write_key_values(path, &self.0)
    }
}

fn write_trace(path: &Path, t: &FitTrace) -> Result<()> {
    let r = &t.records;
    let real = |f: fn(&crate::engine::TraceRecord) -> f64| TableColumn::Real(r.iter().map(f).collect());
    io::write_table(
        path,
        &[
            ("iter".into(), TableColumn::Int(r.iter().map(|x| x.iter as i64).collect())),
            ("event".into(), TableColumn::Text(r.iter().map(|x| x.event.as_str().to_string()).collect())),
            ("accepted".into(), TableColumn::Int(r.iter().map(|x| x.accepted() as i64).collect())),
            ("f".into(), real(|x| x.f)),
            ("g_norm".into(), real(|x| x.g_norm)),
            ("decrease".into(), real(|x| x.decrease)),
            ("eps".into(), real(|x| x.eps)),
            ("tau".into(), real(|x| x.tau)),
            ("t".into(), real(|x| x.t)),
            ("method".into(), TableColumn::Text(r.iter().map(|x| x.method.as_str().to_string()).collect())),
            ("backtracks".into(), TableColumn::Int(r.iter().map(|x| x.backtracks as i64).collect())),
        ],
    )
}

fn load_input(cfg: &RunConfig) -> Result<Dataset> {
    let path = cfg.input.as_ref().ok_or_else(|| config_err("input", "an input file is required"))?;
    let factors: Vec<&str> = cfg.factors.iter().map(String::as_str).collect();
    io::load_csv(path, &cfg.response, &factors)
}

/// Resolves each smoother request to a covariate, forming interactions for
/// `a*b` columns. Spec `j` reads covariate `j`.
fn design(ds: &Dataset, reqs: &[SmootherRequest]) -> Result<(Vec<Covariate>, Vec<SmootherSpec>)> {
    let mut covs = Vec::with_capacity(reqs.len());
    let mut specs = Vec::with_capacity(reqs.len());
    for (j, r) in reqs.iter().enumerate() {
        let cov = if let Some((a, b)) = r.column.split_once('*') {
            match (ds.column(a.trim())?, ds.column(b.trim())?) {
                (Covariate::Factor(fa), Covariate::Factor(fb)) => Covariate::Factor(Factor::interaction(fa, fb)?),
                _ => return Err(config_err("smoother", format!("interaction `{}` needs two factor columns", r.column))),
            }
        } else {
            ds.column(&r.column)?.clone()
        };
        match (&cov, &r.kind) {
            (Covariate::Factor(_), SmootherKind::CellFactor) | (Covariate::Numeric(_), SmootherKind::LocalLinear(_) | SmootherKind::Linear) => {}
            _ => {
                return Err(config_err(
                    "smoother",
                    format!("smoother for `{}` does not match the column type", r.column),
                ))
            }
        }
        covs.push(cov);
        specs.push(SmootherSpec { kind: r.kind.clone(), covariate_index: j });
    }
    Ok((covs, specs))
}

fn data_columns(ds: &Dataset) -> Vec<(String, TableColumn)> {
    let mut cols = vec![(ds.response.clone(), TableColumn::Real(ds.y.clone()))];
    cols.extend(ds.columns.iter().map(|c| (c.name.clone(), TableColumn::from(&c.data))));
    cols
}

fn decomposition_columns(prefix: &str, fit: &AdditiveFit, reqs: &[SmootherRequest]) -> Vec<(String, TableColumn)> {
    let n = fit.fitted.len();
    let mut cols = vec![(format!("{prefix}intercept"), TableColumn::Real(vec![fit.intercept; n]))];
    for (r, c) in reqs.iter().zip(&fit.components) {
        cols.push((format!("{prefix}{}", r.column), TableColumn::Real(c.clone())));
    }
    cols.push((format!("{prefix}fitted"), TableColumn::Real(fit.fitted.clone())));
    cols
}

fn smoother_diagnostics(d: &mut Diagnostics, proj: &crate::smoothing::AdditiveProjector, reqs: &[SmootherRequest]) {
    for (j, r) in reqs.iter().enumerate() {
        d.real(format!("df.{}", r.column), proj.component_df(j));
        if let Some(h) = proj.bandwidth(j) {
            d.real(format!("bandwidth.{}", r.column), h);
        }
    }
}

fn status(t: &FitTrace) -> i32 {
    if t.converged {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    }
}

fn run_quantile(cfg: &RunConfig) -> Result<i32> {
    let ds = load_input(cfg)?;
    let (covs, specs) = design(&ds, &cfg.smoothers)?;
    let model = fit_quantile_additive(&ds.y, &covs, cfg.alpha, &specs, &cfg.gs)?;
    write_quantile_outputs(cfg, &ds, &covs, &model)?;
    Ok(status(&model.trace))
}

fn write_quantile_outputs(cfg: &RunConfig, ds: &Dataset, covs: &[Covariate], model: &QuantileModel) -> Result<()> {
    let mut fitted = data_columns(ds);
    fitted.push(("q".into(), TableColumn::Real(model.q.clone())));
    io::write_table(out(cfg, "fitted.csv"), &fitted)?;
    io::write_table(out(cfg, "decomposition.csv"), &decomposition_columns("", &model.decomposition, &cfg.smoothers))?;
    write_trace(&out(cfg, "trace.csv"), &model.trace)?;

    let mut d = Diagnostics::new(cfg.task);
    d.put("n", ds.n());
    d.put("dropped_rows", ds.dropped);
    d.real("alpha", cfg.alpha);
    d.put("m", cfg.gs.sample_size(ds.n()).0);
    d.put("seed", cfg.gs.seed);
    d.trace(&model.trace);
    d.real("coverage", model.coverage(&ds.y));
    d.real("max_component_mean", model.decomposition.max_component_mean());
    smoother_diagnostics(&mut d, &model.projector, &cfg.smoothers);
    // per-cell coverage for every factor-valued smoother
    for (r, cov) in cfg.smoothers.iter().zip(covs) {
        if let Covariate::Factor(f) = cov {
            let mut hits = vec![0usize; f.levels.len()];
            let mut counts = vec![0usize; f.levels.len()];
            for i in 0..ds.n() {
                counts[f.codes[i]] += 1;
                hits[f.codes[i]] += (ds.y[i] <= model.q[i]) as usize;
            }
            for (l, level) in f.levels.iter().enumerate() {
                if counts[l] > 0 {
                    d.real(format!("coverage.{}.{level}", r.column), hits[l] as f64 / counts[l] as f64);
                }
            }
        }
    }
    d.write(&out(cfg, "diagnostics.txt"))
}

/// Excesses over the configured threshold and the exceedance probability in force.
fn excesses(cfg: &RunConfig, ds: &Dataset) -> Result<(Dataset, f64)> {
    match cfg.threshold {
        Some(u) => {
            let keep: Vec<bool> = ds.y.iter().map(|&v| v > u).collect();
            let mut ex = ds.filter(&keep)?;
            let frac = ex.n() as f64 / ds.n() as f64;
            ex.columns.insert(0, Column { name: ds.response.clone(), data: Covariate::Numeric(ex.y.clone()) });
            for v in &mut ex.y {
                *v -= u;
            }
            ex.response = "excess".into();
            ex.dropped = ds.dropped;
            Ok((ex, cfg.exceed_prob.unwrap_or(frac)))
        }
        None => {
            let p = cfg.exceed_prob.ok_or_else(|| {
                config_err("exceed_prob", "required when the input already holds excesses (no threshold given)")
            })?;
            Ok((ds.clone(), p))
        }
    }
}

fn run_pot(cfg: &RunConfig) -> Result<i32> {
    let raw = load_input(cfg)?;
    let (ds, exceed_prob) = excesses(cfg, &raw)?;
    let spec = cfg.functional_spec(exceed_prob);
    let (covs, specs) = design(&ds, &cfg.smoothers)?;
    let opts = PotOptions { jacobian: cfg.jacobian, start: None };
    let model = pot::fit_pot_additive(&ds.y, &covs, &spec, &specs, &cfg.gs, &opts)?;

    let names = spec.names();
    let lam = &model.state.lambda;
    let mut fitted = data_columns(&ds);
    fitted.push(("sigma".into(), TableColumn::Real(lam.sigma())));
    fitted.push(("kappa".into(), TableColumn::Real(lam.kappa.clone())));
    for (name, th) in names.iter().zip(&model.state.theta) {
        fitted.push((name.to_string(), TableColumn::Real(th.clone())));
    }
    io::write_table(out(cfg, "fitted.csv"), &fitted)?;
    let mut dec = Vec::new();
    for (name, fit) in names.iter().zip(&model.decompositions) {
        dec.extend(decomposition_columns(&format!("{name}."), fit, &cfg.smoothers));
    }
    io::write_table(out(cfg, "decomposition.csv"), &dec)?;
    write_trace(&out(cfg, "trace.csv"), &model.trace)?;

    let (c1, c2) = spec.scale_factors();
    let mut d = Diagnostics::new(cfg.task);
    d.put("n", ds.n());
    d.put("dropped_rows", ds.dropped);
    d.real("exceed_prob", exceed_prob);
    if let Some(u) = cfg.threshold {
        d.real("threshold", u);
    }
    d.put("pair", if c2.is_some() { "var_var" } else { "var_es" });
    d.real("c1", c1);
    if let Some(c2) = c2 {
        d.real("c2", c2);
    }
    d.put("m", cfg.gs.sample_size(2 * ds.n()).0);
    d.put("seed", cfg.gs.seed);
    d.trace(&model.trace);
    d.real("loglik", model.loglik(&ds.y));
    let min_det = model.state.blocks.iter().map(|b| b.jac.det().abs()).fold(f64::INFINITY, f64::min);
    d.real("min_abs_block_det", min_det);
    let mcm = model.decompositions.iter().map(AdditiveFit::max_component_mean).fold(0.0, f64::max);
    d.real("max_component_mean", mcm);
    if c2.is_some() {
        let [a, b] = &model.state.theta;
        // the smaller scale factor is the more extreme level
        let (lo, hi) = if c1 > c2.unwrap_or(c1) { (a, b) } else { (b, a) };
        d.put("crossings", lo.iter().zip(hi).filter(|(l, h)| h <= l).count());
    }
    smoother_diagnostics(&mut d, &model.projector, &cfg.smoothers);
    d.write(&out(cfg, "diagnostics.txt"))?;
    Ok(status(&model.trace))
}

fn run_simulate(cfg: &RunConfig) -> Result<i32> {
    let seed = cfg.gs.seed;
    let ds = match cfg.generator {
        Generator::Gpd => io::simulate_gpd(cfg.n, |_| cfg.sigma, |_| cfg.kappa, seed)?,
        Generator::Sales => io::simulate_sales(cfg.days, cfg.hours, seed)?,
        Generator::Hetero => io::simulate_heteroscedastic(cfg.n, seed)?,
        Generator::Sites => {
            let per_cell = (cfg.n / (55 * io::SITE_SCALES.len())).max(1);
            io::simulate_site_trend(55, per_cell, cfg.kappa, seed)?
        }
    };
    io::write_csv(&ds, out(cfg, "data.csv"))?;
    let mut d = Diagnostics::new(cfg.task);
    d.put("generator", format!("{:?}", cfg.generator).to_lowercase());
    d.put("n", ds.n());
    d.put("seed", seed);
    d.put("response", &ds.response);
    d.write(&out(cfg, "diagnostics.txt"))?;
    Ok(EXIT_OK)
}

/// Random feasible points around the method-of-moments start of `y`.
pub fn gradcheck_points(y: &[f64], count: usize, seed: u64) -> Vec<Lambda> {
    let (s0, k0) = pot::moment_start(y);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = Vec::with_capacity(count);
    while pts.len() < count {
        let eta: Vec<f64> = y.iter().map(|_| s0.ln() + rng.random_range(-0.5..0.5)).collect();
        let kappa: Vec<f64> = y.iter().map(|_| (k0 + rng.random_range(-0.3..0.3)).min(0.95)).collect();
        let lam = Lambda { eta, kappa };
        if pot::gpd_loglik(&lam, y).is_finite() {
            pts.push(lam);
        }
    }
    pts
}

fn run_gradcheck(cfg: &RunConfig) -> Result<i32> {
    let ds = match &cfg.input {
        Some(_) => excesses(cfg, &load_input(cfg)?).map(|(d, _)| d)?,
        None => io::simulate_gpd(cfg.n.min(200), |_| cfg.sigma, |_| cfg.kappa, cfg.gs.seed)?,
    };
    if ds.y.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidInput("excesses must be positive".into()));
    }
    let spec = cfg.functional_spec(cfg.exceed_prob.unwrap_or(0.1));
    let mut worst = pot::GradCheck { loglik: 0.0, jacobian: 0.0 };
    for lam in gradcheck_points(&ds.y, cfg.points, cfg.gs.seed) {
        let g = pot::gradcheck(&lam, &ds.y, &spec, cfg.h)?;
        worst.loglik = worst.loglik.max(g.loglik);
        worst.jacobian = worst.jacobian.max(g.jacobian);
    }
    let pass = worst.max() < GRADCHECK_TOL;
    let mut d = Diagnostics::new(cfg.task);
    d.put("n", ds.n());
    d.put("points", cfg.points);
    d.real("h", cfg.h);
    d.real("max_rel_error_loglik", worst.loglik);
    d.real("max_rel_error_jacobian", worst.jacobian);
    d.real("max_rel_error", worst.max());
    d.real("tolerance", GRADCHECK_TOL);
    d.put("pass", pass);
    d.write(&out(cfg, "diagnostics.txt"))?;
    println!("max relative error {:.3e} ({})", worst.max(), if pass { "pass" } else { "fail" });
    Ok(if pass { EXIT_OK } else { EXIT_NUMERICAL })
}

fn run_minimize(cfg: &RunConfig) -> Result<i32> {
    let (obj, minimizer, default_x0): (Box<dyn Objective>, Vec<f64>, Vec<f64>) = match cfg.function.as_str() {
        "nsrosenbrock" => (Box::new(NsRosenbrock), vec![1.0, 1.0], vec![-1.0, 1.0]),
        "quadratic" => {
            let center = vec![1.0; cfg.dim];
            (Box::new(Quadratic { center: center.clone() }), center, vec![0.0; cfg.dim])
        }
        "l1" => (Box::new(L1Norm { dim: cfg.dim }), vec![0.0; cfg.dim], vec![1.0; cfg.dim]),
        other => return Err(config_err("function", format!("unknown function `{other}`"))),
    };
    let x0 = cfg.x0.clone().unwrap_or(default_x0);
    if x0.len() != obj.dim() {
        return Err(config_err("x0", format!("expected {} coordinates, got {}", obj.dim(), x0.len())));
    }
    let res = gsda_minimize(obj.as_ref(), &x0, &cfg.gs)?;
    write_trace(&out(cfg, "trace.csv"), &res.trace)?;
    let dist = res.x.iter().zip(&minimizer).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let mut d = Diagnostics::new(cfg.task);
    d.put("function", &cfg.function);
    d.put("seed", cfg.gs.seed);
    d.put("m", cfg.gs.sample_size(obj.dim()).0);
    d.trace(&res.trace);
    d.put("x", res.x.iter().map(|v| io::format_real(*v)).collect::<Vec<_>>().join(","));
    d.real("f", res.f);
    d.real("distance_to_minimum", dist);
    d.write(&out(cfg, "diagnostics.txt"))?;
    Ok(status(&res.trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoother_requests() {
        let r: SmootherRequest = "w=ll:df=4".parse().unwrap();
        assert_eq!(r, SmootherRequest { column: "w".into(), kind: SmootherKind::LocalLinear(Bandwidth::TargetDf(4.0)) });
        let r: SmootherRequest = "w=ll:bw=0.3".parse().unwrap();
        assert_eq!(r.kind, SmootherKind::LocalLinear(Bandwidth::Fixed(0.3)));
        let r: SmootherRequest = "w=ll".parse().unwrap();
        assert_eq!(r.kind, SmootherKind::LocalLinear(Bandwidth::RuleOfThumb));
        let r: SmootherRequest = "day*hour=cell".parse().unwrap();
        assert_eq!((r.column.as_str(), r.kind), ("day*hour", SmootherKind::CellFactor));
        for bad in ["w", "w=spline", "w=ll:k=3", "w=cell:df=2", "=linear"] {
            assert!(matches!(bad.parse::<SmootherRequest>(), Err(Error::Config { .. })), "{bad}");
        }
    }

    #[test]
    fn precedence_cli_over_file_over_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        fs::write(&path, "alpha=0.7\nbeta=0.2\nsmoother=w=linear\n").unwrap();
        let args = CommonArgs { config: Some(path), alpha: Some("0.9".into()), ..Default::default() };
        let cfg = resolve(Task::FitQuantile, &args).unwrap();
        assert_eq!(cfg.alpha, 0.9);
        assert_eq!(cfg.gs.beta, 0.2);
        assert_eq!(cfg.gs.mu, 0.5);
        assert_eq!(cfg.smoothers.len(), 1);
    }

    #[test]
    fn config_errors_name_the_field() {
        let mut m = BTreeMap::new();
        m.insert("beta".to_string(), "1.5".to_string());
        match RunConfig::from_map(Task::Minimize, &m) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "beta"),
            other => panic!("{other:?}"),
        }
        let mut m = BTreeMap::new();
        m.insert("bogus".to_string(), "1".to_string());
        assert!(matches!(RunConfig::from_map(Task::Minimize, &m), Err(Error::Config { field, .. }) if field == "bogus"));
        let mut m = BTreeMap::new();
        m.insert("levels".to_string(), "0.1,x".to_string());
        assert!(matches!(RunConfig::from_map(Task::FitPot, &m), Err(Error::Config { field, .. }) if field == "levels"));
    }

    #[test]
    fn config_key_list_matches_the_parser() {
        let defaults = RunConfig::defaults(Task::Simulate);
        for k in CONFIG_KEYS {
            let v = match k {
                "task" => "simulate",
                "mode" => "qp",
                "jacobian" => "per-sample",
                "generator" => "sales",
                "smoother" => "w=linear",
                "parallel" => "true",
                "levels" | "x0" => "0.1",
                "input" | "output_dir" | "response" | "factors" | "function" => "x",
                "m" | "max_iter" | "max_backtracks" | "seed" | "n" | "days" | "hours" | "dim" | "points" => "7",
                "tau0" | "eps0" => "0.02",
                "eps_min" | "tau_min" => "1e-7",
                _ => "0.3",
            };
            let mut m = BTreeMap::new();
            m.insert(k.to_string(), v.to_string());
            let c = RunConfig::from_map(Task::Simulate, &m).unwrap_or_else(|e| panic!("{k}: {e}"));
            assert!(k == "task" || c != defaults, "{k} had no effect");
        }
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config { field: "a".into(), message: String::new() }), EXIT_INPUT);
        assert_eq!(exit_code(&Error::SingularBlock { index: 0, det: 0.0 }), EXIT_NUMERICAL);
        assert_eq!(main_with_args(["gsls", "fit-quantile", "--bogus"]), EXIT_INPUT);
        assert_eq!(main_with_args(["gsls", "fit-quantile"]), EXIT_INPUT);
    }
}
