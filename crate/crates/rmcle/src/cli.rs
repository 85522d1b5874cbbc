//! The `rmcle` command line.
//!
//! Every subcommand reads a flat set of keys. A key's value comes from its
//! flag if given, else from the `--config` file (`key = value` lines), else
//! from the documented default. The resolved set is written back next to the
//! outputs as `replay.cfg` so `rmcle <sub> --config replay.cfg` reproduces
//! them.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Display;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::parser::ValueSource;
use clap::{Arg, ArgAction, ArgMatches, Command};
use rmcle_core::ctmc;
use rmcle_core::model::classify_regime;
use rmcle_core::ode;
use rmcle_core::sde::{self, FactorizationKind};
use rmcle_core::{CountState, DensityState, ModelParams};
use serde::Serialize;

use crate::io;
use crate::montecarlo::{self, EnsembleConfig, EnsembleError};
use crate::rng::path_stream;
use crate::TOOLKIT_VERSION;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<EnsembleError> for CliError {
    fn from(e: EnsembleError) -> Self {
        match e {
            EnsembleError::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<rmcle_core::Error> for CliError {
    fn from(e: rmcle_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("i/o error: {e}"))
    }
}

type CliResult<T> = Result<T, CliError>;

struct Key {
    name: &'static str,
    /// `None` only for `rho`, which stands in for `omega`.
    default: Option<&'static str>,
    help: &'static str,
}

const fn key(name: &'static str, default: &'static str, help: &'static str) -> Key {
    Key {
        name,
        default: Some(default),
        help,
    }
}

const COMMON: &[Key] = &[
    key("k", "3", "prey carrying capacity"),
    key("m", "2", "maximal predation rate"),
    key("c", "0.8", "predator death rate"),
    key("omega", "100", "system size (exclusive with rho)"),
    Key {
        name: "rho",
        default: None,
        help: "noise level 1/sqrt(omega) (exclusive with omega)",
    },
    key("seed", "42", "master seed"),
    key("out_dir", "out", "output directory"),
    key("workers", "0", "worker threads, 0 = all available cores"),
];

const START: &[Key] = &[
    key("n0", "0.8", "initial prey density"),
    key("p0", "0.6", "initial predator density"),
];

const EM: &[Key] = &[
    key("dt", "0.01", "Euler-Maruyama step"),
    key("horizon", "100", "final time"),
];

const ENSEMBLE: &[Key] = &[
    key("paths", "2000", "number of paths"),
    key("stride", "10", "record every stride-th step"),
    key("bins", "30", "bins of the survivor histogram"),
];

const KIND: Key = key(
    "kind",
    "cholesky",
    "noise factor: event, cholesky or diagonal",
);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Sub {
    Classify,
    Ode,
    Ssa,
    Sde,
    Survival,
    CompareFact,
    CompareCov,
    Lln,
    Extinction,
    Moments,
}

impl Sub {
    const ALL: [Sub; 10] = [
        Sub::Classify,
        Sub::Ode,
        Sub::Ssa,
        Sub::Sde,
        Sub::Survival,
        Sub::CompareFact,
        Sub::CompareCov,
        Sub::Lln,
        Sub::Extinction,
        Sub::Moments,
    ];

    fn name(self) -> &'static str {
        match self {
            Sub::Classify => "classify",
            Sub::Ode => "ode",
            Sub::Ssa => "ssa",
            Sub::Sde => "sde",
            Sub::Survival => "survival",
            Sub::CompareFact => "compare-fact",
            Sub::CompareCov => "compare-cov",
            Sub::Lln => "lln",
            Sub::Extinction => "extinction",
            Sub::Moments => "moments",
        }
    }

    fn about(self) -> &'static str {
        match self {
            Sub::Classify => "Equilibria, Hopf threshold and deterministic regime as JSON",
            Sub::Ode => "Deterministic trajectory (adaptive Dormand-Prince)",
            Sub::Ssa => "One exact jump-process path (Gillespie direct method)",
            Sub::Sde => "One absorbed Euler-Maruyama path",
            Sub::Survival => "Ensemble survival curve, means and survivor histogram",
            Sub::CompareFact => "Event versus Cholesky noise factor on independent streams",
            Sub::CompareCov => "Full covariance versus the diagonal surrogate",
            Sub::Lln => "Jump-process ensemble mean against the ODE for growing system size",
            Sub::Extinction => "Extinction fractions and absorption axes",
            Sub::Moments => "Largest empirical moment E|Z(t)|^p over the grid",
        }
    }

    fn keys(self) -> Vec<&'static Key> {
        static ODE: &[Key] = &[
            key("horizon", "200", "final time"),
            key("rel_tol", "1e-8", "relative tolerance"),
            key("abs_tol", "1e-10", "absolute tolerance"),
            key("grid_step", "0.1", "output spacing"),
        ];
        static SSA: &[Key] = &[
            key("horizon", "10", "final time"),
            key("grid_step", "0.1", "spacing of the sampled density table"),
            key("budget", "1000000000", "maximum number of jumps"),
        ];
        static LLN: &[Key] = &[
            key("omegas", "100,1000,10000", "increasing system sizes"),
            key("horizon", "10", "final time"),
            key("replicates", "500", "paths per system size"),
            key("grid_step", "0.1", "comparison grid spacing"),
        ];
        static MOMENTS: &[Key] = &[key("power", "2", "moment order, 2 or 4")];
        static EXTINCTION: &[Key] = &[key("paths", "2000", "number of paths")];

        let mut keys: Vec<&Key> = COMMON.iter().collect();
        if self != Sub::Classify {
            keys.extend(START);
        }
        match self {
            Sub::Classify => {}
            Sub::Ode => keys.extend(ODE),
            Sub::Ssa => keys.extend(SSA),
            Sub::Sde => {
                keys.extend(EM);
                keys.push(&KIND);
            }
            Sub::Survival | Sub::Moments => {
                keys.extend(EM);
                keys.extend(ENSEMBLE);
                keys.push(&KIND);
                if self == Sub::Moments {
                    keys.extend(MOMENTS);
                }
            }
            Sub::CompareFact | Sub::CompareCov => {
                keys.extend(EM);
                keys.extend(ENSEMBLE);
            }
            Sub::Lln => keys.extend(LLN),
            Sub::Extinction => {
                keys.extend(EM);
                keys.extend(EXTINCTION);
            }
        }
        keys
    }
}

fn flag(name: &str) -> String {
    name.replace('_', "-")
}

fn command() -> Command {
    let mut root = Command::new("rmcle")
        .version(TOOLKIT_VERSION)
        .about("Stochastic Rosenzweig-MacArthur predator-prey experiments")
        .subcommand_required(true)
        .arg_required_else_help(true);
    for sub in Sub::ALL {
        let mut cmd = Command::new(sub.name()).about(sub.about()).arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .help("flat `key = value` file; flags take precedence"),
        );
        for key in sub.keys() {
            let help = match key.default {
                Some(d) => format!("{} [default: {d}]", key.help),
                None => key.help.to_string(),
            };
            cmd = cmd.arg(
                Arg::new(key.name)
                    .long(flag(key.name))
                    .value_name("VALUE")
                    .action(ArgAction::Set)
                    .allow_hyphen_values(true)
                    .help(help),
            );
        }
        root = root.subcommand(cmd);
    }
    root
}

fn parse_config_file(path: &Path) -> CliResult<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config file {}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!(
                "{}:{}: expected `key = value`",
                path.display(),
                no + 1
            ))
        })?;
        map.insert(k.trim().replace('-', "_"), v.trim().to_string());
    }
    Ok(map)
}

/// The resolved key set of one invocation.
#[derive(Debug, Clone)]
struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    fn resolve(sub: Sub, matches: &ArgMatches) -> CliResult<Self> {
        let keys = sub.keys();
        let file = match matches.get_one::<String>("config") {
            Some(p) => parse_config_file(Path::new(p))?,
            None => BTreeMap::new(),
        };
        if let Some(unknown) = file
            .keys()
            .find(|k| !keys.iter().any(|key| key.name == k.as_str()))
        {
            return Err(CliError::Usage(format!(
                "unknown key '{unknown}' for subcommand {}",
                sub.name()
            )));
        }
        let from_flag = |name: &str| {
            (matches.value_source(name) == Some(ValueSource::CommandLine))
                .then(|| matches.get_one::<String>(name).cloned())
                .flatten()
        };

        // omega and rho describe one setting; the higher-precedence source wins
        let noise = match (from_flag("omega"), from_flag("rho")) {
            (Some(_), Some(_)) => {
                return Err(CliError::Usage("give either omega or rho, not both".into()))
            }
            (Some(o), None) => ("omega", o),
            (None, Some(r)) => ("rho", r),
            (None, None) => match (file.get("omega"), file.get("rho")) {
                (Some(_), Some(_)) => {
                    return Err(CliError::Usage("give either omega or rho, not both".into()))
                }
                (None, Some(r)) => ("rho", r.clone()),
                (Some(o), None) => ("omega", o.clone()),
                (None, None) => ("omega", "100".to_string()),
            },
        };

        let mut values = BTreeMap::new();
        for key in keys {
            if key.name == "omega" || key.name == "rho" {
                continue;
            }
            let v = from_flag(key.name)
                .or_else(|| file.get(key.name).cloned())
                .or_else(|| key.default.map(str::to_string))
                .ok_or_else(|| CliError::Usage(format!("missing key '{}'", key.name)))?;
            values.insert(key.name.to_string(), v);
        }
        values.insert(noise.0.to_string(), noise.1);
        Ok(Self { values })
    }

    fn raw(&self, name: &str) -> &str {
        self.values.get(name).map(String::as_str).unwrap_or("")
    }

    fn get<T: FromStr>(&self, name: &str) -> CliResult<T>
    where
        T::Err: Display,
    {
        let raw = self.raw(name);
        raw.parse()
            .map_err(|e| CliError::Usage(format!("invalid value '{raw}' for '{name}': {e}")))
    }

    fn params(&self) -> CliResult<ModelParams> {
        let (k, m, c) = (self.get("k")?, self.get("m")?, self.get("c")?);
        let p = if self.values.contains_key("rho") {
            ModelParams::with_rho(k, m, c, self.get("rho")?)
        } else {
            ModelParams::new(k, m, c, self.get("omega")?)
        };
        p.map_err(|e| CliError::Usage(e.to_string()))
    }

    fn start(&self) -> CliResult<DensityState> {
        DensityState::new(self.get("n0")?, self.get("p0")?)
            .validated()
            .map_err(|e| CliError::Usage(e.to_string()))
    }

    fn kind(&self) -> CliResult<FactorizationKind> {
        match self.raw("kind") {
            "event" => Ok(FactorizationKind::Event4D),
            "cholesky" => Ok(FactorizationKind::Cholesky2D),
            "diagonal" => Ok(FactorizationKind::Diagonal2D),
            other => Err(CliError::Usage(format!(
                "invalid kind '{other}': expected event, cholesky or diagonal"
            ))),
        }
    }

    fn ensemble(&self, kind: FactorizationKind) -> CliResult<EnsembleConfig> {
        let config = EnsembleConfig {
            params: self.params()?,
            z0: self.start()?,
            dt: self.get("dt")?,
            horizon: self.get("horizon")?,
            kind,
            n_paths: self.get("paths")?,
            master_seed: self.get("seed")?,
            output_grid_stride: self.get("stride")?,
            stream_tag: "ensemble".into(),
            histogram_bins: self.get("bins")?,
        };
        config
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(config)
    }

    fn grid(&self) -> CliResult<Vec<f64>> {
        let horizon: f64 = self.get("horizon")?;
        let step: f64 = self.get("grid_step")?;
        if !(step.is_finite() && step > 0.0 && horizon.is_finite() && horizon > 0.0) {
            return Err(CliError::Usage(
                "horizon and grid_step must be finite and > 0".into(),
            ));
        }
        let n = (horizon / step + 1e-9).floor() as usize;
        Ok((0..=n)
            .map(|i| i as f64 * step)
            .filter(|&t| t <= horizon)
            .collect())
    }

    fn replay_text(&self) -> String {
        self.values
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

#[derive(Serialize)]
struct RunManifest<'a> {
    subcommand: &'static str,
    config: &'a BTreeMap<String, String>,
    master_seed: u64,
    toolkit_version: &'static str,
    wall_clock_seconds: f64,
    outputs: Vec<String>,
}

/// Collects the files written by one run.
struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: PathBuf) -> CliResult<Self> {
        std::fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            written: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.written.push(p.clone());
        p
    }
}

#[derive(Serialize)]
struct ExtinctionDocument<'a> {
    toolkit_version: &'static str,
    #[serde(flatten)]
    report: &'a montecarlo::ExtinctionReport,
}

/// Runs one invocation and returns the summary line.
fn execute(sub: Sub, s: &Settings, out: &mut Outputs) -> CliResult<String> {
    let params = s.params()?;
    let seed: u64 = s.get("seed")?;
    match sub {
        Sub::Classify => unreachable!("classify writes no files"),
        Sub::Ode => {
            let grid = s.grid()?;
            let traj = ode::integrate(
                &params,
                s.start()?,
                s.get("horizon")?,
                s.get("rel_tol")?,
                s.get("abs_tol")?,
                Some(&grid),
            )
            .map_err(|e| match e {
                rmcle_core::Error::InvalidArgument(_) | rmcle_core::Error::InvalidState { .. } => {
                    CliError::Usage(e.to_string())
                }
                e => e.into(),
            })?;
            io::write_ode_csv(&out.path("ode.csv"), &traj)?;
            let z = traj.last();
            Ok(format!(
                "final_N={} final_P={} accepted_steps={}",
                z.prey, z.predator, traj.accepted_steps
            ))
        }
        Sub::Ssa => {
            if !params.omega().is_finite() {
                return Err(CliError::Usage(
                    "the jump process needs a finite omega".into(),
                ));
            }
            let grid = s.grid()?;
            let x0 = CountState::from_density(s.start()?, params.omega())
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let mut rng = path_stream(seed, "ssa", 0);
            let path = ctmc::simulate_with_budget(
                &params,
                x0,
                s.get("horizon")?,
                s.get("budget")?,
                &mut rng,
            )?;
            io::write_jump_csv(&out.path("jumps.csv"), &path)?;
            let dens = ctmc::density_path(&path, &grid)?;
            io::write_density_csv(&out.path("density.csv"), &grid, &dens)?;
            let x = path.final_state();
            Ok(format!(
                "jumps={} final_n={} final_p={}",
                path.len(),
                x.prey,
                x.predator
            ))
        }
        Sub::Sde => {
            let mut rng = path_stream(seed, "sde", 0);
            let path = sde::simulate_absorbed(
                &params,
                s.start()?,
                s.get("dt")?,
                s.get("horizon")?,
                s.kind()?,
                &mut rng,
            )
            .map_err(|e| match e {
                rmcle_core::Error::InvalidArgument(_) => CliError::Usage(e.to_string()),
                e => e.into(),
            })?;
            io::write_absorbed_csv(&out.path("path.csv"), &path)?;
            io::write_json(&out.path("path.json"), &io::PathSummary::from(&path))?;
            Ok(match (path.absorption_time, path.absorbed_axis) {
                (Some(t), Some(axis)) => format!("absorption_time={t} absorbed_axis={axis:?}"),
                _ => "absorption_time=none".to_string(),
            })
        }
        Sub::Survival => {
            let config = s.ensemble(s.kind()?)?;
            let stats = montecarlo::run_ensemble(&config)?;
            io::write_survival_csv(&out.path("survival.csv"), &stats)?;
            io::write_cloud_csv(&out.path("cloud.csv"), &stats.terminal_survivors)?;
            io::write_json(
                &out.path("ensemble.json"),
                &io::EnsembleDocument::new(&config, &stats),
            )?;
            Ok(format!("survivor_fraction={}", stats.survivor_fraction))
        }
        Sub::CompareFact => {
            let config = s.ensemble(FactorizationKind::Cholesky2D)?;
            let cmp = montecarlo::compare_factorizations(&config)?;
            for (name, stats, kind) in [
                ("event", &cmp.stats_event, FactorizationKind::Event4D),
                (
                    "cholesky",
                    &cmp.stats_cholesky,
                    FactorizationKind::Cholesky2D,
                ),
            ] {
                let run = config
                    .with_kind(kind)
                    .with_tag(format!("{}/{name}", config.stream_tag));
                io::write_survival_csv(&out.path(&format!("survival_{name}.csv")), stats)?;
                io::write_json(
                    &out.path(&format!("ensemble_{name}.json")),
                    &io::EnsembleDocument::new(&run, stats),
                )?;
            }
            io::write_json(
                &out.path("comparison.json"),
                &serde_json::json!({
                    "toolkit_version": TOOLKIT_VERSION,
                    "survivor_fraction_event": cmp.stats_event.survivor_fraction,
                    "survivor_fraction_cholesky": cmp.stats_cholesky.survivor_fraction,
                    "survival_sup_diff": cmp.survival_sup_diff,
                    "terminal_hist_overlap": cmp.terminal_hist_overlap,
                }),
            )?;
            Ok(format!(
                "survivor_fraction_event={} survivor_fraction_cholesky={} survival_sup_diff={} terminal_hist_overlap={}",
                cmp.stats_event.survivor_fraction,
                cmp.stats_cholesky.survivor_fraction,
                cmp.survival_sup_diff,
                cmp.terminal_hist_overlap
            ))
        }
        Sub::CompareCov => {
            let config = s.ensemble(FactorizationKind::Cholesky2D)?;
            let cmp = montecarlo::compare_covariance(&config)?;
            for (name, stats, kind) in [
                ("full", &cmp.stats_full, FactorizationKind::Cholesky2D),
                (
                    "diagonal",
                    &cmp.stats_diagonal,
                    FactorizationKind::Diagonal2D,
                ),
            ] {
                let run = config
                    .with_kind(kind)
                    .with_tag(format!("{}/{name}", config.stream_tag));
                io::write_survival_csv(&out.path(&format!("survival_{name}.csv")), stats)?;
                io::write_cloud_csv(
                    &out.path(&format!("cloud_{name}.csv")),
                    &stats.terminal_survivors,
                )?;
                io::write_json(
                    &out.path(&format!("ensemble_{name}.json")),
                    &io::EnsembleDocument::new(&run, stats),
                )?;
            }
            let (full, diag) = cmp.survivor_fractions;
            io::write_json(
                &out.path("comparison.json"),
                &serde_json::json!({
                    "toolkit_version": TOOLKIT_VERSION,
                    "survivor_fraction_full": full,
                    "survivor_fraction_diagonal": diag,
                    "survival_sup_diff": cmp.survival_sup_diff,
                }),
            )?;
            Ok(format!(
                "survivor_fraction_full={full} survivor_fraction_diagonal={diag}"
            ))
        }
        Sub::Lln => {
            let omegas = s
                .raw("omegas")
                .split(',')
                .map(|w| {
                    w.trim()
                        .parse::<f64>()
                        .map_err(|e| CliError::Usage(format!("invalid omega '{w}': {e}")))
                })
                .collect::<CliResult<Vec<_>>>()?;
            let points = montecarlo::lln_diagnostic(
                &params,
                s.start()?,
                &omegas,
                s.get("horizon")?,
                s.get("replicates")?,
                &s.grid()?,
                seed,
            )?;
            let mut csv = std::io::BufWriter::new(std::fs::File::create(out.path("lln.csv"))?);
            writeln!(csv, "omega,deviation")?;
            for p in &points {
                writeln!(csv, "{},{}", io::real(p.omega), io::real(p.deviation))?;
            }
            csv.flush()?;
            io::write_json(
                &out.path("lln.json"),
                &serde_json::json!({ "toolkit_version": TOOLKIT_VERSION, "points": points }),
            )?;
            Ok(points
                .iter()
                .map(|p| format!("deviation[{}]={}", p.omega, p.deviation))
                .collect::<Vec<_>>()
                .join(" "))
        }
        Sub::Extinction => {
            let dt: f64 = s.get("dt")?;
            let horizon: f64 = s.get("horizon")?;
            let paths: usize = s.get("paths")?;
            let z0 = s.start()?;
            // same validation as the ensemble runner, so bad input exits 2
            EnsembleConfig {
                params,
                z0,
                dt,
                horizon,
                kind: FactorizationKind::Cholesky2D,
                n_paths: paths,
                master_seed: seed,
                output_grid_stride: 1,
                stream_tag: String::new(),
                histogram_bins: 1,
            }
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
            let report = montecarlo::extinction_probe(&params, z0, dt, horizon, paths, seed)?;
            io::write_json(
                &out.path("extinction.json"),
                &ExtinctionDocument {
                    toolkit_version: TOOLKIT_VERSION,
                    report: &report,
                },
            )?;
            let frac = report
                .predator_axis_fraction
                .map_or("none".to_string(), |f| f.to_string());
            Ok(format!(
                "extinct_fraction={} predator_axis_fraction={frac}",
                report.extinct_fraction
            ))
        }
        Sub::Moments => {
            let power: u32 = s.get("power")?;
            if power != 2 && power != 4 {
                return Err(CliError::Usage("power must be 2 or 4".into()));
            }
            let config = s.ensemble(s.kind()?)?;
            let report = montecarlo::moment_probe(&config, power)?;
            io::write_json(
                &out.path("moments.json"),
                &serde_json::json!({ "toolkit_version": TOOLKIT_VERSION, "report": report }),
            )?;
            Ok(format!("sup_mean_moment_p{power}={}", report.sup_mean))
        }
    }
}

fn run_sub(sub: Sub, matches: &ArgMatches, stdout: &mut dyn Write) -> CliResult<()> {
    let settings = Settings::resolve(sub, matches)?;
    if sub == Sub::Classify {
        let report = classify_regime(&settings.params()?);
        let json = serde_json::to_string(&report).map_err(|e| CliError::Runtime(e.to_string()))?;
        writeln!(stdout, "{json}")?;
        return Ok(());
    }
    let workers: usize = settings.get("workers")?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Runtime(format!("cannot start worker pool: {e}")))?;

    let started = Instant::now();
    let mut out = Outputs::new(PathBuf::from(settings.raw("out_dir")))?;
    let summary = pool.install(|| execute(sub, &settings, &mut out))?;
    let wall = started.elapsed().as_secs_f64();

    let replay = out.dir.join("replay.cfg");
    std::fs::write(&replay, settings.replay_text())?;
    let mut outputs: Vec<String> = out
        .written
        .iter()
        .map(|p| p.display().to_string())
        .collect();
    outputs.push(replay.display().to_string());
    io::write_json(
        &out.dir.join("manifest.json"),
        &RunManifest {
            subcommand: sub.name(),
            config: &settings.values,
            master_seed: settings.get("seed")?,
            toolkit_version: TOOLKIT_VERSION,
            wall_clock_seconds: wall,
            outputs,
        },
    )?;
    writeln!(stdout, "{summary}")?;
    Ok(())
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let (name, sub_matches) = matches.subcommand().expect("a subcommand is required");
    let sub = Sub::ALL
        .into_iter()
        .find(|s| s.name() == name)
        .expect("clap only accepts known subcommands");
    let mut stdout = std::io::stdout().lock();
    match run_sub(sub, sub_matches, &mut stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_definition_is_consistent() {
        command().debug_assert();
    }

    #[test]
    fn every_key_has_a_flag_and_a_default_in_help() {
        for sub in Sub::ALL {
            let mut cmd = command();
            let help = cmd
                .find_subcommand_mut(sub.name())
                .unwrap()
                .render_long_help()
                .to_string();
            for key in sub.keys() {
                assert!(
                    help.contains(&format!("--{}", flag(key.name))),
                    "{}: {}",
                    sub.name(),
                    key.name
                );
                if let Some(d) = key.default {
                    assert!(
                        help.contains(&format!("[default: {d}]")),
                        "{}: {}",
                        sub.name(),
                        key.name
                    );
                }
            }
        }
    }

    #[test]
    fn keys_are_unique_per_subcommand() {
        for sub in Sub::ALL {
            let keys = sub.keys();
            for (i, a) in keys.iter().enumerate() {
                assert!(
                    keys[i + 1..].iter().all(|b| b.name != a.name),
                    "{}: {}",
                    sub.name(),
                    a.name
                );
            }
        }
    }
}
