//! CSV and JSON output formats.
//!
//! Reals in CSV are written with 17 significant digits so every value
//! round-trips exactly.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use rmcle_core::ctmc::JumpPath;
use rmcle_core::ode::OdeTrajectory;
use rmcle_core::sde::{AbsorbedAxis, AbsorbedPath};
use rmcle_core::DensityState;
use serde::Serialize;

use crate::montecarlo::{EnsembleConfig, EnsembleStats, Histogram};
use crate::TOOLKIT_VERSION;

/// Formats a real with 17 significant digits.
pub fn real(x: f64) -> String {
    format!("{x:.16e}")
}

fn create(path: &Path) -> io::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_rows<W: Write>(
    mut out: W,
    header: &str,
    rows: impl Iterator<Item = String>,
) -> io::Result<()> {
    writeln!(out, "{header}")?;
    for row in rows {
        writeln!(out, "{row}")?;
    }
    out.flush()
}

/// `t,N,P` rows.
pub fn write_density_csv(path: &Path, times: &[f64], states: &[DensityState]) -> io::Result<()> {
    let rows = times
        .iter()
        .zip(states)
        .map(|(t, z)| format!("{},{},{}", real(*t), real(z.prey), real(z.predator)));
    write_rows(create(path)?, "t,N,P", rows)
}

pub fn write_ode_csv(path: &Path, traj: &OdeTrajectory) -> io::Result<()> {
    write_density_csv(path, &traj.times, &traj.states)
}

/// `t,n,p,channel`; the first row is the initial state with an empty channel.
pub fn write_jump_csv(path: &Path, jumps: &JumpPath) -> io::Result<()> {
    let first = format!(
        "{},{},{},",
        real(0.0),
        jumps.initial.prey,
        jumps.initial.predator
    );
    let rest = jumps
        .jump_times
        .iter()
        .zip(&jumps.states)
        .zip(&jumps.channels)
        .map(|((t, x), ch)| format!("{},{},{},{}", real(*t), x.prey, x.predator, ch.label()));
    write_rows(
        create(path)?,
        "t,n,p,channel",
        std::iter::once(first).chain(rest),
    )
}

/// `t,N,P,absorbed` with `absorbed` 1 from the absorption step on.
pub fn write_absorbed_csv(path: &Path, p: &AbsorbedPath) -> io::Result<()> {
    let cut = p.absorption_index().unwrap_or(usize::MAX);
    let rows = p.states.iter().enumerate().map(|(i, z)| {
        format!(
            "{},{},{},{}",
            real(i as f64 * p.dt),
            real(z.prey),
            real(z.predator),
            u8::from(i >= cut)
        )
    });
    write_rows(create(path)?, "t,N,P,absorbed", rows)
}

/// `t,survival`.
pub fn write_survival_csv(path: &Path, stats: &EnsembleStats) -> io::Result<()> {
    let rows = stats
        .grid
        .iter()
        .zip(&stats.survival)
        .map(|(t, s)| format!("{},{}", real(*t), real(*s)));
    write_rows(create(path)?, "t,survival", rows)
}

/// `N,P` survivor cloud.
pub fn write_cloud_csv(path: &Path, cloud: &[DensityState]) -> io::Result<()> {
    let rows = cloud
        .iter()
        .map(|z| format!("{},{}", real(z.prey), real(z.predator)));
    write_rows(create(path)?, "N,P", rows)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> io::Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()
}

#[derive(Debug, Serialize)]
pub struct PathSummary {
    pub absorption_time: Option<f64>,
    pub absorbed_axis: Option<AbsorbedAxis>,
    pub final_state: DensityState,
}

impl From<&AbsorbedPath> for PathSummary {
    fn from(p: &AbsorbedPath) -> Self {
        Self {
            absorption_time: p.absorption_time,
            absorbed_axis: p.absorbed_axis,
            final_state: p.final_state(),
        }
    }
}

/// The ensemble document: estimators plus an echo of the configuration.
#[derive(Debug, Serialize)]
pub struct EnsembleDocument<'a> {
    pub toolkit_version: &'static str,
    pub config: &'a EnsembleConfig,
    pub grid: &'a [f64],
    pub survival: &'a [f64],
    #[serde(rename = "mean_N")]
    pub mean_prey: &'a [f64],
    #[serde(rename = "mean_P")]
    pub mean_predator: &'a [f64],
    pub histogram: &'a Histogram,
    pub survivor_fraction: f64,
    pub n_paths: usize,
    pub absorbed: crate::montecarlo::AxisCounts,
    pub mean_absorption_time: Option<f64>,
}

impl<'a> EnsembleDocument<'a> {
    pub fn new(config: &'a EnsembleConfig, stats: &'a EnsembleStats) -> Self {
        Self {
            toolkit_version: TOOLKIT_VERSION,
            config,
            grid: &stats.grid,
            survival: &stats.survival,
            mean_prey: &stats.mean_prey,
            mean_predator: &stats.mean_predator,
            histogram: &stats.terminal_histogram,
            survivor_fraction: stats.survivor_fraction,
            n_paths: stats.n_paths,
            absorbed: stats.absorbed,
            mean_absorption_time: stats.mean_absorption_time,
        }
    }
}
