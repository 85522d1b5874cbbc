//! Parallel ensembles of absorbed EM paths and jump-process replicates.
//!
//! Paths are simulated in fixed-size chunks on the current rayon pool and then
//! folded strictly in path-index order, so every estimator is bit-identical for
//! a given configuration regardless of the number of workers.

use rayon::prelude::*;
use rmcle_core::ctmc::{self, DEFAULT_JUMP_BUDGET};
use rmcle_core::ode::{self, DEFAULT_ABS_TOL, DEFAULT_REL_TOL};
use rmcle_core::sde::{self, AbsorbedAxis, Absorption, FactorizationKind};
use rmcle_core::{CountState, DensityState, ModelParams};
use serde::Serialize;

use crate::rng::path_stream;

const CHUNK: usize = 256;

pub const DEFAULT_HISTOGRAM_BINS: usize = 30;

#[derive(Debug, thiserror::Error)]
pub enum EnsembleError {
    #[error("invalid ensemble configuration: {0}")]
    Config(String),

    #[error("path {path_index} (master seed {master_seed}, stream '{tag}') failed: {source}")]
    Path {
        path_index: usize,
        master_seed: u64,
        tag: String,
        #[source]
        source: rmcle_core::Error,
    },

    #[error(transparent)]
    Model(#[from] rmcle_core::Error),
}

pub type Result<T, E = EnsembleError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleConfig {
    pub params: ModelParams,
    pub z0: DensityState,
    pub dt: f64,
    pub horizon: f64,
    pub kind: FactorizationKind,
    pub n_paths: usize,
    pub master_seed: u64,
    /// Record every `stride`-th EM step; a trailing partial stride is dropped.
    pub output_grid_stride: usize,
    /// Separates the random streams of different experiments.
    pub stream_tag: String,
    pub histogram_bins: usize,
}

impl EnsembleConfig {
    /// The absorbed-EM setup used for the survival diagnostics:
    /// `(k, m, c) = (3, 2, 0.8)`, `ρ = 0.1`, `dt = 0.01`, `T = 100`,
    /// `z0 = (0.8, 0.6)`, 2000 Cholesky paths.
    pub fn reference(master_seed: u64) -> Self {
        Self {
            params: ModelParams::new(3.0, 2.0, 0.8, 100.0).expect("valid reference parameters"),
            z0: DensityState::new(0.8, 0.6),
            dt: 1e-2,
            horizon: 100.0,
            kind: FactorizationKind::Cholesky2D,
            n_paths: 2000,
            master_seed,
            output_grid_stride: 10,
            stream_tag: "ensemble".into(),
            histogram_bins: DEFAULT_HISTOGRAM_BINS,
        }
    }

    pub fn with_tag(&self, tag: impl Into<String>) -> Self {
        Self {
            stream_tag: tag.into(),
            ..self.clone()
        }
    }

    pub fn with_kind(&self, kind: FactorizationKind) -> Self {
        Self {
            kind,
            ..self.clone()
        }
    }

    pub fn step_count(&self) -> Result<usize> {
        Ok(sde::step_count(self.horizon, self.dt)?)
    }

    /// EM step indices at which the ensemble is sampled.
    pub fn grid_steps(&self) -> Result<Vec<usize>> {
        let n = self.step_count()?;
        Ok((0..=n).step_by(self.output_grid_stride).collect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(EnsembleError::Config("n_paths must be >= 1".into()));
        }
        if self.output_grid_stride == 0 {
            return Err(EnsembleError::Config(
                "output_grid_stride must be >= 1".into(),
            ));
        }
        if self.histogram_bins == 0 {
            return Err(EnsembleError::Config("histogram_bins must be >= 1".into()));
        }
        let z0 = self.z0.validated()?;
        if !z0.is_interior() {
            return Err(EnsembleError::Config("z0 must be strictly interior".into()));
        }
        self.step_count()?;
        Ok(())
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    /// `bins` uniform bins over the observed range, last bin closed on the right.
    pub fn from_values(values: &[f64], bins: usize) -> Self {
        if values.is_empty() {
            return Self::over(values, 0.0, 1.0, bins);
        }
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, lo + 0.5)
        };
        Self::over(values, lo, hi, bins)
    }

    pub fn over(values: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        let width = (hi - lo) / bins as f64;
        let bin_edges = (0..=bins).map(|i| lo + width * i as f64).collect();
        let mut counts = vec![0u64; bins];
        for &v in values {
            let i = (((v - lo) / width) as usize).min(bins - 1);
            counts[i] += 1;
        }
        Self { bin_edges, counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Absorption tallies by axis.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct AxisCounts {
    pub prey_zero: u64,
    pub predator_zero: u64,
    pub both: u64,
}

impl AxisCounts {
    fn record(&mut self, axis: AbsorbedAxis) {
        match axis {
            AbsorbedAxis::PreyZero => self.prey_zero += 1,
            AbsorbedAxis::PredatorZero => self.predator_zero += 1,
            AbsorbedAxis::Both => self.both += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.prey_zero + self.predator_zero + self.both
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleStats {
    pub grid: Vec<f64>,
    /// `P(τ > t)` on the grid.
    pub survival: Vec<f64>,
    /// Unconditional means; absorbed paths contribute their frozen state.
    pub mean_prey: Vec<f64>,
    pub mean_predator: Vec<f64>,
    /// `N` at the last grid time over surviving paths.
    pub terminal_histogram: Histogram,
    /// Survivor states at the last grid time, in path order.
    pub terminal_survivors: Vec<DensityState>,
    pub survivor_fraction: f64,
    pub n_paths: usize,
    /// Absorptions by axis up to the last grid time.
    pub absorbed: AxisCounts,
    pub mean_absorption_time: Option<f64>,
}

/// One path sampled on the ensemble grid.
#[derive(Debug, Clone)]
struct PathRecord {
    absorption: Option<Absorption>,
    samples: Vec<DensityState>,
}

/// Maps every path index through `map` on the rayon pool and folds the results
/// in index order.
fn ordered_fold<T, M, F>(n_paths: usize, map: M, mut fold: F) -> Result<()>
where
    T: Send,
    M: Fn(usize) -> Result<T> + Sync,
    F: FnMut(usize, T),
{
    for start in (0..n_paths).step_by(CHUNK) {
        let end = (start + CHUNK).min(n_paths);
        let chunk: Vec<Result<T>> = (start..end).into_par_iter().map(&map).collect();
        for (i, item) in (start..end).zip(chunk) {
            fold(i, item?);
        }
    }
    Ok(())
}

fn simulate_record(
    config: &EnsembleConfig,
    grid_steps: &[usize],
    n_steps: usize,
    index: usize,
) -> Result<PathRecord> {
    let mut rng = path_stream(config.master_seed, &config.stream_tag, index as u64);
    let stride = config.output_grid_stride;
    let mut samples = Vec::with_capacity(grid_steps.len());
    let mut last = config.z0;
    let absorption = sde::run_absorbed_em(
        &config.params,
        config.z0,
        config.dt,
        n_steps,
        config.kind,
        &mut rng,
        |step, z| {
            if step % stride == 0 && samples.len() < grid_steps.len() {
                samples.push(z);
            }
            last = z;
        },
    )
    .map_err(|source| EnsembleError::Path {
        path_index: index,
        master_seed: config.master_seed,
        tag: config.stream_tag.clone(),
        source,
    })?;
    samples.resize(grid_steps.len(), last);
    Ok(PathRecord {
        absorption,
        samples,
    })
}

/// Runs `config.n_paths` absorbed EM paths and aggregates the survival curve,
/// unconditional means and the survivor histogram.
pub fn run_ensemble(config: &EnsembleConfig) -> Result<EnsembleStats> {
    config.validate()?;
    let n_steps = config.step_count()?;
    let grid_steps = config.grid_steps()?;
    let len = grid_steps.len();
    let last_step = *grid_steps.last().expect("grid holds step 0");

    let mut alive = vec![0u64; len];
    let mut sum_prey = vec![CompensatedSum::default(); len];
    let mut sum_pred = vec![CompensatedSum::default(); len];
    let mut survivors = Vec::new();
    let mut absorbed = AxisCounts::default();
    let mut tau_sum = CompensatedSum::default();

    ordered_fold(
        config.n_paths,
        |i| simulate_record(config, &grid_steps, n_steps, i),
        |_, rec| {
            let tau_step = match rec.absorption {
                Some(a) if a.step <= last_step => {
                    absorbed.record(a.axis);
                    tau_sum.add(a.time);
                    a.step
                }
                _ => usize::MAX,
            };
            for (g, &step) in grid_steps.iter().enumerate() {
                if tau_step > step {
                    alive[g] += 1;
                }
                sum_prey[g].add(rec.samples[g].prey);
                sum_pred[g].add(rec.samples[g].predator);
            }
            if tau_step > last_step {
                survivors.push(rec.samples[len - 1]);
            }
        },
    )?;

    let m = config.n_paths as f64;
    let survival: Vec<f64> = alive.iter().map(|&a| a as f64 / m).collect();
    let terminal_n: Vec<f64> = survivors.iter().map(|z| z.prey).collect();
    let n_absorbed = absorbed.total();
    Ok(EnsembleStats {
        grid: grid_steps.iter().map(|&s| s as f64 * config.dt).collect(),
        survivor_fraction: survival[len - 1],
        survival,
        mean_prey: sum_prey.iter().map(|s| s.value() / m).collect(),
        mean_predator: sum_pred.iter().map(|s| s.value() / m).collect(),
        terminal_histogram: Histogram::from_values(&terminal_n, config.histogram_bins),
        terminal_survivors: survivors,
        n_paths: config.n_paths,
        absorbed,
        mean_absorption_time: (n_absorbed > 0).then(|| tau_sum.value() / n_absorbed as f64),
    })
}

/// `Σ_bins min(p_a, p_b)` over a shared binning of the two survivor samples.
pub fn histogram_overlap(a: &[f64], b: &[f64], bins: usize) -> f64 {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let all = a.iter().chain(b).copied();
    let lo = all.clone().fold(f64::INFINITY, f64::min);
    let hi = all.fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, lo + 0.5)
    };
    let ha = Histogram::over(a, lo, hi, bins);
    let hb = Histogram::over(b, lo, hi, bins);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    ha.counts
        .iter()
        .zip(&hb.counts)
        .map(|(&x, &y)| (x as f64 / na).min(y as f64 / nb))
        .sum()
}

fn survival_sup_diff(a: &EnsembleStats, b: &EnsembleStats) -> f64 {
    a.survival
        .iter()
        .zip(&b.survival)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorizationComparison {
    pub stats_event: EnsembleStats,
    pub stats_cholesky: EnsembleStats,
    pub survival_sup_diff: f64,
    pub terminal_hist_overlap: f64,
}

/// Event (4D) versus Cholesky (2D) noise under otherwise identical settings,
/// each on its own independent set of streams.
pub fn compare_factorizations(base: &EnsembleConfig) -> Result<FactorizationComparison> {
    let tag = &base.stream_tag;
    let stats_event = run_ensemble(
        &base
            .with_kind(FactorizationKind::Event4D)
            .with_tag(format!("{tag}/event")),
    )?;
    let stats_cholesky = run_ensemble(
        &base
            .with_kind(FactorizationKind::Cholesky2D)
            .with_tag(format!("{tag}/cholesky")),
    )?;
    let prey = |s: &EnsembleStats| {
        s.terminal_survivors
            .iter()
            .map(|z| z.prey)
            .collect::<Vec<_>>()
    };
    Ok(FactorizationComparison {
        survival_sup_diff: survival_sup_diff(&stats_event, &stats_cholesky),
        terminal_hist_overlap: histogram_overlap(
            &prey(&stats_event),
            &prey(&stats_cholesky),
            base.histogram_bins,
        ),
        stats_event,
        stats_cholesky,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovarianceComparison {
    pub stats_full: EnsembleStats,
    pub stats_diagonal: EnsembleStats,
    /// `(full, diagonal)`.
    pub survivor_fractions: (f64, f64),
    pub survival_sup_diff: f64,
}

impl CovarianceComparison {
    pub fn terminal_cloud_full(&self) -> &[DensityState] {
        &self.stats_full.terminal_survivors
    }

    pub fn terminal_cloud_diag(&self) -> &[DensityState] {
        &self.stats_diagonal.terminal_survivors
    }
}

/// Full covariance (Cholesky factor) versus the diagonal surrogate.
pub fn compare_covariance(base: &EnsembleConfig) -> Result<CovarianceComparison> {
    let tag = &base.stream_tag;
    let stats_full = run_ensemble(
        &base
            .with_kind(FactorizationKind::Cholesky2D)
            .with_tag(format!("{tag}/full")),
    )?;
    let stats_diagonal = run_ensemble(
        &base
            .with_kind(FactorizationKind::Diagonal2D)
            .with_tag(format!("{tag}/diagonal")),
    )?;
    Ok(CovarianceComparison {
        survivor_fractions: (
            stats_full.survivor_fraction,
            stats_diagonal.survivor_fraction,
        ),
        survival_sup_diff: survival_sup_diff(&stats_full, &stats_diagonal),
        stats_full,
        stats_diagonal,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LlnPoint {
    pub omega: f64,
    /// `sup_t max(|mean N − N_ode|, |mean P − P_ode|)` over the grid.
    pub deviation: f64,
}

/// Distance between the jump-process ensemble mean density and the ODE for a
/// sequence of system sizes; `x0 = round(Ω z0)`.
pub fn lln_diagnostic(
    params: &ModelParams,
    z0: DensityState,
    omegas: &[f64],
    horizon: f64,
    replicates: usize,
    grid: &[f64],
    master_seed: u64,
) -> Result<Vec<LlnPoint>> {
    if omegas.is_empty() || omegas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(EnsembleError::Config(
            "omegas must be nonempty and increasing".into(),
        ));
    }
    if replicates < 100 {
        return Err(EnsembleError::Config("replicates must be >= 100".into()));
    }
    if grid.last().is_some_and(|&t| t > horizon) {
        return Err(EnsembleError::Config("grid exceeds the horizon".into()));
    }
    let reference = ode::integrate(
        params,
        z0,
        horizon,
        DEFAULT_REL_TOL,
        DEFAULT_ABS_TOL,
        Some(grid),
    )?;

    let mut out = Vec::with_capacity(omegas.len());
    for &omega in omegas {
        let p = params.with_omega(omega)?;
        let x0 = CountState::from_density(z0, omega)?;
        let tag = format!("lln/{omega}");
        let mut sum_prey = vec![CompensatedSum::default(); grid.len()];
        let mut sum_pred = vec![CompensatedSum::default(); grid.len()];
        ordered_fold(
            replicates,
            |i| {
                let mut rng = path_stream(master_seed, &tag, i as u64);
                ctmc::simulate_on_grid(&p, x0, grid, DEFAULT_JUMP_BUDGET, &mut rng).map_err(
                    |source| EnsembleError::Path {
                        path_index: i,
                        master_seed,
                        tag: tag.clone(),
                        source,
                    },
                )
            },
            |_, xs| {
                for (g, x) in xs.iter().enumerate() {
                    let z = x.density(omega);
                    sum_prey[g].add(z.prey);
                    sum_pred[g].add(z.predator);
                }
            },
        )?;
        let r = replicates as f64;
        let deviation = reference
            .states
            .iter()
            .enumerate()
            .map(|(g, z)| {
                let dn = (sum_prey[g].value() / r - z.prey).abs();
                let dp = (sum_pred[g].value() / r - z.predator).abs();
                dn.max(dp)
            })
            .fold(0.0, f64::max);
        out.push(LlnPoint { omega, deviation });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtinctionReport {
    pub n_paths: usize,
    pub extinct_fraction: f64,
    /// Share of extinctions in which the predator coordinate hit zero
    /// (predator-only or simultaneous); `None` without extinctions.
    pub predator_axis_fraction: Option<f64>,
    pub mean_absorption_time_conditional: Option<f64>,
    pub absorbed: AxisCounts,
}

/// Extinction statistics over `n_paths` absorbed Cholesky paths on `[0, horizon]`.
pub fn extinction_probe(
    params: &ModelParams,
    z0: DensityState,
    dt: f64,
    horizon: f64,
    n_paths: usize,
    master_seed: u64,
) -> Result<ExtinctionReport> {
    let n_steps = sde::step_count(horizon, dt)?;
    let config = EnsembleConfig {
        params: *params,
        z0,
        dt,
        horizon,
        kind: FactorizationKind::Cholesky2D,
        n_paths,
        master_seed,
        output_grid_stride: n_steps,
        stream_tag: "extinction".into(),
        histogram_bins: DEFAULT_HISTOGRAM_BINS,
    };
    let stats = run_ensemble(&config)?;
    let extinct = stats.absorbed.total();
    Ok(ExtinctionReport {
        n_paths,
        extinct_fraction: extinct as f64 / n_paths as f64,
        predator_axis_fraction: (extinct > 0)
            .then(|| (stats.absorbed.predator_zero + stats.absorbed.both) as f64 / extinct as f64),
        mean_absorption_time_conditional: stats.mean_absorption_time,
        absorbed: stats.absorbed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    pub power: u32,
    /// `sup_t` of the empirical mean of `|Z(t ∧ τ)|^p` over the grid.
    pub sup_mean: f64,
    pub argmax_time: f64,
}

/// Largest empirical moment `E|Z(t∧τ)|^p` over the ensemble grid, `p ∈ {2, 4}`.
pub fn moment_probe(config: &EnsembleConfig, power: u32) -> Result<MomentReport> {
    if power != 2 && power != 4 {
        return Err(EnsembleError::Config("moment power must be 2 or 4".into()));
    }
    config.validate()?;
    let n_steps = config.step_count()?;
    let grid_steps = config.grid_steps()?;
    let mut sums = vec![CompensatedSum::default(); grid_steps.len()];
    let mut non_finite = None;
    ordered_fold(
        config.n_paths,
        |i| simulate_record(config, &grid_steps, n_steps, i),
        |i, rec| {
            for (s, z) in sums.iter_mut().zip(&rec.samples) {
                let r2 = z.norm_sq();
                let v = if power == 2 { r2 } else { r2 * r2 };
                if !v.is_finite() && non_finite.is_none() {
                    non_finite = Some(i);
                }
                s.add(v);
            }
        },
    )?;
    if let Some(i) = non_finite {
        return Err(EnsembleError::Path {
            path_index: i,
            master_seed: config.master_seed,
            tag: config.stream_tag.clone(),
            source: rmcle_core::Error::NumericalBlowup {
                step: 0,
                partial: None,
            },
        });
    }
    let m = config.n_paths as f64;
    let (g, sup_mean) = sums.iter().map(|s| s.value() / m).enumerate().fold(
        (0, f64::NEG_INFINITY),
        |best, (g, v)| if v > best.1 { (g, v) } else { best },
    );
    Ok(MomentReport {
        power,
        sup_mean,
        argmax_time: grid_steps[g] as f64 * config.dt,
    })
}
