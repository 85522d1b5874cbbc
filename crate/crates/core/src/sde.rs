//! Absorbed Euler–Maruyama for the chemical-Langevin diffusion
//!
//! ```text
//! Z_{n+1} = Z_n + μ(Z_n) Δt + ρ L(Z_n) ΔB_n,   ΔB_n ~ N(0, Δt I)
//! ```
//!
//! The first time a coordinate of `Z_{n+1}` is `<= 0` the state is clipped to
//! `max(·, 0)` componentwise, the step time is recorded as the discrete
//! absorption time, and the path is frozen there. No reflection, no rejection.

use alloc::boxed::Box;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::model::{self, guarded_sqrt};
use crate::{DensityState, Error, ModelParams, Result};

pub const DEFAULT_DT: f64 = 1e-2;
pub const DEFAULT_HORIZON: f64 = 100.0;

/// Choice of noise factor `L` with `L Lᵀ = Σ` (or `Σ_diag`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum FactorizationKind {
    /// One Brownian driver per reaction channel (2×4).
    Event4D,
    /// Lower-triangular square root of `Σ` (2×2).
    Cholesky2D,
    /// Diagonal surrogate without cross-covariance (2×2).
    Diagonal2D,
}

impl FactorizationKind {
    pub const fn noise_dim(self) -> usize {
        match self {
            FactorizationKind::Event4D => 4,
            FactorizationKind::Cholesky2D | FactorizationKind::Diagonal2D => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum AbsorbedAxis {
    PreyZero,
    PredatorZero,
    Both,
}

impl AbsorbedAxis {
    fn classify(z: DensityState) -> Option<Self> {
        match (z.prey <= 0.0, z.predator <= 0.0) {
            (true, true) => Some(AbsorbedAxis::Both),
            (true, false) => Some(AbsorbedAxis::PreyZero),
            (false, true) => Some(AbsorbedAxis::PredatorZero),
            (false, false) => None,
        }
    }

    pub fn predator_extinct(self) -> bool {
        matches!(self, AbsorbedAxis::PredatorZero | AbsorbedAxis::Both)
    }
}

/// Where and when a path was absorbed.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Absorption {
    pub step: usize,
    pub time: f64,
    pub axis: AbsorbedAxis,
    /// Clipped state the path is frozen at.
    pub state: DensityState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbsorbedPath {
    pub dt: f64,
    /// `states[i]` approximates `Z(i·dt)`.
    pub states: Vec<DensityState>,
    pub absorption_time: Option<f64>,
    pub absorbed_axis: Option<AbsorbedAxis>,
}

impl AbsorbedPath {
    pub fn absorption_index(&self) -> Option<usize> {
        let tau = self.absorption_time?;
        Some(libm::round(tau / self.dt) as usize)
    }

    pub fn final_state(&self) -> DensityState {
        *self.states.last().expect("path holds the initial state")
    }
}

/// Number of steps covering `[0, horizon]`, `⌈horizon/dt⌉` with a little
/// tolerance so that e.g. `100 / 0.01` counts as exactly 10⁴.
pub fn step_count(horizon: f64, dt: f64) -> Result<usize> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidArgument("dt must be finite and > 0"));
    }
    if !(horizon.is_finite() && horizon >= dt) {
        return Err(Error::InvalidArgument("horizon must be finite and >= dt"));
    }
    let r = horizon / dt;
    let n = libm::round(r);
    let steps = if (r - n).abs() <= 1e-9 * r.max(1.0) {
        n
    } else {
        libm::ceil(r)
    };
    Ok(steps as usize)
}

/// One EM update `z + μ(z)dt + ρ L(z) noise`, before clipping.
///
/// `noise` holds the raw Brownian increments (variance `dt`), one per noise
/// dimension of `kind`.
pub fn em_step(
    params: &ModelParams,
    z: DensityState,
    dt: f64,
    noise: &[f64],
    kind: FactorizationKind,
) -> Result<DensityState> {
    if noise.len() != kind.noise_dim() {
        return Err(Error::InvalidArgument(
            "noise length must match the factorization",
        ));
    }
    let mu = model::drift(params, z)?;
    let [dn, dp] = apply_factor(params, z, noise, kind)?;
    let rho = params.rho();
    Ok(DensityState::new(
        z.prey + mu[0] * dt + rho * dn,
        z.predator + mu[1] * dt + rho * dp,
    ))
}

fn apply_factor(
    params: &ModelParams,
    z: DensityState,
    noise: &[f64],
    kind: FactorizationKind,
) -> Result<[f64; 2]> {
    Ok(match kind {
        FactorizationKind::Event4D => {
            let l = model::event_factor(params, z)?;
            let row = |r: &[f64; 4]| {
                r[0] * noise[0] + r[1] * noise[1] + r[2] * noise[2] + r[3] * noise[3]
            };
            [row(&l[0]), row(&l[1])]
        }
        FactorizationKind::Cholesky2D => {
            let l = model::cholesky_factor(params, z)?;
            [l[0][0] * noise[0], l[1][0] * noise[0] + l[1][1] * noise[1]]
        }
        FactorizationKind::Diagonal2D => {
            let l = model::diagonal_factor(params, z)?;
            [l[0][0] * noise[0], l[1][1] * noise[1]]
        }
    })
}

/// Streams an absorbed EM path of `n_steps` steps.
///
/// `visit(i, z)` is called for `i = 0, 1, …` up to and including the absorption
/// step (or `n_steps`); states after absorption are all equal to the last one
/// visited. The stream is consumed as `noise_dim` standard normals per step.
pub fn run_absorbed_em<R, F>(
    params: &ModelParams,
    z0: DensityState,
    dt: f64,
    n_steps: usize,
    kind: FactorizationKind,
    rng: &mut R,
    mut visit: F,
) -> Result<Option<Absorption>>
where
    R: Rng + ?Sized,
    F: FnMut(usize, DensityState),
{
    let z0 = z0.validated()?;
    if !z0.is_interior() {
        return Err(Error::InvalidArgument("initial state must be interior"));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidArgument("dt must be finite and > 0"));
    }
    let sqrt_dt = libm::sqrt(dt);
    let dim = kind.noise_dim();
    let mut noise = [0.0; 4];
    let mut z = z0;
    visit(0, z);
    for step in 1..=n_steps {
        for w in noise.iter_mut().take(dim) {
            let g: f64 = rng.sample(StandardNormal);
            *w = g * sqrt_dt;
        }
        let next = em_step(params, z, dt, &noise[..dim], kind)?;
        if !next.is_finite() {
            return Err(Error::NumericalBlowup {
                step,
                partial: None,
            });
        }
        if let Some(axis) = AbsorbedAxis::classify(next) {
            let clipped = DensityState::new(next.prey.max(0.0), next.predator.max(0.0));
            visit(step, clipped);
            return Ok(Some(Absorption {
                step,
                time: step as f64 * dt,
                axis,
                state: clipped,
            }));
        }
        z = next;
        visit(step, z);
    }
    Ok(None)
}

/// Simulates and stores a full absorbed path on the uniform grid `i·dt`.
pub fn simulate_absorbed<R: Rng + ?Sized>(
    params: &ModelParams,
    z0: DensityState,
    dt: f64,
    horizon: f64,
    kind: FactorizationKind,
    rng: &mut R,
) -> Result<AbsorbedPath> {
    let n_steps = step_count(horizon, dt)?;
    let mut states = Vec::with_capacity(n_steps + 1);
    let outcome = run_absorbed_em(params, z0, dt, n_steps, kind, rng, |_, z| states.push(z));
    let mut path = AbsorbedPath {
        dt,
        states,
        absorption_time: None,
        absorbed_axis: None,
    };
    match outcome {
        Ok(absorption) => {
            if let Some(a) = absorption {
                path.absorption_time = Some(a.time);
                path.absorbed_axis = Some(a.axis);
                path.states.resize(n_steps + 1, a.state);
            }
            Ok(path)
        }
        Err(Error::NumericalBlowup { step, .. }) => Err(Error::NumericalBlowup {
            step,
            partial: Some(Box::new(path)),
        }),
        Err(e) => Err(e),
    }
}

/// One-dimensional absorbed path on a coordinate axis.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisPath {
    pub dt: f64,
    pub values: Vec<f64>,
    pub absorption_time: Option<f64>,
}

/// Scalar absorbed EM with drift `a(x)` and squared diffusion `b(x)`.
fn axis_em<R, A, B>(
    x0: f64,
    dt: f64,
    horizon: f64,
    rho: f64,
    rng: &mut R,
    drift: A,
    variance: B,
) -> Result<AxisPath>
where
    R: Rng + ?Sized,
    A: Fn(f64) -> f64,
    B: Fn(f64) -> f64,
{
    if !(x0.is_finite() && x0 >= 0.0) {
        return Err(Error::InvalidArgument("axis start must be finite and >= 0"));
    }
    let n_steps = step_count(horizon, dt)?;
    let mut path = AxisPath {
        dt,
        values: Vec::with_capacity(n_steps + 1),
        absorption_time: None,
    };
    path.values.push(x0);
    if x0 == 0.0 {
        path.values.resize(n_steps + 1, 0.0);
        return Ok(path);
    }
    let sqrt_dt = libm::sqrt(dt);
    let mut x = x0;
    for step in 1..=n_steps {
        let g: f64 = rng.sample(StandardNormal);
        let next = x + drift(x) * dt + rho * guarded_sqrt(variance(x))? * g * sqrt_dt;
        if !next.is_finite() {
            return Err(Error::AxisBlowup {
                step,
                partial: Box::new(path),
            });
        }
        if next <= 0.0 {
            path.absorption_time = Some(step as f64 * dt);
            path.values.resize(n_steps + 1, 0.0);
            return Ok(path);
        }
        x = next;
        path.values.push(x);
    }
    Ok(path)
}

/// Prey dynamics on the predator-free axis:
/// `dN = (N − N²/k) dt + ρ √(N + N²/k) dB`.
pub fn simulate_axis_prey<R: Rng + ?Sized>(
    params: &ModelParams,
    n0: f64,
    dt: f64,
    horizon: f64,
    rng: &mut R,
) -> Result<AxisPath> {
    let k = params.k();
    axis_em(
        n0,
        dt,
        horizon,
        params.rho(),
        rng,
        |n| n - n * n / k,
        |n| n + n * n / k,
    )
}

/// Predator dynamics on the prey-free axis, a CIR process with zero mean level:
/// `dP = −cP dt + ρ √(cP) dB`.
pub fn simulate_axis_predator<R: Rng + ?Sized>(
    params: &ModelParams,
    p0: f64,
    dt: f64,
    horizon: f64,
    rng: &mut R,
) -> Result<AxisPath> {
    let c = params.c();
    axis_em(p0, dt, horizon, params.rho(), rng, |p| -c * p, |p| c * p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn reference() -> ModelParams {
        ModelParams::new(3.0, 2.0, 0.8, 100.0).unwrap()
    }

    const Z0: DensityState = DensityState::new(0.8, 0.6);

    #[test]
    fn step_counts() {
        assert_eq!(step_count(100.0, 0.01).unwrap(), 10_000);
        assert_eq!(step_count(10.0, 0.01).unwrap(), 1000);
        assert_eq!(step_count(1.05, 0.1).unwrap(), 11);
        assert_eq!(step_count(0.1, 0.1).unwrap(), 1);
        assert!(step_count(0.05, 0.1).is_err());
        assert!(step_count(1.0, 0.0).is_err());
    }

    #[test]
    fn zero_noise_is_drift_step() {
        let p = reference();
        for kind in [
            FactorizationKind::Event4D,
            FactorizationKind::Cholesky2D,
            FactorizationKind::Diagonal2D,
        ] {
            let noise = [0.0; 4];
            let z = em_step(&p, Z0, 0.01, &noise[..kind.noise_dim()], kind).unwrap();
            let mu = model::drift(&p, Z0).unwrap();
            assert_eq!(z, DensityState::new(0.8 + mu[0] * 0.01, 0.6 + mu[1] * 0.01));
        }
        let eq = DensityState::new(2.0 / 3.0, 35.0 / 54.0);
        let z = em_step(&p, eq, 0.01, &[0.0; 2], FactorizationKind::Cholesky2D).unwrap();
        assert!((z.prey - eq.prey).abs() <= 1e-12 && (z.predator - eq.predator).abs() <= 1e-12);
    }

    #[test]
    fn em_step_argument_errors() {
        let p = reference();
        assert!(em_step(&p, Z0, 0.01, &[0.0; 2], FactorizationKind::Event4D).is_err());
        assert!(matches!(
            em_step(
                &p,
                DensityState::new(0.0, 0.5),
                0.01,
                &[0.1, 0.1],
                FactorizationKind::Cholesky2D
            ),
            Err(Error::DegenerateCovariance { .. })
        ));
        // the event and diagonal factors are fine on the boundary
        assert!(em_step(
            &p,
            DensityState::new(0.0, 0.5),
            0.01,
            &[0.1; 4],
            FactorizationKind::Event4D
        )
        .is_ok());
        assert!(em_step(
            &p,
            DensityState::new(0.0, 0.5),
            0.01,
            &[0.1; 2],
            FactorizationKind::Diagonal2D
        )
        .is_ok());
    }

    #[test]
    fn one_step_covariance_matches_sigma() {
        // Monte Carlo second-moment oracle: Cov(step) = ρ² Σ(z) dt
        let p = reference();
        let z = DensityState::new(1.0, 1.0);
        let dt = 0.01;
        let sigma = model::covariance(&p, z).unwrap();
        let scale = p.rho() * p.rho() * dt;
        let draws = 100_000;
        for (kind, seed) in [
            (FactorizationKind::Event4D, 11),
            (FactorizationKind::Cholesky2D, 12),
        ] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut xs = Vec::with_capacity(draws);
            for _ in 0..draws {
                let mut noise = [0.0; 4];
                for w in noise.iter_mut().take(kind.noise_dim()) {
                    *w = rng.sample::<f64, _>(StandardNormal) * dt.sqrt();
                }
                let s = em_step(&p, z, dt, &noise[..kind.noise_dim()], kind).unwrap();
                xs.push([s.prey - z.prey, s.predator - z.predator]);
            }
            let n = draws as f64;
            let mean = [0, 1].map(|i| xs.iter().map(|x| x[i]).sum::<f64>() / n);
            for (i, j) in [(0, 0), (0, 1), (1, 1)] {
                let prods: Vec<f64> = xs
                    .iter()
                    .map(|x| (x[i] - mean[i]) * (x[j] - mean[j]))
                    .collect();
                let cov = prods.iter().sum::<f64>() / n;
                let var = prods.iter().map(|v| (v - cov) * (v - cov)).sum::<f64>() / n;
                let se = (var / n).sqrt();
                let want = sigma[i][j] * scale;
                assert!(
                    (cov - want).abs() <= 3.0 * se,
                    "{kind:?} ({i},{j}): {cov} vs {want}"
                );
            }
        }
    }

    #[test]
    fn diagonal_surrogate_has_uncorrelated_steps() {
        let p = reference();
        let z = DensityState::new(1.0, 1.0);
        let dt: f64 = 0.01;
        let draws = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut xs = Vec::with_capacity(draws);
        for _ in 0..draws {
            let noise = [0, 1].map(|_| rng.sample::<f64, _>(StandardNormal) * dt.sqrt());
            let s = em_step(&p, z, dt, &noise, FactorizationKind::Diagonal2D).unwrap();
            xs.push([s.prey - z.prey, s.predator - z.predator]);
        }
        let n = draws as f64;
        let mean = [0, 1].map(|i| xs.iter().map(|x| x[i]).sum::<f64>() / n);
        let c = |i: usize, j: usize| {
            xs.iter()
                .map(|x| (x[i] - mean[i]) * (x[j] - mean[j]))
                .sum::<f64>()
                / n
        };
        let r = c(0, 1) / (c(0, 0) * c(1, 1)).sqrt();
        assert!(r.abs() <= 3.0 / n.sqrt(), "r = {r}");
        // the full factor at the same state is clearly correlated
        let sigma = model::covariance(&p, z).unwrap();
        assert!(sigma[0][1] / (sigma[0][0] * sigma[1][1]).sqrt() < -0.3);
    }

    #[test]
    fn zero_noise_path_is_euler_and_ignores_stream() {
        let p = ModelParams::with_rho(3.0, 2.0, 0.8, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a =
            simulate_absorbed(&p, Z0, 0.01, 10.0, FactorizationKind::Cholesky2D, &mut rng).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b =
            simulate_absorbed(&p, Z0, 0.01, 10.0, FactorizationKind::Event4D, &mut rng).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.absorption_time, None);
        assert_eq!(a.states.len(), 1001);
        let mut z = Z0;
        for s in &a.states[1..] {
            let mu = model::drift(&p, z).unwrap();
            z = DensityState::new(z.prey + mu[0] * 0.01, z.predator + mu[1] * 0.01);
            assert_eq!(*s, z);
        }
    }

    #[test]
    fn freezing_after_absorption() {
        let p = ModelParams::new(3.0, 2.0, 0.8, 4.0).unwrap();
        let mut absorbed = 0;
        for seed in 0..40 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let path = simulate_absorbed(&p, Z0, 0.01, 50.0, FactorizationKind::Event4D, &mut rng)
                .unwrap();
            assert_eq!(path.states.len(), 5001);
            match path.absorption_index() {
                Some(j) => {
                    absorbed += 1;
                    let frozen = path.states[j];
                    assert!(path.states[j..]
                        .iter()
                        .all(|s| s.to_bits() == frozen.to_bits()));
                    assert!(path.states[..j].iter().all(DensityState::is_interior));
                    let axis = path.absorbed_axis.unwrap();
                    assert_eq!(frozen.prey == 0.0, axis != AbsorbedAxis::PredatorZero);
                    assert_eq!(frozen.predator == 0.0, axis != AbsorbedAxis::PreyZero);
                    let tau = path.absorption_time.unwrap();
                    assert_eq!(tau, j as f64 * 0.01);
                }
                None => assert!(path.states.iter().all(DensityState::is_interior)),
            }
        }
        assert!(absorbed > 0);
    }

    trait Bits {
        fn to_bits(&self) -> (u64, u64);
    }

    impl Bits for DensityState {
        fn to_bits(&self) -> (u64, u64) {
            (self.prey.to_bits(), self.predator.to_bits())
        }
    }

    #[test]
    fn rejects_boundary_start() {
        let p = reference();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(simulate_absorbed(
            &p,
            DensityState::new(0.0, 1.0),
            0.01,
            1.0,
            FactorizationKind::Event4D,
            &mut rng
        )
        .is_err());
        assert!(
            simulate_absorbed(&p, Z0, 0.01, 0.001, FactorizationKind::Event4D, &mut rng).is_err()
        );
    }

    #[test]
    fn axis_paths_from_zero_stay_zero() {
        let p = reference();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = simulate_axis_prey(&p, 0.0, 0.01, 5.0, &mut rng).unwrap();
        assert!(a.values.iter().all(|&v| v == 0.0));
        assert_eq!(a.values.len(), 501);
        let b = simulate_axis_predator(&p, 0.0, 0.01, 5.0, &mut rng).unwrap();
        assert!(b.values.iter().all(|&v| v == 0.0));
        assert_eq!(b.absorption_time, None);
    }

    #[test]
    fn noiseless_prey_axis_is_logistic() {
        let p = ModelParams::with_rho(1.0, 2.0, 0.8, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = simulate_axis_prey(&p, 0.5, 0.01, 20.0, &mut rng).unwrap();
        let exact = |t: f64| 0.5 * t.exp() / (1.0 + 0.5 * (t.exp() - 1.0));
        assert!((a.values[2000] - 1.0).abs() <= 1e-3);
        assert!((a.values[2000] - exact(20.0)).abs() <= 1e-3);
    }

    #[test]
    fn predator_axis_mean_decays_exponentially() {
        let p = ModelParams::with_rho(3.0, 2.0, 0.8, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let reps = 5000;
        let idx = [100, 200, 500];
        let mut samples = [Vec::new(), Vec::new(), Vec::new()];
        for _ in 0..reps {
            let path = simulate_axis_predator(&p, 1.0, 0.01, 5.0, &mut rng).unwrap();
            for (s, &i) in samples.iter_mut().zip(&idx) {
                s.push(path.values[i]);
            }
        }
        for (s, &i) in samples.iter().zip(&idx) {
            let n = s.len() as f64;
            let mean = s.iter().sum::<f64>() / n;
            let var = s.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            let exact = (-0.8 * i as f64 * 0.01).exp();
            assert!(
                (mean - exact).abs() <= 3.0 * (var / n).sqrt(),
                "t={}: {mean} vs {exact}",
                i as f64 * 0.01
            );
        }
    }
}
