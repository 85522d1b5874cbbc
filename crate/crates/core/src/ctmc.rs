//! Exact simulation of the four-channel jump process on integer counts.
//!
//! Intensities follow the density-dependent form `Λ_e(x) = Ω λ_e(x/Ω)`. Paths
//! are sampled with the Gillespie direct method: an inverse-CDF exponential
//! waiting time at total intensity, then a single uniform against the
//! cumulative intensities. Each axis absorbs on its own: once `n = 0` the prey
//! stays extinct while the predator keeps dying out, and once `p = 0` the prey
//! follows its logistic birth–death chain.

use alloc::boxed::Box;
use alloc::vec::Vec;

use rand::Rng;

use crate::model::Channel;
use crate::{CountState, DensityState, Error, ModelParams, Result};

/// Default cap on jumps per path.
pub const DEFAULT_JUMP_BUDGET: u64 = 1_000_000_000;

/// Scaled intensities `(Λ_B, Λ_C, Λ_D, Λ_E)` at count state `x`.
pub fn scaled_intensities(params: &ModelParams, x: CountState) -> [f64; 4] {
    let omega = params.omega();
    let n = x.prey as f64;
    let p = x.predator as f64;
    [
        n,
        n * n / (params.k() * omega),
        params.c() * p,
        params.m() * n * p / (omega + n),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpPath {
    pub initial: CountState,
    pub horizon: f64,
    pub omega: f64,
    pub jump_times: Vec<f64>,
    /// Post-jump states, one per jump.
    pub states: Vec<CountState>,
    pub channels: Vec<Channel>,
}

impl JumpPath {
    pub fn len(&self) -> usize {
        self.jump_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jump_times.is_empty()
    }

    pub fn final_state(&self) -> CountState {
        self.states.last().copied().unwrap_or(self.initial)
    }

    /// State in force at time `t` (right-continuous).
    pub fn state_at(&self, t: f64) -> CountState {
        match self.jump_times.partition_point(|&s| s <= t) {
            0 => self.initial,
            i => self.states[i - 1],
        }
    }
}

/// Applies `channel`'s increment; `None` if it would leave `N₀²`.
pub fn apply(x: CountState, channel: Channel) -> Option<CountState> {
    let [dn, dp] = channel.increment();
    Some(CountState::new(
        x.prey.checked_add_signed(i64::from(dn))?,
        x.predator.checked_add_signed(i64::from(dp))?,
    ))
}

/// Core direct-method loop. `on_jump(t, channel, post_state)` sees every jump
/// in order. Returns the number of jumps fired, or `Err(count)` when the budget
/// ran out.
pub fn run_direct<R, F>(
    params: &ModelParams,
    x0: CountState,
    horizon: f64,
    budget: u64,
    rng: &mut R,
    mut on_jump: F,
) -> core::result::Result<u64, u64>
where
    R: Rng + ?Sized,
    F: FnMut(f64, Channel, CountState),
{
    let mut t = 0.0;
    let mut x = x0;
    let mut jumps = 0u64;
    loop {
        let lam = scaled_intensities(params, x);
        let total = lam[0] + lam[1] + lam[2] + lam[3];
        if total <= 0.0 {
            return Ok(jumps);
        }
        let u: f64 = rng.random();
        t += -libm::log(1.0 - u) / total;
        if t > horizon {
            return Ok(jumps);
        }
        if jumps == budget {
            return Err(jumps);
        }
        let target = rng.random::<f64>() * total;
        let mut cum = 0.0;
        let mut chosen = None;
        for ch in Channel::ALL {
            cum += lam[ch.index()];
            if cum > target {
                chosen = Some(ch);
                break;
            }
        }
        // `target` can round up to `total`; fall back to the last live channel.
        let ch = chosen.unwrap_or_else(|| {
            *Channel::ALL
                .iter()
                .rev()
                .find(|c| lam[c.index()] > 0.0)
                .expect("total intensity is positive")
        });
        x = apply(x, ch).expect("a channel with positive intensity keeps counts nonnegative");
        jumps += 1;
        on_jump(t, ch, x);
    }
}

/// Simulates one path on `[0, horizon]` with the default jump budget.
pub fn simulate<R: Rng + ?Sized>(
    params: &ModelParams,
    x0: CountState,
    horizon: f64,
    rng: &mut R,
) -> Result<JumpPath> {
    simulate_with_budget(params, x0, horizon, DEFAULT_JUMP_BUDGET, rng)
}

pub fn simulate_with_budget<R: Rng + ?Sized>(
    params: &ModelParams,
    x0: CountState,
    horizon: f64,
    budget: u64,
    rng: &mut R,
) -> Result<JumpPath> {
    check_setup(params, horizon)?;
    let mut path = JumpPath {
        initial: x0,
        horizon,
        omega: params.omega(),
        jump_times: Vec::new(),
        states: Vec::new(),
        channels: Vec::new(),
    };
    let outcome = run_direct(params, x0, horizon, budget, rng, |t, ch, x| {
        path.jump_times.push(t);
        path.channels.push(ch);
        path.states.push(x);
    });
    match outcome {
        Ok(_) => Ok(path),
        Err(_) => Err(Error::JumpBudgetExceeded {
            budget,
            partial: Box::new(path),
        }),
    }
}

/// Simulates one path and records only the state in force at each grid time,
/// without storing the jumps.
pub fn simulate_on_grid<R: Rng + ?Sized>(
    params: &ModelParams,
    x0: CountState,
    grid: &[f64],
    budget: u64,
    rng: &mut R,
) -> Result<Vec<CountState>> {
    let horizon = *grid
        .last()
        .ok_or(Error::InvalidArgument("grid must not be empty"))?;
    if grid.windows(2).any(|w| !(w[1] >= w[0])) || grid[0] < 0.0 {
        return Err(Error::InvalidArgument(
            "grid must be nondecreasing and >= 0",
        ));
    }
    if !params.omega().is_finite() {
        return Err(Error::InvalidArgument(
            "jump process needs a finite system size",
        ));
    }
    let mut out = Vec::with_capacity(grid.len());
    let mut current = x0;
    let mut pos = 0;
    let outcome = run_direct(params, x0, horizon, budget, rng, |t, _, x| {
        while pos < grid.len() && grid[pos] < t {
            out.push(current);
            pos += 1;
        }
        current = x;
    });
    if outcome.is_err() {
        return Err(Error::JumpBudgetExceeded {
            budget,
            partial: Box::new(JumpPath {
                initial: x0,
                horizon,
                omega: params.omega(),
                jump_times: Vec::new(),
                states: Vec::new(),
                channels: Vec::new(),
            }),
        });
    }
    out.resize(grid.len(), current);
    Ok(out)
}

fn check_setup(params: &ModelParams, horizon: f64) -> Result<()> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::InvalidArgument("horizon must be finite and > 0"));
    }
    if !params.omega().is_finite() {
        return Err(Error::InvalidArgument(
            "jump process needs a finite system size",
        ));
    }
    Ok(())
}

/// Piecewise-constant density `x(t)/Ω` at each grid time.
pub fn density_path(path: &JumpPath, grid: &[f64]) -> Result<Vec<DensityState>> {
    if grid.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(Error::InvalidArgument("grid must be increasing"));
    }
    if grid.iter().any(|&t| !(0.0..=path.horizon).contains(&t)) {
        return Err(Error::InvalidArgument("grid outside the simulated range"));
    }
    Ok(grid
        .iter()
        .map(|&t| path.state_at(t).density(path.omega))
        .collect())
}
