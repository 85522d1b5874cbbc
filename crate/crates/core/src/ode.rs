//! Adaptive Dormand–Prince 5(4) integration of the mean-field ODE
//!
//! ```text
//! dN/dt = N(1 - N/k) - mNP/(1+N)
//! dP/dt = P(mN/(1+N) - c)
//! ```
//!
//! with a PI step-size controller, positivity repair and dense output.

use alloc::vec::Vec;

use crate::model::drift_raw;
use crate::{DensityState, Error, ModelParams, Result};

pub const DEFAULT_REL_TOL: f64 = 1e-8;
pub const DEFAULT_ABS_TOL: f64 = 1e-10;

// Dormand–Prince tableau (nodes 1/5, 3/10, 4/5, 8/9, 1, 1; f is autonomous).
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// 5th minus embedded 4th order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Continuous extension.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const EXPO: f64 = 0.2 - BETA * 0.75;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

type Vec2 = [f64; 2];

#[derive(Debug, Clone, PartialEq)]
pub struct OdeTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityState>,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    /// Sum of the absolute local error estimates over accepted steps.
    pub error_estimate: f64,
    /// Largest negative excursion removed by positivity repair.
    pub max_clamp: f64,
}

impl OdeTrajectory {
    pub fn last(&self) -> DensityState {
        *self
            .states
            .last()
            .expect("trajectory holds the initial state")
    }
}

/// Integrates from `z0` over `[0, horizon]`.
///
/// Without `output_grid` the trajectory holds every accepted step; with a grid
/// (strictly increasing, starting at 0, ending at or before `horizon`) it holds
/// the dense-output interpolant at the grid points.
pub fn integrate(
    params: &ModelParams,
    z0: DensityState,
    horizon: f64,
    rel_tol: f64,
    abs_tol: f64,
    output_grid: Option<&[f64]>,
) -> Result<OdeTrajectory> {
    let z0 = z0.validated()?;
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::InvalidArgument("horizon must be finite and > 0"));
    }
    for tol in [rel_tol, abs_tol] {
        if !(tol > 0.0 && tol <= 1e-2) {
            return Err(Error::InvalidArgument("tolerances must lie in (0, 1e-2]"));
        }
    }
    if let Some(grid) = output_grid {
        check_grid(grid, horizon)?;
    }

    let f = |y: &Vec2| drift_raw(params, y[0], y[1]);
    let mut out = OdeTrajectory {
        times: Vec::new(),
        states: Vec::new(),
        rel_tol,
        abs_tol,
        accepted_steps: 0,
        rejected_steps: 0,
        error_estimate: 0.0,
        max_clamp: 0.0,
    };
    let mut grid_pos = 0;
    let emit = |out: &mut OdeTrajectory, t: f64, y: Vec2| {
        out.times.push(t);
        out.states.push(DensityState::new(y[0], y[1]));
    };

    let mut t = 0.0;
    let mut y = [z0.prey, z0.predator];
    let mut k1 = f(&y);
    match output_grid {
        None => emit(&mut out, t, y),
        Some(grid) => {
            // grid[0] == 0
            emit(&mut out, grid[0], y);
            grid_pos = 1;
        }
    }

    let h_min = 1e-14 * horizon;
    let mut h = initial_step(&f, &y, &k1, horizon, rel_tol, abs_tol);
    let mut err_old: f64 = 1e-4;
    let mut last_rejected = false;

    while t < horizon {
        if h < h_min {
            return Err(Error::StepSizeUnderflow { t, h });
        }
        let finishing = t + h >= horizon;
        if finishing {
            h = horizon - t;
        }

        let k2 = f(&axpy(&y, h, &[(A21, &k1)]));
        let k3 = f(&axpy(&y, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = f(&axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = f(&axpy(
            &y,
            h,
            &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)],
        ));
        let k6 = f(&axpy(
            &y,
            h,
            &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
        ));
        let y_new = axpy(
            &y,
            h,
            &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
        );
        let k7 = f(&y_new);

        let mut err_sq = 0.0;
        let mut err_abs: f64 = 0.0;
        for i in 0..2 {
            let e =
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = abs_tol + rel_tol * y[i].abs().max(y_new[i].abs());
            err_sq += (e / sc) * (e / sc);
            err_abs = err_abs.max(e.abs());
        }
        let err = libm::sqrt(err_sq / 2.0);
        if !err.is_finite() || !y_new.iter().all(|v| v.is_finite()) {
            if h <= h_min {
                return Err(Error::Divergence { t: t + h });
            }
            h *= 0.25;
            out.rejected_steps += 1;
            last_rejected = true;
            continue;
        }

        let fac11 = libm::pow(err, EXPO);
        let too_negative = y_new.iter().any(|&v| v < -abs_tol);
        if err <= 1.0 && !too_negative {
            let mut y_acc = y_new;
            let mut k_next = k7;
            let mut clamped = false;
            for v in y_acc.iter_mut() {
                if *v < 0.0 {
                    out.max_clamp = out.max_clamp.max(-*v);
                    *v = 0.0;
                    clamped = true;
                }
            }
            if clamped {
                k_next = f(&y_acc);
            }

            let t_new = if finishing { horizon } else { t + h };
            match output_grid {
                None => emit(&mut out, t_new, y_acc),
                Some(grid) => {
                    let dense = DenseStep::new(&y, &y_new, &k1, &[k3, k4, k5, k6, k7], h);
                    while grid_pos < grid.len() && grid[grid_pos] <= t_new {
                        let theta = ((grid[grid_pos] - t) / h).clamp(0.0, 1.0);
                        let mut v = dense.eval(theta);
                        for x in v.iter_mut() {
                            if *x < 0.0 {
                                *x = 0.0;
                            }
                        }
                        if grid[grid_pos] == t_new {
                            v = y_acc;
                        }
                        emit(&mut out, grid[grid_pos], v);
                        grid_pos += 1;
                    }
                }
            }

            out.accepted_steps += 1;
            out.error_estimate += err_abs;
            t = t_new;
            y = y_acc;
            k1 = k_next;

            let mut fac = fac11 / libm::pow(err_old, BETA);
            fac = (fac / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = h / fac;
            if last_rejected {
                h_new = h_new.min(h);
            }
            err_old = err.max(1e-4);
            last_rejected = false;
            h = h_new;
        } else {
            out.rejected_steps += 1;
            h = if too_negative && err <= 1.0 {
                h * 0.5
            } else {
                h / (fac11 / SAFETY).min(1.0 / FAC_MIN)
            };
            last_rejected = true;
        }
    }
    Ok(out)
}

fn check_grid(grid: &[f64], horizon: f64) -> Result<()> {
    if grid.first() != Some(&0.0) {
        return Err(Error::InvalidArgument("output grid must start at 0"));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument(
            "output grid must be strictly increasing",
        ));
    }
    if grid.iter().any(|&t| !t.is_finite() || t > horizon) {
        return Err(Error::InvalidArgument("output grid exceeds the horizon"));
    }
    Ok(())
}

fn axpy(y: &Vec2, h: f64, terms: &[(f64, &Vec2)]) -> Vec2 {
    let mut out = *y;
    for i in 0..2 {
        let s: f64 = terms.iter().map(|(a, k)| a * k[i]).sum();
        out[i] += h * s;
    }
    out
}

fn initial_step<F: Fn(&Vec2) -> Vec2>(
    f: &F,
    y: &Vec2,
    f0: &Vec2,
    horizon: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> f64 {
    let sc = |i: usize| abs_tol + rel_tol * y[i].abs();
    let norm = |v: &Vec2| {
        let (a, b) = (v[0] / sc(0), v[1] / sc(1));
        libm::sqrt((a * a + b * b) / 2.0)
    };
    let d0 = norm(y);
    let d1 = norm(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let h0 = h0.min(horizon);
    let y1 = axpy(y, h0, &[(1.0, f0)]);
    let f1 = f(&y1);
    let d2 = norm(&[f1[0] - f0[0], f1[1] - f0[1]]) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (1e-6f64).max(h0 * 1e-3)
    } else {
        libm::pow(0.01 / d1.max(d2), 0.2)
    };
    (100.0 * h0).min(h1).min(horizon)
}

/// Fourth-order continuous extension of one accepted step.
struct DenseStep {
    r: [Vec2; 5],
}

impl DenseStep {
    fn new(y: &Vec2, y1: &Vec2, k1: &Vec2, k: &[Vec2; 5], h: f64) -> Self {
        let [k3, k4, k5, k6, k7] = k;
        let mut r = [[0.0; 2]; 5];
        for i in 0..2 {
            let ydiff = y1[i] - y[i];
            let bspl = h * k1[i] - ydiff;
            r[0][i] = y[i];
            r[1][i] = ydiff;
            r[2][i] = bspl;
            r[3][i] = ydiff - h * k7[i] - bspl;
            r[4][i] =
                h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
        }
        Self { r }
    }

    fn eval(&self, theta: f64) -> Vec2 {
        let t1 = 1.0 - theta;
        let r = &self.r;
        let mut out = [0.0; 2];
        for i in 0..2 {
            out[i] =
                r[0][i] + theta * (r[1][i] + t1 * (r[2][i] + theta * (r[3][i] + t1 * r[4][i])));
        }
        out
    }
}

/// Outcome of [`dissipativity_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DissipativityReport {
    pub entered: bool,
    pub entry_time: Option<f64>,
    pub violations_after_entry: usize,
    /// Points where `N + βP` exceeds its exponential comparison bound.
    pub bound_violations: usize,
}

/// Checks a trajectory against the absorbing set
/// `{N <= k + δ, N + βP <= k(1+c)²/(4c) + ε}` and the comparison bound
/// `S_β(t) <= S_β(0)e^{-ct} + k(1+c)²/(4c)(1 - e^{-ct})`.
pub fn dissipativity_check(
    traj: &OdeTrajectory,
    params: &ModelParams,
    beta: f64,
    eps: f64,
    delta: f64,
) -> Result<DissipativityReport> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::InvalidArgument("beta must lie in (0, 1]"));
    }
    if !(eps > 0.0 && delta > 0.0) {
        return Err(Error::InvalidArgument("eps and delta must be positive"));
    }
    let (k, c) = (params.k(), params.c());
    let level = k * (1.0 + c) * (1.0 + c) / (4.0 * c);
    let slack = 10.0 * traj.abs_tol;
    let s = |z: &DensityState| z.prey + beta * z.predator;
    let inside =
        |z: &DensityState, slack: f64| z.prey <= k + delta + slack && s(z) <= level + eps + slack;

    let mut report = DissipativityReport {
        entered: false,
        entry_time: None,
        violations_after_entry: 0,
        bound_violations: 0,
    };
    let Some(first) = traj.states.first() else {
        return Ok(report);
    };
    let s0 = s(first);
    for (t, z) in traj.times.iter().zip(&traj.states) {
        if report.entered {
            if !inside(z, slack) {
                report.violations_after_entry += 1;
            }
        } else if inside(z, 0.0) {
            report.entered = true;
            report.entry_time = Some(*t);
        }
        let decay = libm::exp(-c * t);
        if s(z) > s0 * decay + level * (1.0 - decay) + slack {
            report.bound_violations += 1;
        }
    }
    Ok(report)
}
