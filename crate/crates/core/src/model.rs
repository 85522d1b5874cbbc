//! Closed-form quantities of the predator–prey event model.
//!
//! Four reaction channels act on densities `z = (N, P)`:
//!
//! | channel | meaning                 | increment | rate            |
//! |---------|-------------------------|-----------|-----------------|
//! | B       | prey birth              | (1, 0)    | N               |
//! | C       | prey competition death  | (-1, 0)   | N²/k            |
//! | D       | predator death          | (0, -1)   | cP              |
//! | E       | predation + conversion  | (-1, 1)   | mNP/(1+N)       |
//!
//! The drift is `μ = Σ Δ_e λ_e` and the covariance is `Σ = Σ λ_e Δ_e Δ_eᵀ`.

use crate::{DensityState, Error, ModelParams, Result};

/// A 2×2 matrix in row-major order.
pub type Mat2 = [[f64; 2]; 2];

/// The 2×4 event factor, one column per channel in `B, C, D, E` order.
pub type EventFactor = [[f64; 4]; 2];

/// Rounding slack tolerated below zero before a square root.
pub const RADICAND_GUARD: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Channel {
    B,
    C,
    D,
    E,
}

impl Channel {
    pub const ALL: [Channel; 4] = [Channel::B, Channel::C, Channel::D, Channel::E];

    pub const fn index(self) -> usize {
        self as usize
    }

    pub const fn increment(self) -> [i8; 2] {
        match self {
            Channel::B => [1, 0],
            Channel::C => [-1, 0],
            Channel::D => [0, -1],
            Channel::E => [-1, 1],
        }
    }

    pub const fn label(self) -> char {
        match self {
            Channel::B => 'B',
            Channel::C => 'C',
            Channel::D => 'D',
            Channel::E => 'E',
        }
    }

    pub fn from_label(label: char) -> Option<Self> {
        Self::ALL.into_iter().find(|ch| ch.label() == label)
    }
}

/// Square root with the boundary rounding guard: radicands in `[-1e-14, 0)`
/// are treated as zero, anything more negative is an internal error.
pub fn guarded_sqrt(x: f64) -> Result<f64> {
    if x >= 0.0 {
        Ok(libm::sqrt(x))
    } else if x >= -RADICAND_GUARD {
        Ok(0.0)
    } else {
        Err(Error::NegativeRadicand(x))
    }
}

/// Functional response `mNP/(1+N)`, the rate of channel E.
#[inline]
fn predation(params: &ModelParams, n: f64, p: f64) -> f64 {
    params.m() * n * p / (1.0 + n)
}

/// Event rates `(λ_B, λ_C, λ_D, λ_E)` at density `z`.
pub fn rates(params: &ModelParams, z: DensityState) -> Result<[f64; 4]> {
    let z = z.validated()?;
    let (n, p) = (z.prey, z.predator);
    Ok([
        n,
        n * n / params.k(),
        params.c() * p,
        predation(params, n, p),
    ])
}

/// Rosenzweig–MacArthur vector field without input validation, for solver stages
/// that may sit a rounding error outside the quadrant.
#[inline]
pub(crate) fn drift_raw(params: &ModelParams, n: f64, p: f64) -> [f64; 2] {
    let pred = predation(params, n, p);
    [n - n * n / params.k() - pred, pred - params.c() * p]
}

/// Mean-field drift `μ(z)`.
pub fn drift(params: &ModelParams, z: DensityState) -> Result<[f64; 2]> {
    let z = z.validated()?;
    Ok(drift_raw(params, z.prey, z.predator))
}

/// Instantaneous covariance `Σ(z)`.
pub fn covariance(params: &ModelParams, z: DensityState) -> Result<Mat2> {
    let [b, c, d, e] = rates(params, z)?;
    Ok([[b + c + e, -e], [-e, d + e]])
}

/// `det Σ` via the expansion `(N + N²/k)(cP + λ_E) + λ_E·cP`, a sum of
/// nonnegative terms that never cancels.
pub fn covariance_det(params: &ModelParams, z: DensityState) -> Result<f64> {
    let [b, c, d, e] = rates(params, z)?;
    Ok((b + c) * (d + e) + e * d)
}

/// Event factor `L_ev` with column `e` equal to `√λ_e · Δ_e`.
pub fn event_factor(params: &ModelParams, z: DensityState) -> Result<EventFactor> {
    let lam = rates(params, z)?;
    let mut out = [[0.0; 4]; 2];
    for ch in Channel::ALL {
        let s = libm::sqrt(lam[ch.index()]);
        let [dn, dp] = ch.increment();
        out[0][ch.index()] = s * f64::from(dn);
        out[1][ch.index()] = s * f64::from(dp);
    }
    Ok(out)
}

/// Lower-triangular Cholesky factor of `Σ(z)`, defined on the open quadrant.
///
/// The Schur complement `Σ₂₂ − Σ₂₁²/Σ₁₁` is evaluated as `det Σ / Σ₁₁` so it
/// stays nonnegative without cancellation.
pub fn cholesky_factor(params: &ModelParams, z: DensityState) -> Result<Mat2> {
    let z = z.validated()?;
    if !z.is_interior() {
        return Err(Error::DegenerateCovariance {
            prey: z.prey,
            predator: z.predator,
        });
    }
    let [b, c, d, e] = rates(params, z)?;
    let s11 = b + c + e;
    let det = (b + c) * (d + e) + e * d;
    let l11 = guarded_sqrt(s11)?;
    let l21 = -e / l11;
    let l22 = guarded_sqrt(det / s11)?;
    Ok([[l11, 0.0], [l21, l22]])
}

/// Diagonal surrogate factor `diag(√Σ₁₁, √Σ₂₂)`, which drops the cross-covariance.
pub fn diagonal_factor(params: &ModelParams, z: DensityState) -> Result<Mat2> {
    let [b, c, d, e] = rates(params, z)?;
    Ok([[libm::sqrt(b + c + e), 0.0], [0.0, libm::sqrt(d + e)]])
}

/// Analytic Jacobian of the drift, `J[i][j] = ∂μ_i/∂z_j`.
pub fn jacobian(params: &ModelParams, z: DensityState) -> Result<Mat2> {
    let z = z.validated()?;
    let (n, p) = (z.prey, z.predator);
    let (k, m, c) = (params.k(), params.m(), params.c());
    let q = 1.0 + n;
    let dn_resp = m * p / (q * q);
    let resp = m * n / q;
    Ok([[1.0 - 2.0 * n / k - dn_resp, -resp], [dn_resp, resp - c]])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Regime {
    /// `m <= c` or `k <= N*`: predators die out deterministically.
    PredatorExtinction,
    /// `N* < k <= 1 + 2N*`: the coexistence equilibrium is stable.
    StableCoexistence,
    /// `k > 1 + 2N*`: past the Hopf threshold, orbits approach a limit cycle.
    LimitCycle,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RegimeReport {
    pub n_star: Option<f64>,
    pub p_star: Option<f64>,
    pub hopf_k: Option<f64>,
    pub jac_trace_k3: Option<f64>,
    pub regime: Regime,
}

impl RegimeReport {
    /// The coexistence equilibrium `K₃`, when it exists.
    pub fn coexistence(&self) -> Option<DensityState> {
        Some(DensityState::new(self.n_star?, self.p_star?))
    }
}

/// Equilibria, Hopf threshold and deterministic regime.
///
/// Depends on `(k, m, c)` only.
pub fn classify_regime(params: &ModelParams) -> RegimeReport {
    let (k, m, c) = (params.k(), params.m(), params.c());
    if m <= c {
        return RegimeReport {
            n_star: None,
            p_star: None,
            hopf_k: None,
            jac_trace_k3: None,
            regime: Regime::PredatorExtinction,
        };
    }
    let n_star = c / (m - c);
    let hopf_k = 1.0 + 2.0 * n_star;
    if k <= n_star {
        return RegimeReport {
            n_star: Some(n_star),
            p_star: None,
            hopf_k: Some(hopf_k),
            jac_trace_k3: None,
            regime: Regime::PredatorExtinction,
        };
    }
    let p_star = (1.0 + n_star) / m * (1.0 - n_star / k);
    let jac = jacobian(params, DensityState::new(n_star, p_star))
        .expect("coexistence equilibrium lies in the open quadrant");
    let regime = if k <= hopf_k {
        Regime::StableCoexistence
    } else {
        Regime::LimitCycle
    };
    RegimeReport {
        n_star: Some(n_star),
        p_star: Some(p_star),
        hopf_k: Some(hopf_k),
        jac_trace_k3: Some(jac[0][0] + jac[1][1]),
        regime,
    }
}
