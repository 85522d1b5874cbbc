use crate::{Error, Result};

/// Model parameters shared by every engine.
///
/// The system size `omega` and the noise amplitude `rho = omega^{-1/2}` are kept
/// in lockstep; `omega = +inf` (equivalently `rho = 0`) switches the diffusion
/// noise off.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelParams {
    k: f64,
    m: f64,
    c: f64,
    omega: f64,
    rho: f64,
}

impl ModelParams {
    pub fn new(k: f64, m: f64, c: f64, omega: f64) -> Result<Self> {
        Self::check_rates(k, m, c)?;
        if omega.is_nan() || omega < 1.0 {
            return Err(Error::InvalidParams("omega must be >= 1"));
        }
        Ok(Self {
            k,
            m,
            c,
            omega,
            rho: 1.0 / libm::sqrt(omega),
        })
    }

    /// Builds parameters from the noise amplitude; `omega = rho^{-2}`.
    pub fn with_rho(k: f64, m: f64, c: f64, rho: f64) -> Result<Self> {
        Self::check_rates(k, m, c)?;
        if !rho.is_finite() || !(0.0..=1.0).contains(&rho) {
            return Err(Error::InvalidParams("rho must lie in [0, 1]"));
        }
        Ok(Self {
            k,
            m,
            c,
            omega: 1.0 / (rho * rho),
            rho,
        })
    }

    fn check_rates(k: f64, m: f64, c: f64) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !ok(k) {
            return Err(Error::InvalidParams("k must be finite and > 0"));
        }
        if !ok(m) {
            return Err(Error::InvalidParams("m must be finite and > 0"));
        }
        if !ok(c) {
            return Err(Error::InvalidParams("c must be finite and > 0"));
        }
        Ok(())
    }

    /// Same `(k, m, c)` with a different system size.
    pub fn with_omega(&self, omega: f64) -> Result<Self> {
        Self::new(self.k, self.m, self.c, omega)
    }

    /// Same `(k, m, c)` with a different noise amplitude.
    pub fn with_noise(&self, rho: f64) -> Result<Self> {
        Self::with_rho(self.k, self.m, self.c, rho)
    }

    /// Prey carrying capacity.
    pub fn k(&self) -> f64 {
        self.k
    }

    /// Maximal predation / conversion rate.
    pub fn m(&self) -> f64 {
        self.m
    }

    /// Predator mortality.
    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }
}
