use crate::{Error, Result};

/// Continuous prey/predator densities `(N, P)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DensityState {
    pub prey: f64,
    pub predator: f64,
}

impl DensityState {
    pub const fn new(prey: f64, predator: f64) -> Self {
        Self { prey, predator }
    }

    /// Checks that both coordinates are finite and nonnegative.
    pub fn validated(self) -> Result<Self> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        if ok(self.prey) && ok(self.predator) {
            Ok(self)
        } else {
            Err(Error::InvalidState {
                prey: self.prey,
                predator: self.predator,
            })
        }
    }

    pub fn is_interior(&self) -> bool {
        self.prey > 0.0 && self.predator > 0.0
    }

    pub fn is_finite(&self) -> bool {
        self.prey.is_finite() && self.predator.is_finite()
    }

    pub fn norm_sq(&self) -> f64 {
        self.prey * self.prey + self.predator * self.predator
    }
}

impl From<(f64, f64)> for DensityState {
    fn from((prey, predator): (f64, f64)) -> Self {
        Self { prey, predator }
    }
}

/// Integer prey/predator counts `(n, p)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CountState {
    pub prey: u64,
    pub predator: u64,
}

impl CountState {
    pub const fn new(prey: u64, predator: u64) -> Self {
        Self { prey, predator }
    }

    /// Density `x / omega`.
    pub fn density(&self, omega: f64) -> DensityState {
        DensityState::new(self.prey as f64 / omega, self.predator as f64 / omega)
    }

    /// Nearest count state to `omega * z`.
    pub fn from_density(z: DensityState, omega: f64) -> Result<Self> {
        let z = z.validated()?;
        if !omega.is_finite() {
            return Err(Error::InvalidArgument("counts need a finite system size"));
        }
        let n = libm::round(z.prey * omega);
        let p = libm::round(z.predator * omega);
        if n > u64::MAX as f64 || p > u64::MAX as f64 {
            return Err(Error::InvalidArgument("count overflows u64"));
        }
        Ok(Self::new(n as u64, p as u64))
    }
}
