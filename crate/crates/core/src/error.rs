use alloc::boxed::Box;

use crate::ctmc::JumpPath;
use crate::sde::{AbsorbedPath, AxisPath};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid model parameters: {0}")]
    InvalidParams(&'static str),

    #[error("state ({prey}, {predator}) is not finite and nonnegative")]
    InvalidState { prey: f64, predator: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),

    /// The Cholesky factor only exists on the open quadrant.
    #[error("covariance is degenerate at boundary state ({prey}, {predator})")]
    DegenerateCovariance { prey: f64, predator: f64 },

    #[error("negative radicand {0:e} below the rounding guard")]
    NegativeRadicand(f64),

    #[error("step size underflow at t={t} (h={h:e}); problem looks stiff")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("ODE state became non-finite at t={t}")]
    Divergence { t: f64 },

    #[error("jump budget of {budget} exceeded")]
    JumpBudgetExceeded { budget: u64, partial: Box<JumpPath> },

    /// `partial` is `None` when the trajectory was streamed rather than stored.
    #[error("numerical blow-up: non-finite state at step {step}")]
    NumericalBlowup {
        step: usize,
        partial: Option<Box<AbsorbedPath>>,
    },

    #[error("numerical blow-up on the axis diffusion at step {step}")]
    AxisBlowup { step: usize, partial: Box<AxisPath> },
}
