//! Pseudospectral solver for the 3D incompressible Navier-Stokes equations on
//! the periodic box `[0, 2π)³`, with a blowup-diagnostics ledger,
//! analyticity-strip regularity monitoring, and convergence studies.

pub mod config;
pub mod convergence;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
mod fft;
pub mod field;
pub mod grid;
pub mod integrate;
pub mod regularity;
pub mod run;
pub mod snapshot;
mod stats;

pub use diagnostics::{DiagnosticsRecord, EnergyLedger};
pub use dynamics::{
    eval_forcing, make_initial_condition, nonlinear_term, rhs, ForcingKind, ForcingSpec,
    InitialConditionSpec, InitialKind, NavierStokes, PhysicsParams,
};
pub use error::{Error, Result};
pub use field::{
    curl, dealias, forward_transform, grad_norm_sq, inverse_transform, l2_norm_sq, leray_project,
    sobolev_norm, RealField, SpectralField,
};
pub use grid::{DealiasRule, GridSpec};
pub use integrate::{advance, cfl_dt, rk4_step, SimulationState, StepControl, StopReason};
pub use stats::{linear_fit, LineFit};
