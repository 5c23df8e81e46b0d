//! Preparation of spin-squeezed states of `N` two-level atoms under
//! `H = omega Jz + chi(t) Jx^2`: ground states, adiabatic ramps, CRAB
//! optimal control, telegraph noise and collective dissipation.

pub mod crab;
pub mod error;
pub mod linalg;
pub mod nelder_mead;
pub mod open_system;
pub mod propagator;
pub mod spin;
pub mod telegraph;

pub use crab::{optimize, qsl_time, CrabAnsatz, FrequencyRule, OptimizationReport, OptimizerSettings};
pub use error::{Error, Result};
pub use propagator::{
    infidelity, propagate, time_to_reach, ControlProtocol, Method, PropagationConfig, ProtocolFamily, ScanSettings,
};
pub use spin::{
    ground_state, observables, HamiltonianParams, Observables, SpinOperators, SqueezingTarget, StateVector,
};
