//! Lattice piecewise-affine approximation of linear-MPC control laws.
//!
//! The crate builds max-min (lattice) PWA approximations of explicit MPC
//! controllers from sampled KKT solutions, and benchmarks them against
//! online MPC and LQR on a nonlinear satellite attitude-control plant:
//!
//! * [`linalg`] - dense kernels: active-set QP, discrete Riccati, LQR gain
//! * [`satellite`] - nonlinear attitude dynamics, linearization, ZOH
//! * [`mpc`] - condensation of the constrained MPC problem into a
//!   parametric QP in the state
//! * [`explicit`] - local affine law and critical region from the KKT
//!   conditions at a sample state
//! * [`lattice`] - lattice PWA construction, evaluation, simplification,
//!   error-bound estimation and file I/O
//! * [`sim`] - closed-loop simulation and controller comparison
//! * [`config`] / [`pipeline`] - JSON configuration and CLI orchestration

pub mod config;
pub mod error;
pub mod explicit;
pub mod lattice;
pub mod linalg;
pub mod mpc;
pub mod pipeline;
pub mod satellite;
pub mod sim;

pub use error::{Error, Result};
