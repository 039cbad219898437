//! Schwarz waveform relaxation solvers for the kinetic model problem
//!
//!   du/dt + v du/dx - d2u/dv2 = f   on (0,T) x [0,1] x [-1,1],
//!
//! periodic in x, homogeneous Neumann in v, discretized by operator
//! splitting: an implicit Euler / linear finite element parabolic
//! sub-step in v followed by a semi-Lagrangian transport sub-step in x.
//!
//! The velocity axis is split into two subdomains that exchange
//! whole-window interface traces, either Dirichlet data (classical
//! Schwarz, needs overlap) or Robin data p u + du/dv, q u - du/dv
//! (optimized Schwarz, converges without overlap). The [`sweep`] module
//! optimizes the Robin parameters empirically; the `kswr` binary drives
//! the iteration-count and parameter studies end to end.

pub mod grid;
pub mod linalg;
pub mod splitstep;
pub mod sweep;
pub mod swr;
pub mod verify;

pub use grid::{build_grid, Grid, GridConfig, SubdomainId};
pub use splitstep::{advance_window, BoundarySpec, Field, InterfaceTrace, VBoundary, WindowProblem};
pub use swr::{swr_run, Schedule, SwrConfig, SwrReport, TraceInit, TransmissionKind};
