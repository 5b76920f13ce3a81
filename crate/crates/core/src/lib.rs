//! Calibration of a simulated balanced homodyne detector from the data
//! patterns of phase-averaged coherent probes, and reconstruction of unknown
//! states by constrained fitting of those patterns, cross-checked against a
//! maximum-likelihood reconstruction under the ideal quadrature measurement.

pub mod error;
pub mod exec;
pub mod fdp;
pub mod fock;
pub mod herald;
pub mod homodyne;
pub mod ml;
pub mod probe;
pub mod seed;
pub mod special;
pub mod uncertainty;

pub use error::{FdpError, Result};
pub use exec::Execution;
pub use fdp::{assemble_state, fdp_fit, objective, residuals, FdpProblem, FdpSolution, SolverOptions};
pub use fock::{fidelity, fock_state, loss_channel, photon_statistics, wigner, DensityMatrix, WignerGrid};
pub use homodyne::{acquire_pattern, acquire_probe_patterns, BinningSpec, DataPattern, DetectorModel};
pub use probe::{build_probe_ladder, calibrate_alpha, phav_density, ProbeSet};
