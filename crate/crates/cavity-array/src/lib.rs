//! Photon transfer in a linear array of three coupled cavities with a
//! two-level system in the central cavity.
//!
//! The library covers both the strong-coupling regime, where the
//! rotating-wave approximation (RWA) holds and closed-form solutions
//! exist, and the ultrastrong-coupling regime, where counter-rotating
//! terms dominate and the dynamics is propagated numerically with a
//! 4th-order Suzuki-Trotter splitting.
//!
//! Modules:
//! - [`fock`]: truncated tensor-product Hilbert space, ladder/Pauli
//!   operators, initial states.
//! - [`model`]: Hamiltonian assembly (full, RWA variants, degenerate
//!   effective model).
//! - [`propagate`]: exact eigendecomposition and Trotter propagators,
//!   trajectory recording, cutoff convergence control.
//! - [`observe`]: expectation values, reduced density matrices,
//!   transfer fidelity.
//! - [`analytic`]: closed-form strong-coupling and degenerate-case
//!   solutions used as oracles.
//! - [`analysis`]: box-counting fractal dimension, inversion-time
//!   detection, coupling scans.
//! - [`cli`]: scenario configuration, execution and result persistence.

pub mod analysis;
pub mod analytic;
pub mod cli;
pub mod error;
pub mod fock;
pub mod io;
pub mod model;
pub mod observe;
pub mod propagate;

pub use error::SimError;

/// Library-wide result type.
pub type Result<T> = std::result::Result<T, SimError>;
