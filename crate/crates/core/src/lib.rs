//! Solvers for a single trapped ion dispersively coupled to a pumped, lossy
//! optical cavity.
//!
//! The crate provides four complementary treatments of the same model:
//!
//! * [`semiclassical`] — lowest-order mean-field solution: intracavity field,
//!   effective potential, classical equilibria and the bistability markers.
//! * [`gaussian`] — linearized fluctuations around one equilibrium branch,
//!   with the steady covariance from the continuous Lyapunov equation.
//! * [`sde`] — ensemble integration of the stochastic process equivalent to
//!   the truncated-Wigner Fokker-Planck equation, with a strong order-1.5
//!   Taylor scheme and deterministic per-trajectory random streams.
//! * [`lindblad`] — small-cutoff fully quantum reference: truncated-Fock
//!   master-equation integration and quantum-jump trajectories.
//!
//! [`metastability`] extracts two-state transition rates from the phase-space
//! dynamics via Gaussian-mixture fits and mean first passage times, and
//! [`model`] holds the shared dimensionless parameter set.

pub mod gaussian;
pub mod lindblad;
pub mod metastability;
pub mod model;
pub mod sde;
pub mod semiclassical;

pub use model::{ModelError, ModelParams};
