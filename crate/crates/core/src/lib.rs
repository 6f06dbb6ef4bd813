//! Desk-scale laboratory for decentralized stochastic gradient methods.
//!
//! The crate simulates `n` agents that each hold a local objective and
//! communicate through a doubly stochastic mixing matrix. The centerpiece is
//! the momentum-tracking method with loopless Chebyshev acceleration
//! ([`optimizers::Variant::Dsmt`]); the usual decentralized and centralized
//! baselines run on the same problems and random streams so their curves can
//! be compared directly.
//!
//! Modules:
//! - [`topology`]: graphs, mixing matrices, spectral quantities, LCA operator
//! - [`oracle`]: datasets, partitions, objectives and stochastic gradients
//! - [`optimizers`]: steppers and stepsize/momentum selectors
//! - [`diagnostics`]: per-iteration metrics, Lyapunov probe, transient times
//! - [`harness`]: config parsing, trial runner, CSV and manifest output

pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod matrix_io;
pub mod optimizers;
pub mod oracle;
pub mod topology;

pub use error::{LabError, Result};
