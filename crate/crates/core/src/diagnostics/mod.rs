//! Per-iteration metrics, runtime identity checks, the Lyapunov surrogate
//! and transient-time estimation.

mod lyapunov;
mod metrics;
mod transient;

pub use lyapunov::{lyapunov_probe, LyapunovProbe};
pub use metrics::{consensus_projector, running_min, MetricsRecorder, MetricsRow};
pub use transient::{estimate_transient, TransientEstimate, DEFAULT_TRANSIENT_FACTOR};
