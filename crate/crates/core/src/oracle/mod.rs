//! Local objectives, synthetic data, heterogeneous partitions and
//! unbiased stochastic gradient oracles.

mod dataset;
mod objective;
mod partition;
mod reference;

pub use dataset::{generate_synthetic, Dataset};
pub use objective::{GradientSample, ObjectiveKind, ObjectiveSuite, Sampling};
pub use partition::{partition_heterogeneous, partition_shuffled, Partition};
pub use reference::{
    agent_minimum, estimate_constants, generate_quadratic, solve_reference, ProblemConstants, QuadraticSpec,
    ESTIMATE_ITERS, REFERENCE_GRAD_TOL,
};
