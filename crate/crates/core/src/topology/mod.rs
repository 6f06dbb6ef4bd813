//! Communication graphs, doubly stochastic mixing matrices, their spectra,
//! and the loopless Chebyshev acceleration operator.

mod graph;
mod lca;
mod mixing;
pub mod spectral;

pub use graph::{build_graph, Graph, GraphKind, GraphSpec, ER_MAX_ATTEMPTS};
pub use lca::{lca_params, LcaOperator, C0};
pub use mixing::{mixing_from_graph, MixingMatrix, WeightScheme, PSD_TOL, STOCHASTIC_TOL};

/// Cached `λ = ‖W − 𝟏𝟏ᵀ/n‖₂` of a validated mixing matrix.
pub fn spectral_gap(mixing: &MixingMatrix) -> f64 {
    mixing.lambda()
}
