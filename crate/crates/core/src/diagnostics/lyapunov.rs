use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::metrics::{consensus_projector, MetricsRecorder};
use crate::error::{LabError, Result};
use crate::optimizers::{mean_row, AlgorithmState, HyperParams};
use crate::oracle::{ObjectiveSuite, ProblemConstants};
use crate::topology::LcaOperator;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovProbe {
    /// Always `"surrogate"`: consensus envelopes are replaced by measured errors.
    pub label: String,
    pub k: usize,
    pub components: Vec<(String, f64)>,
}

impl LyapunovProbe {
    pub const NAMES: [&'static str; 5] = [
        "dbar_gap",
        "consensus_x",
        "consensus_y",
        "momentum_mean",
        "momentum_deviation",
    ];

    pub fn total(&self) -> f64 {
        self.components.iter().map(|(_, v)| v).sum()
    }
}

/// The five addends of the momentum-tracking Lyapunov function on a single
/// trajectory, with `x̄_{−1} = x̄₀` and `z₋₁ = 0`.
pub fn lyapunov_probe(
    state: &AlgorithmState,
    recorder: &MetricsRecorder,
    oracle: &ObjectiveSuite,
    constants: &ProblemConstants,
    lca: &LcaOperator,
    hp: &HyperParams,
) -> Result<LyapunovProbe> {
    if state.z.nrows() == 0 {
        return Err(LabError::Domain(format!("{} carries no momentum buffer", state.variant)));
    }
    let dbar = recorder
        .dbar(state)
        .ok_or_else(|| LabError::Domain("no d̄ sequence for this variant".into()))?;
    let gap = recorder
        .gap(oracle, &dbar)?
        .ok_or_else(|| LabError::Oracle("Lyapunov probe needs a known f*".into()))?;
    let n = state.n() as f64;
    let HyperParams { alpha, beta, .. } = *hp;
    let ProblemConstants { l, c, .. } = *constants;
    let rho = lca.rho_tilde_w();
    let c0 = lca.c0();
    let gap_rho = 1.0 - rho;
    let a3 = alpha.powi(3);
    let mut stacked_grad = DMatrix::zeros(state.n(), state.dim());
    for i in 0..state.n() {
        let (_, g) = oracle.eval_full(i, &state.x_bar_prev)?;
        stacked_grad.set_row(i, &g.transpose());
    }
    let deviation = (&state.z_prev - stacked_grad).norm_squared();
    let components = vec![
        gap,
        3.0 * alpha * l * l / (n * gap_rho) * consensus_projector(&state.x).norm_squared(),
        12.0 * a3 * c0 * rho * l * l / (n * gap_rho.powi(3)) * consensus_projector(&state.y).norm_squared(),
        4.0 * a3 * l * (l + 2.0 * c) / (1.0 - beta).powi(3) * mean_row(&state.z_prev).norm_squared(),
        48.0 * a3 * c0 * c0 * rho * l * l / (n * gap_rho.powi(3)) * deviation,
    ];
    Ok(LyapunovProbe {
        label: "surrogate".into(),
        k: state.k,
        components: LyapunovProbe::NAMES
            .iter()
            .map(|s| s.to_string())
            .zip(components)
            .collect(),
    })
}
