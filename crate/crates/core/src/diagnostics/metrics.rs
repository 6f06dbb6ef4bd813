use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::optimizers::{mean_row, AlgorithmState, HyperParams, Variant};
use crate::oracle::{solve_reference, ObjectiveKind, ObjectiveSuite};

/// `ΠA = A − 𝟏·(mean row)ᵀ`.
pub fn consensus_projector(a: &DMatrix<f64>) -> DMatrix<f64> {
    if a.nrows() == 0 {
        return a.clone();
    }
    let mean = mean_row(a);
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, q| a[(i, q)] - mean[q])
}

/// One iteration's diagnostics; `None` marks a metric that is absent for the
/// run, never a zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub k: usize,
    /// `f(x̄_k) − f*`.
    pub mean_gap: Option<f64>,
    /// `‖∇f(x̄_k)‖²`.
    pub grad_norm_sq: f64,
    /// `(1/n)Σᵢ f(x_{i,k}) − f*`.
    pub avg_gap: Option<f64>,
    /// `‖Πx_k‖²`.
    pub consensus_x: f64,
    /// `‖Πy_k‖²`.
    pub consensus_y: Option<f64>,
    /// `‖ȳ_k − z̄_k‖` for momentum tracking, `‖ȳ_k − ḡ_k‖` for gradient tracking.
    pub tracking_residual: Option<f64>,
    /// `‖d̄_k − d̄_{k−1} + αḡ_{k−1}‖`; zero at `k = 0`.
    pub dbar_step_residual: Option<f64>,
    /// `‖(d̄_k − x̄_k) + (αβ/(1−β))z̄_{k−1}‖`.
    pub dbar_offset_residual: Option<f64>,
}

impl MetricsRow {
    /// Column order used by every serialized form.
    pub const NAMES: [&'static str; 8] = [
        "mean_gap",
        "grad_norm_sq",
        "avg_gap",
        "consensus_x",
        "consensus_y",
        "tracking_residual",
        "dbar_step_residual",
        "dbar_offset_residual",
    ];

    pub fn values(&self) -> [Option<f64>; 8] {
        [
            self.mean_gap,
            Some(self.grad_norm_sq),
            self.avg_gap,
            Some(self.consensus_x),
            self.consensus_y,
            self.tracking_residual,
            self.dbar_step_residual,
            self.dbar_offset_residual,
        ]
    }

    /// Value of the metric called `name`.
    pub fn get(&self, name: &str) -> Option<f64> {
        let idx = Self::NAMES.iter().position(|n| *n == name)?;
        self.values()[idx]
    }
}

/// Where `f*` comes from when measuring gaps.
#[derive(Debug, Clone)]
enum GapReference {
    Unknown,
    Value(f64),
    /// Quadratic: `f(x) − f* = ½(x − x*)ᵀH(x − x*)`, free of cancellation.
    Quadratic { hessian: DMatrix<f64>, x_star: DVector<f64>, f_star: f64 },
}

/// Turns a trajectory into [`MetricsRow`]s.
///
/// Every state must be passed to [`MetricsRecorder::observe`] in order so the
/// `d̄` recursion can be checked at each transition; full rows are built only
/// when asked for.
#[derive(Debug, Clone)]
pub struct MetricsRecorder {
    variant: Variant,
    alpha: f64,
    /// Momentum used by the `d̄` sequence; absent when the variant has none.
    dbar_beta: Option<f64>,
    reference: GapReference,
    prev: Option<(usize, DVector<f64>, DVector<f64>)>,
    step_residual: f64,
    offset_residual: f64,
}

impl MetricsRecorder {
    /// `f_star` overrides the suite's own reference; without either, gap
    /// fields are absent.
    pub fn new(variant: Variant, hp: &HyperParams, oracle: &ObjectiveSuite, f_star: Option<f64>) -> Self {
        let dbar_beta = match variant {
            Variant::Dsmt | Variant::DsmtNoLca | Variant::Csgdm => Some(hp.beta),
            Variant::Dsgt | Variant::Dsgd | Variant::Ed | Variant::Csgd => Some(0.0),
            Variant::DsgtHb => None,
        };
        let reference = match (f_star, oracle.kind()) {
            (Some(v), _) => GapReference::Value(v),
            (None, ObjectiveKind::Quadratic) => match solve_reference(oracle) {
                Ok((x_star, f_star)) => GapReference::Quadratic {
                    hessian: oracle.quadratic_hessian().expect("quadratic suite").clone(),
                    x_star,
                    f_star,
                },
                Err(_) => GapReference::Unknown,
            },
            (None, ObjectiveKind::LogisticL2 { rho }) if rho > 0.0 => {
                solve_reference(oracle).map_or(GapReference::Unknown, |(_, f)| GapReference::Value(f))
            }
            _ => GapReference::Unknown,
        };
        Self {
            variant,
            alpha: hp.alpha,
            dbar_beta,
            reference,
            prev: None,
            step_residual: 0.0,
            offset_residual: 0.0,
        }
    }

    pub fn f_star(&self) -> Option<f64> {
        match &self.reference {
            GapReference::Unknown => None,
            GapReference::Value(v) => Some(*v),
            GapReference::Quadratic { f_star, .. } => Some(*f_star),
        }
    }

    /// `f(x) − f*`, absent when `f*` is unknown.
    pub fn gap(&self, oracle: &ObjectiveSuite, x: &DVector<f64>) -> Result<Option<f64>> {
        Ok(match &self.reference {
            GapReference::Unknown => None,
            GapReference::Value(f_star) => Some(oracle.value_global(x)? - f_star),
            GapReference::Quadratic { hessian, x_star, .. } => {
                if x.len() != x_star.len() {
                    return Err(LabError::shape(x_star.len(), x.len()));
                }
                let d = x - x_star;
                Some(0.5 * d.dot(&(hessian * &d)))
            }
        })
    }

    /// `d̄_k = (x̄_k − βx̄_{k−1})/(1−β)` with `d̄₀ = x̄₀`.
    pub fn dbar(&self, state: &AlgorithmState) -> Option<DVector<f64>> {
        let beta = self.dbar_beta?;
        let x_bar = state.x_bar();
        if state.k == 0 || beta == 0.0 {
            return Some(x_bar);
        }
        Some((x_bar - &state.x_bar_prev * beta) / (1.0 - beta))
    }

    /// Advances the `d̄` bookkeeping to `state`; states must arrive with
    /// consecutive `k`.
    pub fn observe(&mut self, state: &AlgorithmState) -> Result<()> {
        if state.variant != self.variant {
            return Err(LabError::Domain(format!("recorder for {} fed a {} state", self.variant, state.variant)));
        }
        let Some(dbar) = self.dbar(state) else {
            return Ok(());
        };
        let beta = self.dbar_beta.unwrap_or(0.0);
        self.step_residual = match &self.prev {
            None if state.k == 0 => 0.0,
            Some((k, d_prev, g_prev)) if *k + 1 == state.k => (&dbar - d_prev + g_prev * self.alpha).norm(),
            _ => {
                return Err(LabError::Domain(format!("recorder skipped to iteration {}", state.k)));
            }
        };
        let z_bar_prev = if state.z_prev.nrows() > 0 {
            mean_row(&state.z_prev)
        } else {
            DVector::zeros(state.dim())
        };
        self.offset_residual = (&dbar - state.x_bar() + z_bar_prev * (self.alpha * beta / (1.0 - beta))).norm();
        self.prev = Some((state.k, dbar, state.g_bar_last.clone()));
        Ok(())
    }

    /// Full row for the most recently observed state, using exact gradients and values.
    pub fn row(&self, state: &AlgorithmState, oracle: &ObjectiveSuite) -> Result<MetricsRow> {
        if let Some((k, ..)) = &self.prev {
            if *k != state.k {
                return Err(LabError::Domain(format!("row for k={} but last observed k={k}", state.k)));
            }
        } else if self.dbar_beta.is_some() {
            return Err(LabError::Domain("row requested before observe".into()));
        }
        let x_bar = state.x_bar();
        let grad = oracle.grad_global(&x_bar)?;
        let mean_gap = self.gap(oracle, &x_bar)?;
        let avg_gap = match mean_gap {
            None => None,
            Some(_) => {
                let mut total = 0.0;
                for i in 0..state.n() {
                    total += self.gap(oracle, &state.x.row(i).transpose())?.expect("reference known");
                }
                Some(total / state.n() as f64)
            }
        };
        let has_y = state.y.nrows() > 0;
        let tracking_residual = match self.variant {
            Variant::Dsmt | Variant::DsmtNoLca => Some((mean_row(&state.y) - mean_row(&state.z)).norm()),
            Variant::Dsgt | Variant::DsgtHb => Some((mean_row(&state.y) - &state.g_bar_last).norm()),
            _ => None,
        };
        let has_dbar = self.dbar_beta.is_some();
        Ok(MetricsRow {
            k: state.k,
            mean_gap,
            grad_norm_sq: grad.norm_squared(),
            avg_gap,
            consensus_x: consensus_projector(&state.x).norm_squared(),
            consensus_y: has_y.then(|| consensus_projector(&state.y).norm_squared()),
            tracking_residual,
            dbar_step_residual: has_dbar.then_some(self.step_residual),
            dbar_offset_residual: has_dbar.then_some(self.offset_residual),
        })
    }
}

/// Prefix minima, the statistic behind the nonconvex rate.
pub fn running_min(values: &[f64]) -> Vec<f64> {
    let mut best = f64::INFINITY;
    values
        .iter()
        .map(|&v| {
            best = best.min(v);
            best
        })
        .collect()
}
