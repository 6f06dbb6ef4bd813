use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

pub const DEFAULT_TRANSIENT_FACTOR: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransientEstimate {
    /// Smallest index `K` with `dec[k] ≤ c·cen[k]` for every `k ≥ K`; equals
    /// the curve length when invalid.
    pub k_hat: usize,
    pub c: f64,
    pub valid: bool,
}

/// Suffix-condition transient index; a NaN entry counts as a violation.
pub fn estimate_transient(dec: &[f64], cen: &[f64], c: f64) -> Result<TransientEstimate> {
    if dec.is_empty() || cen.is_empty() {
        return Err(LabError::Domain("transient estimate needs nonempty curves".into()));
    }
    if dec.len() != cen.len() {
        return Err(LabError::shape(dec.len(), cen.len()));
    }
    if !(c >= 1.0) {
        return Err(LabError::Domain(format!("comparison factor must be >= 1, got {c}")));
    }
    let mut k_hat = dec.len();
    for k in (0..dec.len()).rev() {
        if dec[k] <= c * cen[k] {
            k_hat = k;
        } else {
            break;
        }
    }
    Ok(TransientEstimate {
        k_hat,
        c,
        valid: k_hat < dec.len(),
    })
}
