use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::matrix_io::matrix_to_string;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Momentum tracking with LCA on both communication rounds.
    Dsmt,
    /// Momentum tracking with plain mixing.
    DsmtNoLca,
    Dsgt,
    Dsgd,
    /// Exact diffusion.
    Ed,
    /// Gradient tracking with a heavy-ball term on `x`.
    DsgtHb,
    Csgd,
    Csgdm,
}

impl Variant {
    pub const ALL: [Variant; 8] = [
        Variant::Dsmt,
        Variant::DsmtNoLca,
        Variant::Dsgt,
        Variant::Dsgd,
        Variant::Ed,
        Variant::DsgtHb,
        Variant::Csgd,
        Variant::Csgdm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Dsmt => "DSMT",
            Variant::DsmtNoLca => "DSMT_noLCA",
            Variant::Dsgt => "DSGT",
            Variant::Dsgd => "DSGD",
            Variant::Ed => "ED",
            Variant::DsgtHb => "DSGT_HB",
            Variant::Csgd => "CSGD",
            Variant::Csgdm => "CSGDM",
        }
    }

    pub fn is_centralized(self) -> bool {
        matches!(self, Variant::Csgd | Variant::Csgdm)
    }

    /// Variants driven by the momentum buffer `z = βz + (1−β)g`.
    pub fn uses_momentum(self) -> bool {
        matches!(self, Variant::Dsmt | Variant::DsmtNoLca | Variant::Csgdm)
    }

    pub fn uses_lca(self) -> bool {
        self == Variant::Dsmt
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| LabError::Parse(format!("unknown algorithm '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub alpha: f64,
    pub beta: f64,
    /// Iteration budget `K`.
    pub iterations: usize,
}

impl HyperParams {
    pub fn new(alpha: f64, beta: f64, iterations: usize) -> Result<Self> {
        let hp = Self { alpha, beta, iterations };
        hp.validate()?;
        Ok(hp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(LabError::Domain(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(LabError::Domain(format!("beta must lie in [0, 1), got {}", self.beta)));
        }
        if self.iterations == 0 {
            return Err(LabError::Domain("iteration budget must be at least 1".into()));
        }
        Ok(())
    }
}

/// Stacked iterates, one row per agent.
///
/// Fields a variant does not use are `0 × p`:
/// - `x_l`, `y_l`: DSMT only
/// - `y`: DSMT, DSMT_noLCA, DSGT, DSGT_HB
/// - `z`, `z_prev`: DSMT, DSMT_noLCA, CSGDM
/// - `g`: DSGT, DSGD, ED, DSGT_HB, CSGD (last sampled gradient)
/// - `x_prev`: ED, DSGT_HB
/// - `g_prev`: ED
///
/// Centralized variants keep `n` identical rows so metrics read the same way.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmState {
    pub variant: Variant,
    pub k: usize,
    pub x: DMatrix<f64>,
    pub x_l: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub y_l: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub z_prev: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub x_prev: DMatrix<f64>,
    pub g_prev: DMatrix<f64>,
    /// Mean row of the gradients sampled at the current `x`.
    pub g_bar_last: DVector<f64>,
    /// Mean row of `x` one step back; equals the current mean at `k = 0`.
    pub x_bar_prev: DVector<f64>,
}

/// Mean of the rows, evaluated as `x₀ + mean(xᵢ − x₀)` so identical rows give
/// their common value exactly.
pub(crate) fn mean_row(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows();
    let mut out = DVector::zeros(m.ncols());
    if n == 0 {
        return out;
    }
    for q in 0..m.ncols() {
        let base = m[(0, q)];
        let mut acc = 0.0;
        for i in 1..n {
            acc += m[(i, q)] - base;
        }
        out[q] = base + acc / n as f64;
    }
    out
}

impl AlgorithmState {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn x_bar(&self) -> DVector<f64> {
        mean_row(&self.x)
    }

    pub fn is_finite(&self) -> bool {
        [&self.x, &self.x_l, &self.y, &self.y_l, &self.z]
            .iter()
            .all(|m| m.iter().all(|v| v.is_finite()))
    }

    /// Named nonempty blocks in the plain-text matrix format.
    pub fn snapshot(&self) -> Vec<(&'static str, String)> {
        [
            ("x", &self.x),
            ("x_l", &self.x_l),
            ("y", &self.y),
            ("y_l", &self.y_l),
            ("z", &self.z),
            ("z_prev", &self.z_prev),
            ("g", &self.g),
            ("x_prev", &self.x_prev),
            ("g_prev", &self.g_prev),
        ]
        .into_iter()
        .filter(|(_, m)| m.nrows() > 0)
        .map(|(name, m)| (name, matrix_to_string(m)))
        .collect()
    }
}

/// One independent random stream per agent for a single trial.
///
/// Agent `i` of the trial seeded with `s` draws from ChaCha8 seeded with `s`
/// on stream `i`.
#[derive(Debug, Clone)]
pub struct AgentStreams {
    rngs: Vec<ChaCha8Rng>,
}

impl AgentStreams {
    pub fn new(seed: u64, n: usize) -> Self {
        let rngs = (0..n)
            .map(|i| {
                let mut r = ChaCha8Rng::seed_from_u64(seed);
                r.set_stream(i as u64);
                r
            })
            .collect();
        Self { rngs }
    }

    pub fn len(&self) -> usize {
        self.rngs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rngs.is_empty()
    }

    pub fn agent(&mut self, i: usize) -> &mut ChaCha8Rng {
        &mut self.rngs[i]
    }
}
