use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::graph::Graph;
use super::spectral;
use crate::error::{LabError, Result};
use crate::matrix_io;

/// Row-sum and symmetry tolerance for doubly stochastic matrices.
pub const STOCHASTIC_TOL: f64 = 1e-12;
/// Smallest eigenvalue allowed for a PSD certificate.
pub const PSD_TOL: f64 = -1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightScheme {
    UniformNeighbor,
    Metropolis,
}

impl fmt::Display for WeightScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightScheme::UniformNeighbor => "uniform_neighbor",
            WeightScheme::Metropolis => "metropolis",
        })
    }
}

impl FromStr for WeightScheme {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform_neighbor" => Ok(WeightScheme::UniformNeighbor),
            "metropolis" => Ok(WeightScheme::Metropolis),
            other => Err(LabError::Parse(format!("unknown weight scheme {other:?}"))),
        }
    }
}

/// Symmetric doubly stochastic mixing matrix with its cached spectral data.
///
/// Immutable after construction; `lambda` is `‖W − 𝟏𝟏ᵀ/n‖₂`.
#[derive(Debug, Clone)]
pub struct MixingMatrix {
    w: DMatrix<f64>,
    lambda: f64,
    min_eigenvalue: f64,
    psd_certified: bool,
    /// Off-diagonal nonzeros `(j, w_ij)` of each row, ascending in `j`.
    links: Vec<Vec<(usize, f64)>>,
}

impl MixingMatrix {
    /// Validates `w` and caches λ and the PSD certificate.
    pub fn from_matrix(w: DMatrix<f64>) -> Result<Self> {
        let n = w.nrows();
        if n == 0 || w.ncols() != n {
            return Err(LabError::Mixing(format!("expected a square matrix, got {}x{}", n, w.ncols())));
        }
        for i in 0..n {
            if w[(i, i)] <= 0.0 {
                return Err(LabError::Mixing(format!("diagonal entry {i} is not positive")));
            }
            let row_sum: f64 = w.row(i).sum();
            let col_sum: f64 = w.column(i).sum();
            if (row_sum - 1.0).abs() > STOCHASTIC_TOL || (col_sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(LabError::Mixing(format!("row/column {i} does not sum to 1")));
            }
            for j in 0..n {
                if w[(i, j)] < 0.0 {
                    return Err(LabError::Mixing(format!("negative entry at ({i}, {j})")));
                }
                if (w[(i, j)] - w[(j, i)]).abs() > STOCHASTIC_TOL {
                    return Err(LabError::Mixing(format!("not symmetric at ({i}, {j})")));
                }
            }
        }
        let lambda = spectral::consensus_spectral_norm(&w)?;
        if lambda >= 1.0 - 1e-14 {
            return Err(LabError::Mixing(format!(
                "λ = {lambda} is not below 1; the support graph is disconnected or periodic"
            )));
        }
        let min_eigenvalue = spectral::min_eigenvalue(&w)?;
        let links = (0..n)
            .map(|i| (0..n).filter(|&j| j != i && w[(i, j)] != 0.0).map(|j| (j, w[(i, j)])).collect())
            .collect();
        Ok(Self {
            links,
            w,
            lambda,
            min_eigenvalue,
            psd_certified: min_eigenvalue >= PSD_TOL,
        })
    }

    /// `W = 𝟏𝟏ᵀ/n`.
    pub fn averaging(n: usize) -> Result<Self> {
        Self::from_matrix(DMatrix::from_element(n, n, 1.0 / n as f64))
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    /// Cached `‖W − 𝟏𝟏ᵀ/n‖₂`.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn spectral_gap(&self) -> f64 {
        1.0 - self.lambda
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }

    pub fn psd_certified(&self) -> bool {
        self.psd_certified
    }

    /// `W · X` for stacked agent rows `X`.
    ///
    /// Evaluated as `xᵢ + Σ_{j≠i} w_ij(x_j − xᵢ)`, so rows already in
    /// consensus are returned unchanged.
    pub fn mix(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.n() {
            return Err(LabError::shape(format!("{} rows", self.n()), format!("{} rows", x.nrows())));
        }
        let mut out = x.clone();
        for q in 0..x.ncols() {
            let col = x.column(q);
            for (i, links) in self.links.iter().enumerate() {
                let xi = col[i];
                let mut acc = 0.0;
                for &(j, w) in links {
                    acc += w * (col[j] - xi);
                }
                out[(i, q)] = xi + acc;
            }
        }
        Ok(out)
    }

    /// `(I + W)/2`.
    pub fn lazy(&self) -> Result<Self> {
        let n = self.n();
        Self::from_matrix((DMatrix::identity(n, n) + &self.w) * 0.5)
    }

    pub fn to_text(&self) -> String {
        matrix_io::matrix_to_string(&self.w)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_matrix(matrix_io::parse_matrix(text)?)
    }
}

pub fn mixing_from_graph(graph: &Graph, scheme: WeightScheme, lazy: bool) -> Result<MixingMatrix> {
    let n = graph.n();
    let mut w = DMatrix::zeros(n, n);
    match scheme {
        WeightScheme::UniformNeighbor => {
            if !graph.is_regular() {
                return Err(LabError::Mixing(
                    "uniform_neighbor weights require a regular graph".into(),
                ));
            }
            for i in 0..n {
                let weight = 1.0 / (graph.degree(i) + 1) as f64;
                for &j in graph.neighbors(i) {
                    w[(i, j)] = weight;
                }
            }
        }
        WeightScheme::Metropolis => {
            for i in 0..n {
                let mut off = 0.0;
                for &j in graph.neighbors(i) {
                    if j != i {
                        let weight = 1.0 / (1 + graph.degree(i).max(graph.degree(j))) as f64;
                        w[(i, j)] = weight;
                        off += weight;
                    }
                }
                w[(i, i)] = 1.0 - off;
            }
        }
    }
    if lazy {
        w = (DMatrix::identity(n, n) + w) * 0.5;
    }
    MixingMatrix::from_matrix(w)
}
