//! Spectral quantities of mixing matrices.
//!
//! The quantity of interest is `λ = ‖W − 𝟏𝟏ᵀ/n‖₂`. Small matrices use a
//! dense symmetric eigensolve; above [`DENSE_EIGEN_MAX_N`] a deflated power
//! iteration takes over.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{LabError, Result};

pub const DENSE_EIGEN_MAX_N: usize = 512;
pub const POWER_MAX_ITERS: usize = 200_000;
const POWER_RESIDUAL_TOL: f64 = 1e-13;

/// `W − 𝟏𝟏ᵀ/n`.
pub fn deviation_from_average(w: &DMatrix<f64>) -> DMatrix<f64> {
    let n = w.nrows();
    w.map(|v| v - 1.0 / n as f64)
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Spectral norm of `W − 𝟏𝟏ᵀ/n`, dispatching on size.
pub fn consensus_spectral_norm(w: &DMatrix<f64>) -> Result<f64> {
    if w.nrows() <= DENSE_EIGEN_MAX_N {
        Ok(dense_consensus_norm(w))
    } else {
        power_consensus_norm(w, POWER_MAX_ITERS)
    }
}

pub fn dense_consensus_norm(w: &DMatrix<f64>) -> f64 {
    symmetric_eigenvalues(&deviation_from_average(w))
        .into_iter()
        .fold(0.0, |acc, v| acc.max(v.abs()))
}

/// Smallest eigenvalue of a symmetric matrix, dispatching on size.
pub fn min_eigenvalue(w: &DMatrix<f64>) -> Result<f64> {
    let n = w.nrows();
    if n <= DENSE_EIGEN_MAX_N {
        return Ok(symmetric_eigenvalues(w)[0]);
    }
    // Largest eigenvalue of (s·I − W) with s an upper bound on the spectrum.
    let s = (0..n)
        .map(|i| w.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let shifted = DMatrix::identity(n, n) * s - w;
    let top = power_iteration(|v| &shifted * v, n, false, POWER_MAX_ITERS)?;
    Ok(s - top)
}

/// Power iteration for `‖W − 𝟏𝟏ᵀ/n‖₂`, deflating the consensus direction.
pub fn power_consensus_norm(w: &DMatrix<f64>, max_iters: usize) -> Result<f64> {
    let n = w.nrows();
    if n == 1 {
        return Ok(0.0);
    }
    // Iterate on M² so that ±λ pairs do not oscillate.
    let sq = power_iteration(
        |v| {
            let mv = deflate(w * v);
            deflate(w * mv)
        },
        n,
        true,
        max_iters,
    )?;
    Ok(sq.max(0.0).sqrt())
}

fn deflate(mut v: DVector<f64>) -> DVector<f64> {
    let mean = v.mean();
    v.add_scalar_mut(-mean);
    v
}

fn power_iteration<F>(apply: F, n: usize, deflated: bool, max_iters: usize) -> Result<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    // Deterministic start with components in every direction.
    let mut v = DVector::from_fn(n, |i, _| 1.0 + ((i * 7919) % 104_729) as f64 / 104_729.0);
    if deflated {
        v = deflate(v);
    }
    let norm = v.norm();
    if norm == 0.0 {
        return Ok(0.0);
    }
    v /= norm;
    for _ in 0..max_iters {
        let av = apply(&v);
        let theta = v.dot(&av);
        let residual = (&av - &v * theta).norm();
        let scale = av.norm();
        if scale == 0.0 {
            return Ok(0.0);
        }
        if residual <= POWER_RESIDUAL_TOL * theta.abs().max(1e-300) {
            return Ok(theta);
        }
        v = av / scale;
    }
    Err(LabError::SpectralNonConvergence { iterations: max_iters })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn averaging_matrix_has_zero_norm() {
        for n in [1, 2, 5, 9] {
            let j = DMatrix::from_element(n, n, 1.0 / n as f64);
            assert_abs_diff_eq!(dense_consensus_norm(&j), 0.0, epsilon = 1e-14);
            assert_abs_diff_eq!(power_consensus_norm(&j, 100).unwrap(), 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn power_iteration_agrees_with_eigensolve() {
        // Lazy path graph on 12 nodes: distinct, well-separated spectrum.
        let n = 12;
        let mut w = DMatrix::zeros(n, n);
        for i in 0..n - 1 {
            w[(i, i + 1)] = 0.25;
            w[(i + 1, i)] = 0.25;
        }
        for i in 0..n {
            w[(i, i)] = 1.0 - w.row(i).sum();
        }
        let dense = dense_consensus_norm(&w);
        let power = power_consensus_norm(&w, POWER_MAX_ITERS).unwrap();
        assert_abs_diff_eq!(dense, power, epsilon = 1e-10);
    }

    #[test]
    fn power_iteration_reports_cap() {
        let n = 64;
        let mut w = DMatrix::zeros(n, n);
        for i in 0..n {
            w[(i, (i + 1) % n)] = 1.0 / 3.0;
            w[((i + 1) % n, i)] = 1.0 / 3.0;
            w[(i, i)] = 1.0 / 3.0;
        }
        match power_consensus_norm(&w, 3) {
            Err(LabError::SpectralNonConvergence { iterations }) => assert_eq!(iterations, 3),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
