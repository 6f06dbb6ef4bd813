//! Loopless Chebyshev acceleration.
//!
//! The augmented operator acts on stacked pairs `(top, bottom)` as
//!
//! ```text
//! W̃ = ( (1+η_w)W   −η_w I )
//!     (    I          0   )
//! ```
//!
//! with `η_w = 1/(1 + √(1 − λ²))` and contraction factor `ρ̃_w = √η_w`.
//! For PSD `W` the consensus component of `W̃^k` applied to a duplicated
//! pair `(A; A)` is bounded by `C0 · ρ̃_w^{2k} · ‖ΠA‖²`.

use std::sync::Arc;

use nalgebra::DMatrix;

use super::mixing::MixingMatrix;
use crate::error::{LabError, Result};

/// Constant in the LCA contraction bound.
pub const C0: f64 = 14.0;

/// `(η_w, ρ̃_w)` for a given `λ ∈ [0, 1)`.
pub fn lca_params(lambda: f64) -> Result<(f64, f64)> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(LabError::Domain(format!("λ = {lambda} must lie in [0, 1)")));
    }
    let eta = 1.0 / (1.0 + (1.0 - lambda * lambda).sqrt());
    Ok((eta, eta.sqrt()))
}

#[derive(Debug, Clone)]
pub struct LcaOperator {
    eta_w: f64,
    rho_tilde_w: f64,
    mixing: Arc<MixingMatrix>,
}

impl LcaOperator {
    /// Builds the operator from a PSD-certified mixing matrix.
    pub fn new(mixing: Arc<MixingMatrix>) -> Result<Self> {
        if !mixing.psd_certified() {
            return Err(LabError::Mixing(format!(
                "LCA needs a positive semidefinite W (smallest eigenvalue {:.3e}); use the lazy shift",
                mixing.min_eigenvalue()
            )));
        }
        let (eta_w, rho_tilde_w) = lca_params(mixing.lambda())?;
        Ok(Self {
            eta_w,
            rho_tilde_w,
            mixing,
        })
    }

    /// Operator with an explicit `η_w`, for ablations. `η_w = 0` reduces to plain mixing.
    pub fn with_eta(mixing: Arc<MixingMatrix>, eta_w: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&eta_w) {
            return Err(LabError::Domain(format!("η_w = {eta_w} must lie in [0, 1)")));
        }
        Ok(Self {
            eta_w,
            rho_tilde_w: eta_w.sqrt(),
            mixing,
        })
    }

    pub fn eta_w(&self) -> f64 {
        self.eta_w
    }

    pub fn rho_tilde_w(&self) -> f64 {
        self.rho_tilde_w
    }

    pub fn c0(&self) -> f64 {
        C0
    }

    pub fn mixing(&self) -> &MixingMatrix {
        &self.mixing
    }

    /// One multiplication by `W̃` on the stacked pair, one communication round.
    ///
    /// Returns `((1+η)W·top − η·bottom, top)`. The first block is evaluated as
    /// `W·top + η(W·top − bottom)`, which is exact when `W·top = bottom`.
    pub fn apply(&self, top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let n = self.mixing.n();
        if top.nrows() != n || bottom.shape() != top.shape() {
            return Err(LabError::shape(
                format!("two {n}x{} blocks", top.ncols()),
                format!("{:?} and {:?}", top.shape(), bottom.shape()),
            ));
        }
        let mixed = self.mixing.mix(top)?;
        let mut next = &mixed - bottom;
        next *= self.eta_w;
        next += &mixed;
        Ok((next, top.clone()))
    }

    /// Ratios `‖Π̃W̃^kΠ̃A_#‖² / (ρ̃_w^{2k}‖ΠA‖²)` for `k = 0..=k_max`.
    ///
    /// The bound holds when every ratio is at most [`C0`].
    pub fn contraction_profile(&self, a: &DMatrix<f64>, k_max: usize) -> Result<Vec<f64>> {
        let pa = crate::diagnostics::consensus_projector(a);
        let base = pa.norm_squared();
        let mut top = pa.clone();
        let mut bottom = pa;
        let mut out = Vec::with_capacity(k_max + 1);
        for k in 0..=k_max {
            if k > 0 {
                let (t, b) = self.apply(&top, &bottom)?;
                top = t;
                bottom = b;
            }
            let num = crate::diagnostics::consensus_projector(&top).norm_squared()
                + crate::diagnostics::consensus_projector(&bottom).norm_squared();
            let denom = base * self.rho_tilde_w.powi(2 * k as i32);
            out.push(if base == 0.0 { 0.0 } else { num / denom });
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_graph, mixing_from_graph, GraphSpec, WeightScheme};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ring_op(n: usize) -> LcaOperator {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = build_graph(&GraphSpec::ring(n), &mut rng).unwrap();
        let m = mixing_from_graph(&g, WeightScheme::UniformNeighbor, true).unwrap();
        LcaOperator::new(Arc::new(m)).unwrap()
    }

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, p, |_, _| rng.random::<f64>() * 2.0 - 1.0)
    }

    #[test]
    fn params_at_zero() {
        let (eta, rho) = lca_params(0.0).unwrap();
        assert_eq!(eta, 0.5);
        assert_abs_diff_eq!(rho, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-16);
    }

    #[test]
    fn params_at_point_eight() {
        // 1/(1 + √0.36) = 1/1.6
        let (eta, rho) = lca_params(0.8).unwrap();
        assert_abs_diff_eq!(eta, 0.625, epsilon = 1e-15);
        assert_abs_diff_eq!(rho, 0.790_569_415_042_094_8, epsilon = 1e-15);
    }

    #[test]
    fn params_monotone_towards_one() {
        let mut prev = lca_params(0.0).unwrap();
        for i in 1..1000 {
            let lambda = i as f64 / 1000.0;
            let cur = lca_params(lambda).unwrap();
            assert!(cur.0 > prev.0 && cur.1 > prev.1);
            assert!(cur.0 < 1.0 && cur.1 < 1.0);
            assert_abs_diff_eq!(cur.1 * cur.1, cur.0, epsilon = 1e-15);
            prev = cur;
        }
    }

    #[test]
    fn params_domain() {
        assert!(lca_params(1.0).is_err());
        assert!(lca_params(-0.1).is_err());
        assert!(lca_params(f64::NAN).is_err());
    }

    #[test]
    fn refuses_non_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = build_graph(&GraphSpec::ring(6), &mut rng).unwrap();
        let m = mixing_from_graph(&g, WeightScheme::UniformNeighbor, false).unwrap();
        assert!(LcaOperator::new(Arc::new(m)).is_err());
    }

    #[test]
    fn consensus_state_is_fixed_point() {
        let op = ring_op(9);
        let mu = [0.3, -1.2, 4.0];
        let c = DMatrix::from_fn(9, 3, |_, j| mu[j]);
        let (t, b) = op.apply(&c, &c).unwrap();
        assert!((&t - &c).amax() < 1e-14);
        assert_eq!(b, c);
    }

    #[test]
    fn zero_eta_is_plain_mixing() {
        let op = ring_op(8);
        let plain = LcaOperator::with_eta(Arc::new(op.mixing().clone()), 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let top = random_matrix(&mut rng, 8, 2);
        let bottom = random_matrix(&mut rng, 8, 2);
        let (t, _) = plain.apply(&top, &bottom).unwrap();
        assert!((&t - op.mixing().matrix() * &top).amax() < 1e-15);
    }

    #[test]
    fn shape_mismatch() {
        let op = ring_op(4);
        assert!(op.apply(&DMatrix::zeros(3, 2), &DMatrix::zeros(3, 2)).is_err());
        assert!(op.apply(&DMatrix::zeros(4, 2), &DMatrix::zeros(4, 3)).is_err());
    }

    #[test]
    fn preserves_row_means() {
        let op = ring_op(10);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let top = random_matrix(&mut rng, 10, 3);
        let bottom = random_matrix(&mut rng, 10, 3);
        let (t, _) = op.apply(&top, &bottom).unwrap();
        let eta = op.eta_w();
        for j in 0..3 {
            let expected = (1.0 + eta) * top.column(j).mean() - eta * bottom.column(j).mean();
            assert_abs_diff_eq!(t.column(j).mean(), expected, epsilon = 1e-14);
        }
    }

    /// Dense 2n×2n augmented matrix, built independently of `apply`.
    fn augmented(op: &LcaOperator) -> DMatrix<f64> {
        let n = op.mixing().n();
        let eta = op.eta_w();
        let w = op.mixing().matrix();
        DMatrix::from_fn(2 * n, 2 * n, |i, j| match (i < n, j < n) {
            (true, true) => (1.0 + eta) * w[(i, j)],
            (true, false) => if j - n == i { -eta } else { 0.0 },
            (false, true) => if i - n == j { 1.0 } else { 0.0 },
            (false, false) => 0.0,
        })
    }

    #[test]
    fn contraction_against_dense_power() {
        let n = 16;
        let op = ring_op(n);
        let wt = augmented(&op);
        let proj = DMatrix::from_fn(2 * n, 2 * n, |i, j| {
            let same_block = (i < n) == (j < n);
            if !same_block {
                0.0
            } else if i == j {
                1.0 - 1.0 / n as f64
            } else {
                -1.0 / n as f64
            }
        });
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = random_matrix(&mut rng, n, 3);
        let stacked = DMatrix::from_fn(2 * n, 3, |i, j| a[(i % n, j)]);
        let pa = crate::diagnostics::consensus_projector(&a).norm_squared();
        let profile = op.contraction_profile(&a, 50).unwrap();
        let mut power = DMatrix::identity(2 * n, 2 * n);
        for (k, ratio) in profile.iter().enumerate() {
            let lhs = (&proj * &power * &proj * &stacked).norm_squared();
            let dense_ratio = lhs / (pa * op.rho_tilde_w().powi(2 * k as i32));
            assert_abs_diff_eq!(*ratio, dense_ratio, epsilon = 1e-8 * dense_ratio.max(1.0));
            assert!(*ratio <= C0, "k={k}: {ratio}");
            power = &wt * power;
        }
    }
}
