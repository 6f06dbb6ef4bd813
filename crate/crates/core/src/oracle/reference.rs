//! Reference solutions and problem constants used by stepsize selectors.
//!
//! Estimation recipes (with-replacement batches of size `B`):
//! - quadratic: `L = maxᵢ λ_max(AᵢᵀAᵢ/mᵢ)`, `μ = λ_min` of the aggregate
//!   Hessian, `C = 4·max_j‖a_j‖²/B`, `σ² = 2·maxᵢ mean_j‖a_j r_j‖²/B` with
//!   `r_j` the residual at agent `i`'s own minimizer.
//! - logistic: `L = max_j‖u_j‖²/4 + ρ` (or `+ ω`), `C = 0`,
//!   `σ² = max_j‖u_j‖²/B`; `μ = ρ` for the ℓ2 kind.
//! - `f*`, `f*_i` by exact solve (quadratic) or gradient descent (logistic);
//!   for the nonconvex kind these are estimates and `f*` is reported absent.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::objective::{ObjectiveKind, ObjectiveSuite, Reference};
use crate::error::{LabError, Result};

/// Stationarity target for the logistic reference solve.
pub const REFERENCE_GRAD_TOL: f64 = 1e-10;
pub const REFERENCE_MAX_ITERS: usize = 2_000_000;
/// Gradient-descent budget for nonconvex minimum estimates.
pub const ESTIMATE_ITERS: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticSpec {
    pub n_agents: usize,
    pub rows_per_agent: usize,
    pub dim: usize,
    /// Spread of the per-agent planted solutions around the all-ones vector.
    pub heterogeneity: f64,
    /// Standard deviation of target noise.
    pub noise: f64,
}

/// Random least-squares blocks with heterogeneous planted solutions.
pub fn generate_quadratic<R: Rng + ?Sized>(spec: &QuadraticSpec, rng: &mut R) -> Result<ObjectiveSuite> {
    if spec.n_agents == 0 || spec.rows_per_agent == 0 || spec.dim == 0 {
        return Err(LabError::Oracle("quadratic spec needs positive sizes".into()));
    }
    let mut blocks = Vec::with_capacity(spec.n_agents);
    for _ in 0..spec.n_agents {
        let a = DMatrix::from_fn(spec.rows_per_agent, spec.dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let planted = DVector::from_fn(spec.dim, |_, _| 1.0 + spec.heterogeneity * rng.sample::<f64, _>(StandardNormal));
        let noise = DVector::from_fn(spec.rows_per_agent, |_, _| spec.noise * rng.sample::<f64, _>(StandardNormal));
        let b = &a * planted + noise;
        blocks.push((a, b));
    }
    ObjectiveSuite::quadratic(blocks)
}

/// Minimizer of a symmetric PSD system, via Cholesky with a pseudo-inverse fallback.
fn solve_psd(h: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(chol) = h.clone().cholesky() {
        return Ok(chol.solve(rhs));
    }
    h.clone()
        .svd(true, true)
        .solve(rhs, 1e-12)
        .map_err(|e| LabError::Oracle(format!("singular system: {e}")))
}

fn gradient_descent<F>(mut x: DVector<f64>, step: f64, grad: F, tol: f64, max_iters: usize) -> Result<(DVector<f64>, bool)>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    for _ in 0..max_iters {
        let g = grad(&x)?;
        if g.norm() <= tol {
            return Ok((x, true));
        }
        x.axpy(-step, &g, 1.0);
    }
    Ok((x, false))
}

fn smoothness_bound(suite: &ObjectiveSuite) -> f64 {
    let data = suite.max_row_norm_sq() / 4.0;
    match suite.kind() {
        ObjectiveKind::LogisticL2 { rho } => data + rho,
        ObjectiveKind::LogisticNonconvex { omega } => data + omega,
        ObjectiveKind::Quadratic => {
            (0..suite.n_agents()).map(|i| agent_curvature(suite, i).1).fold(0.0, f64::max)
        }
    }
}

/// `(λ_min, λ_max)` of `AᵢᵀAᵢ/mᵢ`.
fn agent_curvature(suite: &ObjectiveSuite, agent: usize) -> (f64, f64) {
    let (a, _) = suite.shard_matrices(agent);
    let h = a.transpose() * &a / a.nrows() as f64;
    let ev = crate::topology::spectral::symmetric_eigenvalues(&h);
    (ev[0], ev[ev.len() - 1])
}

/// Global minimizer and minimum `(x*, f*)`, cached in the suite.
///
/// Available for quadratic suites and ℓ2-regularized logistic suites with `ρ > 0`.
pub fn solve_reference(suite: &ObjectiveSuite) -> Result<(DVector<f64>, f64)> {
    if let Some(r) = suite.reference.get() {
        return Ok((r.x_star.clone(), r.f_star));
    }
    let x_star = match suite.kind() {
        ObjectiveKind::Quadratic => {
            let h = suite.quadratic_hessian().expect("quadratic suites carry their Hessian");
            let q = suite.quadratic_linear().expect("quadratic suites carry their linear term");
            solve_psd(h, q)?
        }
        ObjectiveKind::LogisticL2 { rho } if rho > 0.0 => {
            let step = 1.0 / smoothness_bound(suite);
            let (x, ok) = gradient_descent(
                DVector::zeros(suite.dim()),
                step,
                |x| suite.grad_global(x),
                REFERENCE_GRAD_TOL,
                REFERENCE_MAX_ITERS,
            )?;
            if !ok {
                return Err(LabError::Oracle(format!(
                    "reference solve did not reach ‖∇f‖ ≤ {REFERENCE_GRAD_TOL} in {REFERENCE_MAX_ITERS} iterations"
                )));
            }
            x
        }
        kind => {
            return Err(LabError::Oracle(format!(
                "no reference optimum for {kind}; use gradient-norm metrics instead"
            )))
        }
    };
    let f_star = suite.value_global(&x_star)?;
    let r = suite.reference.get_or_init(|| Reference { x_star, f_star });
    Ok((r.x_star.clone(), r.f_star))
}

/// `(x*_i, f*_i)` for agent `i`; an estimate for the nonconvex kind.
pub fn agent_minimum(suite: &ObjectiveSuite, agent: usize) -> Result<(DVector<f64>, f64)> {
    let x = match suite.kind() {
        ObjectiveKind::Quadratic => {
            let (a, b) = suite.shard_matrices(agent);
            a.svd(true, true)
                .solve(&b, 1e-12)
                .map_err(|e| LabError::Oracle(format!("agent {agent} least squares: {e}")))?
        }
        ObjectiveKind::LogisticL2 { rho } if rho > 0.0 => {
            let step = 1.0 / smoothness_bound(suite);
            gradient_descent(
                DVector::zeros(suite.dim()),
                step,
                |x| Ok(suite.eval_full(agent, x)?.1),
                REFERENCE_GRAD_TOL,
                REFERENCE_MAX_ITERS,
            )?
            .0
        }
        _ => {
            let step = 1.0 / smoothness_bound(suite);
            gradient_descent(
                DVector::zeros(suite.dim()),
                step,
                |x| Ok(suite.eval_full(agent, x)?.1),
                REFERENCE_GRAD_TOL,
                ESTIMATE_ITERS,
            )?
            .0
        }
    };
    let f = suite.value(agent, &x)?;
    Ok((x, f))
}

/// Constants consumed by the stepsize selectors and the Lyapunov probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    /// Smoothness of every `f_i`.
    pub l: f64,
    /// ABC coefficient on `f_i(x) − f*_i`.
    pub c: f64,
    /// ABC offset; the variance bound uses `σ²`.
    pub sigma: f64,
    /// `f* − (1/n)Σ f*_i`.
    pub sigma_star_f: f64,
    /// PL constant when known.
    pub mu: Option<f64>,
    /// `f(x̄₀) − f*`.
    pub delta0: f64,
    /// Optimal value when it is known exactly.
    pub f_star: Option<f64>,
}

impl ProblemConstants {
    /// `2Cσ*_f + σ²`, the noise level entering every rate.
    pub fn noise_level(&self) -> f64 {
        2.0 * self.c * self.sigma_star_f + self.sigma * self.sigma
    }
}

/// Applies the estimation recipes in the module docs.
pub fn estimate_constants(suite: &ObjectiveSuite, x_bar0: &DVector<f64>, batch: usize) -> Result<ProblemConstants> {
    if batch == 0 {
        return Err(LabError::Oracle("batch size must be at least 1".into()));
    }
    let b = batch as f64;
    let n = suite.n_agents();
    let agent_min: Vec<(DVector<f64>, f64)> = (0..n).map(|i| agent_minimum(suite, i)).collect::<Result<_>>()?;
    let mean_agent_min = agent_min.iter().map(|(_, f)| f).sum::<f64>() / n as f64;
    let l = smoothness_bound(suite);
    let (c, sigma, mu, f_star, f_est) = match suite.kind() {
        ObjectiveKind::Quadratic => {
            let c = 4.0 * suite.max_row_norm_sq() / b;
            let mut worst: f64 = 0.0;
            for (i, (xi, _)) in agent_min.iter().enumerate() {
                // At x*_i the gradient is zero, so the batch-1 variance is mean_j‖a_j r_j‖².
                worst = worst.max(suite.sample_variance(i, xi, 1)?);
            }
            let h = suite.quadratic_hessian().expect("quadratic suites carry their Hessian");
            let lmin = crate::topology::spectral::symmetric_eigenvalues(h)[0];
            let (_, f_star) = solve_reference(suite)?;
            (c, (2.0 * worst / b).sqrt(), (lmin > 0.0).then_some(lmin), Some(f_star), f_star)
        }
        ObjectiveKind::LogisticL2 { rho } if rho > 0.0 => {
            let (_, f_star) = solve_reference(suite)?;
            (0.0, (suite.max_row_norm_sq() / b).sqrt(), Some(rho), Some(f_star), f_star)
        }
        _ => {
            let step = 1.0 / l;
            let (x, _) = gradient_descent(
                x_bar0.clone(),
                step,
                |x| suite.grad_global(x),
                REFERENCE_GRAD_TOL,
                ESTIMATE_ITERS,
            )?;
            let est = suite.value_global(&x)?;
            (0.0, (suite.max_row_norm_sq() / b).sqrt(), None, None, est)
        }
    };
    let delta0 = (suite.value_global(x_bar0)? - f_est).max(0.0);
    Ok(ProblemConstants {
        l,
        c,
        sigma,
        sigma_star_f: (f_est - mean_agent_min).max(0.0),
        mu,
        delta0,
        f_star,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{generate_synthetic, partition_heterogeneous};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_quadratic_has_zero_optimum() {
        let blocks = (0..3).map(|_| (DMatrix::identity(4, 4), DVector::zeros(4))).collect();
        let s = ObjectiveSuite::quadratic(blocks).unwrap();
        let (x, f) = solve_reference(&s).unwrap();
        assert_eq!(x, DVector::zeros(4));
        assert_eq!(f, 0.0);
    }

    #[test]
    fn quadratic_matches_pseudo_inverse_of_stacked_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let spec = QuadraticSpec {
            n_agents: 2,
            rows_per_agent: 3,
            dim: 3,
            heterogeneity: 0.5,
            noise: 0.1,
        };
        let s = generate_quadratic(&spec, &mut rng).unwrap();
        let (x, _) = solve_reference(&s).unwrap();
        // Stack √(1/(n mᵢ))·[Aᵢ, bᵢ] and solve by pseudo-inverse.
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for i in 0..2 {
            let (a, b) = s.shard_matrices(i);
            let scale = (1.0 / (2.0 * a.nrows() as f64)).sqrt();
            for j in 0..a.nrows() {
                rows.extend(a.row(j).iter().map(|v| v * scale));
                rhs.push(b[j] * scale);
            }
        }
        let stacked = DMatrix::from_row_slice(rhs.len(), 3, &rows);
        let pinv = stacked.pseudo_inverse(1e-14).unwrap();
        let oracle = pinv * DVector::from_vec(rhs);
        assert!((x - oracle).amax() < 1e-10);
    }

    #[test]
    fn logistic_reference_is_stationary_and_cached() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = generate_synthetic(40, 3, 2.0, &mut rng).unwrap();
        let p = partition_heterogeneous(&d, 4).unwrap();
        let s = ObjectiveSuite::logistic(ObjectiveKind::LogisticL2 { rho: 0.2 }, &d, &p).unwrap();
        let (x, f) = solve_reference(&s).unwrap();
        assert!(s.grad_global(&x).unwrap().norm() <= REFERENCE_GRAD_TOL);
        assert_eq!(f, s.value_global(&x).unwrap());
        assert!(s.reference.get().is_some());
        assert_eq!(solve_reference(&s).unwrap().0, x);
    }

    #[test]
    fn nonconvex_reference_refused() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = generate_synthetic(20, 3, 2.0, &mut rng).unwrap();
        let p = partition_heterogeneous(&d, 2).unwrap();
        let s = ObjectiveSuite::logistic(ObjectiveKind::LogisticNonconvex { omega: 0.05 }, &d, &p).unwrap();
        let err = solve_reference(&s).unwrap_err();
        assert!(err.to_string().contains("gradient-norm"));
    }

    #[test]
    fn constants_are_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = QuadraticSpec {
            n_agents: 4,
            rows_per_agent: 10,
            dim: 3,
            heterogeneity: 1.0,
            noise: 0.2,
        };
        let s = generate_quadratic(&spec, &mut rng).unwrap();
        let k = estimate_constants(&s, &DVector::zeros(3), 1).unwrap();
        assert!(k.l > 0.0 && k.c >= 0.0 && k.sigma >= 0.0 && k.sigma_star_f >= 0.0 && k.delta0 >= 0.0);
        assert!(k.mu.unwrap() > 0.0);
        let f_star = k.f_star.unwrap();
        assert_abs_diff_eq!(k.delta0, s.value_global(&DVector::zeros(3)).unwrap() - f_star, epsilon = 1e-12);
    }
}
