use std::fmt;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::partition::Partition;
use crate::error::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ObjectiveKind {
    /// Logistic loss plus `(ρ/2)‖x‖²`.
    LogisticL2 { rho: f64 },
    /// Logistic loss plus `(ω/2)Σ_q x_q²/(1 + x_q²)`.
    LogisticNonconvex { omega: f64 },
    /// `½‖A_i x − b_i‖²/m_i` per agent.
    Quadratic,
}

impl fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObjectiveKind::LogisticL2 { rho } => write!(f, "logistic_l2(rho={rho})"),
            ObjectiveKind::LogisticNonconvex { omega } => write!(f, "logistic_nonconvex(omega={omega})"),
            ObjectiveKind::Quadratic => f.write_str("quadratic"),
        }
    }
}

/// How a stochastic gradient draws its batch from an agent's shard.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sampling {
    pub batch: usize,
    pub replacement: bool,
}

impl Sampling {
    pub fn with_replacement(batch: usize) -> Self {
        Self { batch, replacement: true }
    }

    pub fn without_replacement(batch: usize) -> Self {
        Self { batch, replacement: false }
    }
}

impl Default for Sampling {
    fn default() -> Self {
        Self::with_replacement(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientSample {
    pub value: DVector<f64>,
    pub batch_size: usize,
}

/// One agent's local data: rows `a_j` (or features `u_j`) and targets `b_j` (or labels `v_j`).
#[derive(Debug, Clone)]
struct Shard {
    rows: Vec<f64>,
    targets: Vec<f64>,
}

impl Shard {
    fn len(&self) -> usize {
        self.targets.len()
    }

    fn row(&self, j: usize, dim: usize) -> &[f64] {
        &self.rows[j * dim..(j + 1) * dim]
    }
}

#[derive(Debug, Clone)]
struct QuadraticAggregate {
    hessian: DMatrix<f64>,
    linear: DVector<f64>,
    constant: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct Reference {
    pub x_star: DVector<f64>,
    pub f_star: f64,
}

/// Per-agent objectives `f_i` and their stochastic gradient oracles.
///
/// Immutable after construction except for the lazily cached reference solution.
#[derive(Debug)]
pub struct ObjectiveSuite {
    kind: ObjectiveKind,
    dim: usize,
    shards: Vec<Shard>,
    aggregate: Option<QuadraticAggregate>,
    pub(crate) reference: OnceLock<Reference>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `ln(1 + eᵗ)` without overflow.
pub(crate) fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// Logistic sigmoid, evaluated on the branch that cannot overflow.
pub(crate) fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl ObjectiveSuite {
    /// Logistic suite; agent `i` owns the samples listed by `partition.agent(i)`.
    pub fn logistic(kind: ObjectiveKind, data: &Dataset, partition: &Partition) -> Result<Self> {
        match kind {
            ObjectiveKind::LogisticL2 { rho } if rho >= 0.0 => {}
            ObjectiveKind::LogisticNonconvex { omega } if omega >= 0.0 => {}
            _ => return Err(LabError::Oracle(format!("{kind} is not a valid logistic objective"))),
        }
        let shards = partition
            .iter()
            .map(|idx| {
                let (rows, targets) = data.gather(idx);
                Shard { rows, targets }
            })
            .collect();
        Ok(Self {
            kind,
            dim: data.dim(),
            shards,
            aggregate: None,
            reference: OnceLock::new(),
        })
    }

    /// Quadratic suite from per-agent blocks `(A_i, b_i)`.
    pub fn quadratic(blocks: Vec<(DMatrix<f64>, DVector<f64>)>) -> Result<Self> {
        let dim = blocks.first().map(|(a, _)| a.ncols()).unwrap_or(0);
        if blocks.is_empty() || dim == 0 {
            return Err(LabError::Oracle("quadratic suite needs at least one nonempty block".into()));
        }
        let n = blocks.len() as f64;
        let mut hessian = DMatrix::zeros(dim, dim);
        let mut linear = DVector::zeros(dim);
        let mut constant = 0.0;
        let mut shards = Vec::with_capacity(blocks.len());
        for (i, (a, b)) in blocks.into_iter().enumerate() {
            if a.ncols() != dim || a.nrows() != b.len() || a.nrows() == 0 {
                return Err(LabError::shape(
                    format!("block {i} with {dim} columns and matching targets"),
                    format!("{:?} and {}", a.shape(), b.len()),
                ));
            }
            let m = a.nrows() as f64;
            hessian += a.transpose() * &a / (m * n);
            linear += a.transpose() * &b / (m * n);
            constant += 0.5 * b.norm_squared() / (m * n);
            let rows = (0..a.nrows()).flat_map(|j| a.row(j).iter().copied().collect::<Vec<_>>()).collect();
            shards.push(Shard {
                rows,
                targets: b.iter().copied().collect(),
            });
        }
        Ok(Self {
            kind: ObjectiveKind::Quadratic,
            dim,
            shards,
            aggregate: Some(QuadraticAggregate {
                hessian,
                linear,
                constant,
            }),
            reference: OnceLock::new(),
        })
    }

    pub fn kind(&self) -> ObjectiveKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_agents(&self) -> usize {
        self.shards.len()
    }

    pub fn shard_len(&self, agent: usize) -> usize {
        self.shards[agent].len()
    }

    /// Rows and targets of agent `i` as `(A_i, b_i)`.
    pub fn shard_matrices(&self, agent: usize) -> (DMatrix<f64>, DVector<f64>) {
        let s = &self.shards[agent];
        (
            DMatrix::from_row_slice(s.len(), self.dim, &s.rows),
            DVector::from_column_slice(&s.targets),
        )
    }

    fn check(&self, agent: usize, x: &DVector<f64>) -> Result<()> {
        if agent >= self.shards.len() {
            return Err(LabError::Oracle(format!("agent {agent} out of range")));
        }
        if x.len() != self.dim {
            return Err(LabError::shape(format!("dimension {}", self.dim), x.len()));
        }
        Ok(())
    }

    fn sample_loss(&self, row: &[f64], target: f64, x: &DVector<f64>) -> f64 {
        let margin = dot(row, x.as_slice());
        match self.kind {
            ObjectiveKind::Quadratic => 0.5 * (margin - target).powi(2),
            _ => softplus(-target * margin),
        }
    }

    /// Adds the gradient of sample `(row, target)` into `acc`.
    fn add_sample_grad(&self, row: &[f64], target: f64, x: &DVector<f64>, acc: &mut [f64]) {
        let margin = dot(row, x.as_slice());
        let coef = match self.kind {
            ObjectiveKind::Quadratic => margin - target,
            _ => -target * sigmoid(-target * margin),
        };
        for (a, r) in acc.iter_mut().zip(row) {
            *a += coef * r;
        }
    }

    fn reg_value(&self, x: &DVector<f64>) -> f64 {
        match self.kind {
            ObjectiveKind::LogisticL2 { rho } => 0.5 * rho * x.norm_squared(),
            ObjectiveKind::LogisticNonconvex { omega } => {
                0.5 * omega * x.iter().map(|v| v * v / (1.0 + v * v)).sum::<f64>()
            }
            ObjectiveKind::Quadratic => 0.0,
        }
    }

    fn add_reg_grad(&self, x: &DVector<f64>, g: &mut DVector<f64>) {
        match self.kind {
            ObjectiveKind::LogisticL2 { rho } => g.axpy(rho, x, 1.0),
            ObjectiveKind::LogisticNonconvex { omega } => {
                for (gq, &v) in g.iter_mut().zip(x.iter()) {
                    let d = 1.0 + v * v;
                    *gq += omega * v / (d * d);
                }
            }
            ObjectiveKind::Quadratic => {}
        }
    }

    /// Mean data gradient over `indices` plus the regularizer gradient.
    fn batch_gradient(&self, agent: usize, indices: impl Iterator<Item = usize>, x: &DVector<f64>) -> DVector<f64> {
        let shard = &self.shards[agent];
        let mut acc = vec![0.0; self.dim];
        let mut count = 0usize;
        for j in indices {
            self.add_sample_grad(shard.row(j, self.dim), shard.targets[j], x, &mut acc);
            count += 1;
        }
        let mut g = DVector::from_vec(acc) / count as f64;
        self.add_reg_grad(x, &mut g);
        g
    }

    /// `(f_i(x), ∇f_i(x))`.
    pub fn eval_full(&self, agent: usize, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        self.check(agent, x)?;
        let shard = &self.shards[agent];
        let data: f64 = (0..shard.len())
            .map(|j| self.sample_loss(shard.row(j, self.dim), shard.targets[j], x))
            .sum::<f64>()
            / shard.len() as f64;
        let grad = self.batch_gradient(agent, 0..shard.len(), x);
        Ok((data + self.reg_value(x), grad))
    }

    pub fn value(&self, agent: usize, x: &DVector<f64>) -> Result<f64> {
        self.check(agent, x)?;
        let shard = &self.shards[agent];
        let data: f64 = (0..shard.len())
            .map(|j| self.sample_loss(shard.row(j, self.dim), shard.targets[j], x))
            .sum::<f64>()
            / shard.len() as f64;
        Ok(data + self.reg_value(x))
    }

    /// Minibatch stochastic gradient of `f_i` at `x`.
    ///
    /// With replacement, indices are uniform draws from the shard. Without
    /// replacement, a uniform subset is visited in ascending order, so a
    /// full-shard batch reproduces [`Self::eval_full`] bit for bit.
    pub fn sample_grad<R: Rng + ?Sized>(
        &self,
        agent: usize,
        x: &DVector<f64>,
        sampling: Sampling,
        rng: &mut R,
    ) -> Result<GradientSample> {
        self.check(agent, x)?;
        let m = self.shards[agent].len();
        if sampling.batch == 0 {
            return Err(LabError::Oracle("batch size must be at least 1".into()));
        }
        let value = if m == 1 {
            self.batch_gradient(agent, 0..1, x)
        } else if sampling.replacement {
            let draws: Vec<usize> = (0..sampling.batch).map(|_| rng.random_range(0..m)).collect();
            self.batch_gradient(agent, draws.into_iter(), x)
        } else if sampling.batch == m {
            self.batch_gradient(agent, 0..m, x)
        } else if sampling.batch < m {
            let mut picks = rand::seq::index::sample(rng, m, sampling.batch).into_vec();
            picks.sort_unstable();
            self.batch_gradient(agent, picks.into_iter(), x)
        } else {
            return Err(LabError::Oracle(format!(
                "batch {} exceeds shard size {m} without replacement",
                sampling.batch
            )));
        };
        if value.iter().any(|v| !v.is_finite()) {
            return Err(LabError::NonFinite(format!("gradient for agent {agent}")));
        }
        Ok(GradientSample {
            value,
            batch_size: sampling.batch,
        })
    }

    /// Exact conditional variance `E‖g − ∇f_i(x)‖²` of a with-replacement batch.
    pub fn sample_variance(&self, agent: usize, x: &DVector<f64>, batch: usize) -> Result<f64> {
        self.check(agent, x)?;
        let shard = &self.shards[agent];
        let m = shard.len();
        let mut mean = vec![0.0; self.dim];
        let mut second = 0.0;
        for j in 0..m {
            let mut g = vec![0.0; self.dim];
            self.add_sample_grad(shard.row(j, self.dim), shard.targets[j], x, &mut g);
            second += g.iter().map(|v| v * v).sum::<f64>();
            for (a, v) in mean.iter_mut().zip(&g) {
                *a += v;
            }
        }
        let mean_sq: f64 = mean.iter().map(|v| (v / m as f64).powi(2)).sum();
        Ok(((second / m as f64) - mean_sq).max(0.0) / batch as f64)
    }

    /// `f(x) = (1/n)Σ f_i(x)`.
    pub fn value_global(&self, x: &DVector<f64>) -> Result<f64> {
        if let Some(agg) = &self.aggregate {
            self.check(0, x)?;
            return Ok(0.5 * x.dot(&(&agg.hessian * x)) - agg.linear.dot(x) + agg.constant);
        }
        let mut total = 0.0;
        for i in 0..self.n_agents() {
            total += self.value(i, x)?;
        }
        Ok(total / self.n_agents() as f64)
    }

    /// `∇f(x)`.
    pub fn grad_global(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if let Some(agg) = &self.aggregate {
            self.check(0, x)?;
            return Ok(&agg.hessian * x - &agg.linear);
        }
        let mut total = DVector::zeros(self.dim);
        for i in 0..self.n_agents() {
            total += self.eval_full(i, x)?.1;
        }
        Ok(total / self.n_agents() as f64)
    }

    /// Hessian of `f_i` at `x`.
    pub fn hessian(&self, agent: usize, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check(agent, x)?;
        let shard = &self.shards[agent];
        let mut h = DMatrix::zeros(self.dim, self.dim);
        for j in 0..shard.len() {
            let row = DVector::from_column_slice(shard.row(j, self.dim));
            let weight = match self.kind {
                ObjectiveKind::Quadratic => 1.0,
                _ => {
                    let s = sigmoid(-shard.targets[j] * row.dot(x));
                    s * (1.0 - s)
                }
            };
            h.ger(weight, &row, &row, 1.0);
        }
        h /= shard.len() as f64;
        match self.kind {
            ObjectiveKind::LogisticL2 { rho } => {
                for q in 0..self.dim {
                    h[(q, q)] += rho;
                }
            }
            ObjectiveKind::LogisticNonconvex { omega } => {
                for q in 0..self.dim {
                    let v2 = x[q] * x[q];
                    h[(q, q)] += omega * (1.0 - 3.0 * v2) / (1.0 + v2).powi(3);
                }
            }
            ObjectiveKind::Quadratic => {}
        }
        Ok(h)
    }

    /// Aggregate Hessian `(1/n)Σ A_iᵀA_i/m_i` of a quadratic suite.
    pub fn quadratic_hessian(&self) -> Option<&DMatrix<f64>> {
        self.aggregate.as_ref().map(|a| &a.hessian)
    }

    pub(crate) fn quadratic_linear(&self) -> Option<&DVector<f64>> {
        self.aggregate.as_ref().map(|a| &a.linear)
    }

    /// Largest squared row norm over all shards.
    pub fn max_row_norm_sq(&self) -> f64 {
        self.shards
            .iter()
            .flat_map(|s| s.rows.chunks(self.dim).map(|r| dot(r, r)))
            .fold(0.0, f64::max)
    }

    /// Classification accuracy of `sign(uᵀx)` over all shards (logistic suites).
    pub fn accuracy(&self, x: &DVector<f64>) -> f64 {
        let mut correct = 0usize;
        let mut total = 0usize;
        for s in &self.shards {
            for j in 0..s.len() {
                let margin = dot(s.row(j, self.dim), x.as_slice());
                correct += usize::from(margin * s.targets[j] > 0.0);
                total += 1;
            }
        }
        correct as f64 / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{generate_quadratic, generate_synthetic, partition_heterogeneous, QuadraticSpec};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn logistic(kind: ObjectiveKind) -> ObjectiveSuite {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = generate_synthetic(60, 4, 2.0, &mut rng).unwrap();
        let p = partition_heterogeneous(&d, 4).unwrap();
        ObjectiveSuite::logistic(kind, &d, &p).unwrap()
    }

    #[test]
    fn logistic_at_origin() {
        let s = logistic(ObjectiveKind::LogisticL2 { rho: 0.2 });
        let x = DVector::zeros(4);
        for i in 0..4 {
            let (f, g) = s.eval_full(i, &x).unwrap();
            assert_abs_diff_eq!(f, std::f64::consts::LN_2, epsilon = 1e-15);
            let (a, b) = s.shard_matrices(i);
            let expected = -(a.transpose() * b) / (2.0 * a.nrows() as f64);
            assert!((g - expected).amax() < 1e-15);
        }
    }

    #[test]
    fn nonconvex_regularizer_vanishes_at_origin() {
        let plain = logistic(ObjectiveKind::LogisticNonconvex { omega: 0.0 });
        let reg = logistic(ObjectiveKind::LogisticNonconvex { omega: 0.05 });
        let x = DVector::zeros(4);
        for i in 0..4 {
            let (f0, g0) = plain.eval_full(i, &x).unwrap();
            let (f1, g1) = reg.eval_full(i, &x).unwrap();
            assert_eq!(f0, f1);
            assert_eq!(g0, g1);
        }
    }

    #[test]
    fn stable_at_huge_margins() {
        let s = logistic(ObjectiveKind::LogisticL2 { rho: 0.0 });
        let x = DVector::from_element(4, 1e4);
        let (f, g) = s.eval_full(0, &x).unwrap();
        assert!(f.is_finite() && g.iter().all(|v| v.is_finite()));
        assert_eq!(softplus(-800.0), (-800.0f64).exp().ln_1p());
        assert_eq!(softplus(800.0), 800.0);
        assert_eq!(sigmoid(-1000.0), 0.0);
    }

    #[test]
    fn dimension_mismatch() {
        let s = logistic(ObjectiveKind::LogisticL2 { rho: 0.2 });
        assert!(matches!(s.eval_full(0, &DVector::zeros(3)), Err(LabError::Shape { .. })));
    }

    #[test]
    fn batch_zero_rejected() {
        let s = logistic(ObjectiveKind::LogisticL2 { rho: 0.2 });
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(s.sample_grad(0, &DVector::zeros(4), Sampling::with_replacement(0), &mut rng).is_err());
    }

    #[test]
    fn single_sample_shard_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = generate_synthetic(4, 3, 1.0, &mut rng).unwrap();
        let p = partition_heterogeneous(&d, 4).unwrap();
        let s = ObjectiveSuite::logistic(ObjectiveKind::LogisticL2 { rho: 0.2 }, &d, &p).unwrap();
        let x = DVector::from_vec(vec![0.3, -0.2, 0.9]);
        for b in [1, 3, 8] {
            let g = s.sample_grad(2, &x, Sampling::with_replacement(b), &mut rng).unwrap();
            assert_eq!(g.value, s.eval_full(2, &x).unwrap().1);
        }
    }

    #[test]
    fn exhaustive_batch_is_bitwise_full_gradient() {
        let s = logistic(ObjectiveKind::LogisticNonconvex { omega: 0.05 });
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = DVector::from_vec(vec![0.5, -1.0, 2.0, 0.1]);
        let m = s.shard_len(1);
        let g = s.sample_grad(1, &x, Sampling::without_replacement(m), &mut rng).unwrap();
        assert_eq!(g.value, s.eval_full(1, &x).unwrap().1);
        assert!(s.sample_grad(1, &x, Sampling::without_replacement(m + 1), &mut rng).is_err());
    }

    #[test]
    fn quadratic_global_matches_agent_average() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let spec = QuadraticSpec {
            n_agents: 3,
            rows_per_agent: 6,
            dim: 4,
            heterogeneity: 1.0,
            noise: 0.3,
        };
        let s = generate_quadratic(&spec, &mut rng).unwrap();
        let x = DVector::from_vec(vec![0.1, 0.2, -0.3, 0.4]);
        let mut f = 0.0;
        let mut g = DVector::zeros(4);
        for i in 0..3 {
            let (fi, gi) = s.eval_full(i, &x).unwrap();
            f += fi / 3.0;
            g += gi / 3.0;
        }
        assert_abs_diff_eq!(s.value_global(&x).unwrap(), f, epsilon = 1e-12);
        assert!((s.grad_global(&x).unwrap() - g).amax() < 1e-12);
    }
}
