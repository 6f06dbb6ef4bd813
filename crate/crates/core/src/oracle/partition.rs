use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;

use super::dataset::Dataset;
use crate::error::{LabError, Result};

/// Agent index → sample indices. Lists are disjoint, nonempty, and cover the dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    assignment: Vec<Vec<usize>>,
}

impl Partition {
    pub fn new(assignment: Vec<Vec<usize>>, n_samples: usize) -> Result<Self> {
        let mut seen = vec![false; n_samples];
        for (agent, list) in assignment.iter().enumerate() {
            if list.is_empty() {
                return Err(LabError::Oracle(format!("agent {agent} has no samples")));
            }
            for &j in list {
                if j >= n_samples || seen[j] {
                    return Err(LabError::Oracle(format!("sample {j} out of range or assigned twice")));
                }
                seen[j] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(LabError::Oracle("partition does not cover the dataset".into()));
        }
        Ok(Self { assignment })
    }

    pub fn n_agents(&self) -> usize {
        self.assignment.len()
    }

    pub fn agent(&self, i: usize) -> &[usize] {
        &self.assignment[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> {
        self.assignment.iter().map(Vec::as_slice)
    }

    /// Mean over agents of the largest single-label fraction in each shard.
    pub fn label_skew(&self, data: &Dataset) -> f64 {
        let total: f64 = self
            .iter()
            .map(|list| {
                let pos = list.iter().filter(|&&j| data.label(j) > 0.0).count();
                pos.max(list.len() - pos) as f64 / list.len() as f64
            })
            .sum();
        total / self.n_agents() as f64
    }

    /// One line per agent: `agent: idx idx ...`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, list) in self.assignment.iter().enumerate() {
            write!(out, "{i}:").unwrap();
            for j in list {
                write!(out, " {j}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str, n_samples: usize) -> Result<Self> {
        let mut assignment = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (head, rest) = line
                .split_once(':')
                .ok_or_else(|| LabError::Parse(format!("missing ':' in {line:?}")))?;
            let agent: usize = head.trim().parse().map_err(|e| LabError::Parse(format!("{head:?}: {e}")))?;
            if agent != assignment.len() {
                return Err(LabError::Parse(format!("agents out of order at {agent}")));
            }
            let list = rest
                .split_whitespace()
                .map(|t| t.parse::<usize>().map_err(|e| LabError::Parse(format!("{t:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            assignment.push(list);
        }
        Self::new(assignment, n_samples)
    }
}

fn contiguous_chunks(order: Vec<usize>, n: usize) -> Vec<Vec<usize>> {
    let base = order.len() / n;
    let extra = order.len() % n;
    let mut out = Vec::with_capacity(n);
    let mut start = 0;
    for i in 0..n {
        let size = base + usize::from(i < extra);
        out.push(order[start..start + size].to_vec());
        start += size;
    }
    out
}

/// Sorts samples by label and cuts them into `n` contiguous near-equal chunks.
pub fn partition_heterogeneous(data: &Dataset, n: usize) -> Result<Partition> {
    if n == 0 || n > data.len() {
        return Err(LabError::Oracle(format!("cannot split {} samples among {n} agents", data.len())));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_by(|&a, &b| data.label(a).total_cmp(&data.label(b)));
    Partition::new(contiguous_chunks(order, n), data.len())
}

/// Uniformly shuffled near-equal split; the homogeneous counterpart.
pub fn partition_shuffled<R: Rng + ?Sized>(data: &Dataset, n: usize, rng: &mut R) -> Result<Partition> {
    if n == 0 || n > data.len() {
        return Err(LabError::Oracle(format!("cannot split {} samples among {n} agents", data.len())));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    Partition::new(contiguous_chunks(order, n), data.len())
}
