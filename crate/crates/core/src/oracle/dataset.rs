use std::fmt::Write as _;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{LabError, Result};
use crate::matrix_io::fmt_f64;

/// Labeled samples `(u_j, v_j)` with `v_j ∈ {−1, +1}`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    features: Vec<f64>,
    labels: Vec<f64>,
}

impl Dataset {
    pub fn new(dim: usize, features: Vec<f64>, labels: Vec<f64>) -> Result<Self> {
        if labels.is_empty() || dim == 0 {
            return Err(LabError::Oracle("dataset must be nonempty with positive dimension".into()));
        }
        if features.len() != dim * labels.len() {
            return Err(LabError::shape(
                format!("{} feature values", dim * labels.len()),
                features.len(),
            ));
        }
        if let Some(bad) = labels.iter().find(|&&v| v != 1.0 && v != -1.0) {
            return Err(LabError::Oracle(format!("label {bad} is not ±1")));
        }
        Ok(Self { dim, features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn feature(&self, j: usize) -> &[f64] {
        &self.features[j * self.dim..(j + 1) * self.dim]
    }

    pub fn label(&self, j: usize) -> f64 {
        self.labels[j]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// Copies the listed samples into a row-major feature block and label vector.
    pub fn gather(&self, indices: &[usize]) -> (Vec<f64>, Vec<f64>) {
        let mut rows = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &j in indices {
            rows.extend_from_slice(self.feature(j));
            labels.push(self.labels[j]);
        }
        (rows, labels)
    }

    /// One sample per line: label, then features.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for j in 0..self.len() {
            write!(out, "{}", self.labels[j] as i64).unwrap();
            for v in self.feature(j) {
                write!(out, " {}", fmt_f64(*v)).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut dim = None;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let vals = line
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<f64>().map_err(|e| LabError::Parse(format!("line {}: {e}", lineno + 1))))
                .collect::<Result<Vec<_>>>()?;
            if vals.len() < 2 {
                return Err(LabError::Parse(format!("line {}: need a label and features", lineno + 1)));
            }
            let d = *dim.get_or_insert(vals.len() - 1);
            if vals.len() - 1 != d {
                return Err(LabError::Parse(format!("line {}: expected {d} features", lineno + 1)));
            }
            labels.push(vals[0]);
            features.extend_from_slice(&vals[1..]);
        }
        Self::new(dim.unwrap_or(0), features, labels)
    }
}

/// Two unit-covariance Gaussian clusters with means `±(separation/2)·e₁`.
///
/// Labels alternate `+1, −1, …` so any prefix is balanced.
pub fn generate_synthetic<R: Rng + ?Sized>(
    n_samples: usize,
    dim: usize,
    separation: f64,
    rng: &mut R,
) -> Result<Dataset> {
    if n_samples < 2 || dim == 0 {
        return Err(LabError::Oracle(format!(
            "need at least 2 samples and positive dimension, got {n_samples} and {dim}"
        )));
    }
    let mut features = Vec::with_capacity(n_samples * dim);
    let mut labels = Vec::with_capacity(n_samples);
    for j in 0..n_samples {
        let label = if j % 2 == 0 { 1.0 } else { -1.0 };
        for q in 0..dim {
            let noise: f64 = rng.sample(StandardNormal);
            let shift = if q == 0 { label * separation / 2.0 } else { 0.0 };
            features.push(shift + noise);
        }
        labels.push(label);
    }
    Dataset::new(dim, features, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_samples_have_both_labels() {
        let d = generate_synthetic(2, 3, 1.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(d.labels(), &[1.0, -1.0]);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_synthetic(50, 4, 2.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = generate_synthetic(50, 4, 2.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn preconditions() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(generate_synthetic(1, 3, 1.0, &mut rng).is_err());
        assert!(generate_synthetic(4, 0, 1.0, &mut rng).is_err());
        assert!(Dataset::new(1, vec![0.0], vec![0.5]).is_err());
    }

    #[test]
    fn class_means_follow_separation() {
        let d = generate_synthetic(4000, 2, 4.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut pos = 0.0;
        let mut neg = 0.0;
        for j in 0..d.len() {
            if d.label(j) > 0.0 {
                pos += d.feature(j)[0];
            } else {
                neg += d.feature(j)[0];
            }
        }
        assert!((pos / 2000.0 - 2.0).abs() < 0.1);
        assert!((neg / 2000.0 + 2.0).abs() < 0.1);
    }

    #[test]
    fn text_round_trip() {
        let d = generate_synthetic(7, 3, 1.5, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(Dataset::from_text(&d.to_text()).unwrap(), d);
    }
}
