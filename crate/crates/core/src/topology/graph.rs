use std::collections::{BTreeSet, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Attempts allowed to draw a connected Erdős–Rényi graph before giving up.
pub const ER_MAX_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GraphKind {
    Ring,
    Complete,
    Star,
    Grid2d { rows: usize, cols: usize },
    ErdosRenyi { p_edge: f64 },
    /// Ordered pairs; every off-diagonal pair must appear in both directions.
    Custom(Vec<(usize, usize)>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub kind: GraphKind,
    pub n: usize,
}

impl GraphSpec {
    pub fn new(kind: GraphKind, n: usize) -> Self {
        Self { kind, n }
    }

    pub fn ring(n: usize) -> Self {
        Self::new(GraphKind::Ring, n)
    }

    pub fn complete(n: usize) -> Self {
        Self::new(GraphKind::Complete, n)
    }

    pub fn grid(rows: usize, cols: usize) -> Self {
        Self::new(GraphKind::Grid2d { rows, cols }, rows * cols)
    }
}

/// Undirected graph whose neighbor sets include the node itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    neighbors: Vec<BTreeSet<usize>>,
}

impl Graph {
    fn empty(n: usize) -> Self {
        Self {
            neighbors: (0..n).map(|i| BTreeSet::from([i])).collect(),
        }
    }

    fn link(&mut self, i: usize, j: usize) {
        self.neighbors[i].insert(j);
        self.neighbors[j].insert(i);
    }

    pub fn n(&self) -> usize {
        self.neighbors.len()
    }

    /// Neighbor set of `i`, self-loop included.
    pub fn neighbors(&self, i: usize) -> &BTreeSet<usize> {
        &self.neighbors[i]
    }

    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].contains(&j)
    }

    /// Number of neighbors excluding the self-loop.
    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len() - 1
    }

    pub fn is_regular(&self) -> bool {
        let d0 = self.degree(0);
        (1..self.n()).all(|i| self.degree(i) == d0)
    }

    pub fn is_connected(&self) -> bool {
        if self.n() == 0 {
            return false;
        }
        let mut seen = vec![false; self.n()];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &self.neighbors[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.n()
    }

    /// Undirected edges `(i, j)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, nb) in self.neighbors.iter().enumerate() {
            out.extend(nb.iter().filter(|&&j| j > i).map(|&j| (i, j)));
        }
        out
    }
}

pub fn build_graph<R: Rng + ?Sized>(spec: &GraphSpec, rng: &mut R) -> Result<Graph> {
    let n = spec.n;
    if n == 0 {
        return Err(LabError::Graph("agent count must be positive".into()));
    }
    let graph = match &spec.kind {
        GraphKind::Ring => {
            let mut g = Graph::empty(n);
            if n > 1 {
                for i in 0..n {
                    g.link(i, (i + 1) % n);
                }
            }
            g
        }
        GraphKind::Complete => {
            let mut g = Graph::empty(n);
            for i in 0..n {
                for j in i + 1..n {
                    g.link(i, j);
                }
            }
            g
        }
        GraphKind::Star => {
            let mut g = Graph::empty(n);
            for j in 1..n {
                g.link(0, j);
            }
            g
        }
        GraphKind::Grid2d { rows, cols } => {
            let (rows, cols) = (*rows, *cols);
            if rows == 0 || cols == 0 || rows * cols != n {
                return Err(LabError::Graph(format!(
                    "grid {rows}x{cols} does not have {n} nodes"
                )));
            }
            let mut g = Graph::empty(n);
            for r in 0..rows {
                for c in 0..cols {
                    let id = r * cols + c;
                    if c + 1 < cols {
                        g.link(id, id + 1);
                    }
                    if r + 1 < rows {
                        g.link(id, id + cols);
                    }
                }
            }
            g
        }
        GraphKind::ErdosRenyi { p_edge } => {
            let p = *p_edge;
            if !(p > 0.0 && p <= 1.0) {
                return Err(LabError::Graph(format!("edge probability {p} not in (0, 1]")));
            }
            let mut attempt = 0;
            loop {
                attempt += 1;
                let mut g = Graph::empty(n);
                for i in 0..n {
                    for j in i + 1..n {
                        if rng.random::<f64>() < p {
                            g.link(i, j);
                        }
                    }
                }
                if g.is_connected() {
                    break g;
                }
                if attempt >= ER_MAX_ATTEMPTS {
                    return Err(LabError::Graph(format!(
                        "no connected Erdős–Rényi draw (n={n}, p={p}) in {ER_MAX_ATTEMPTS} attempts"
                    )));
                }
            }
        }
        GraphKind::Custom(pairs) => {
            let set: BTreeSet<(usize, usize)> = pairs.iter().copied().collect();
            let mut g = Graph::empty(n);
            for &(i, j) in &set {
                if i >= n || j >= n {
                    return Err(LabError::Graph(format!("edge ({i}, {j}) out of range for n={n}")));
                }
                if i != j && !set.contains(&(j, i)) {
                    return Err(LabError::Graph(format!("edge ({i}, {j}) has no reverse")));
                }
                g.link(i, j);
            }
            g
        }
    };
    if !graph.is_connected() {
        return Err(LabError::Graph("graph is disconnected".into()));
    }
    Ok(graph)
}
