//! Flat `key = value` experiment configs.
//!
//! Blank lines and `#` comments are ignored. Every violation is collected and
//! reported together; unknown, duplicate and inapplicable keys are errors.
//!
//! Required keys: `schema_version`, `topology`, `n`, `problem`, `algorithms`,
//! `iterations`, `trials`, `seed`.
//!
//! `algorithms` is a comma-separated list of
//! `VARIANT[@label]:manual:alpha[:beta]`, `VARIANT[@label]:theorem_ncvx` or
//! `VARIANT[@label]:theorem_pl`. A manual `beta` is a number or one of
//! `rho_tilde` (`ρ̃_w`), `cbrt` (`1 − (1−ρ̃_w)/n^{1/3}`), `sqrtn`
//! (`1 − (1−ρ̃_w)/√n`) and `gap_sqrt` (`1 − √((1−λ)/n)`).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::error::{LabError, Result};
use crate::optimizers::Variant;
use crate::topology::{lca_params, GraphKind, WeightScheme};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaSpec {
    Value(f64),
    RhoTilde,
    Cbrt,
    Sqrtn,
    GapSqrt,
}

impl BetaSpec {
    /// Concrete `β` for `n` agents and mixing quantity `λ`.
    pub fn resolve(self, n: usize, lambda: f64) -> Result<f64> {
        let (_, rho) = lca_params(lambda)?;
        let nf = n as f64;
        Ok(match self {
            BetaSpec::Value(b) => b,
            BetaSpec::RhoTilde => rho,
            BetaSpec::Cbrt => 1.0 - (1.0 - rho) / nf.cbrt(),
            BetaSpec::Sqrtn => 1.0 - (1.0 - rho) / nf.sqrt(),
            BetaSpec::GapSqrt => 1.0 - ((1.0 - lambda) / nf).sqrt(),
        })
    }
}

impl fmt::Display for BetaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BetaSpec::Value(b) => write!(f, "{b:?}"),
            BetaSpec::RhoTilde => f.write_str("rho_tilde"),
            BetaSpec::Cbrt => f.write_str("cbrt"),
            BetaSpec::Sqrtn => f.write_str("sqrtn"),
            BetaSpec::GapSqrt => f.write_str("gap_sqrt"),
        }
    }
}

impl FromStr for BetaSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "rho_tilde" => Ok(BetaSpec::RhoTilde),
            "cbrt" => Ok(BetaSpec::Cbrt),
            "sqrtn" => Ok(BetaSpec::Sqrtn),
            "gap_sqrt" => Ok(BetaSpec::GapSqrt),
            other => {
                let b: f64 = other.parse().map_err(|_| format!("beta '{other}' is not a number or keyword"))?;
                if (0.0..1.0).contains(&b) {
                    Ok(BetaSpec::Value(b))
                } else {
                    Err(format!("beta must lie in [0, 1), got {b}"))
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamMode {
    Manual { alpha: f64, beta: BetaSpec },
    TheoremNcvx,
    TheoremPl,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmSpec {
    pub variant: Variant,
    /// Output name; defaults to the variant name.
    pub label: String,
    pub mode: ParamMode,
}

impl fmt::Display for AlgorithmSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.variant)?;
        if self.label != self.variant.name() {
            write!(f, "@{}", self.label)?;
        }
        match self.mode {
            ParamMode::Manual { alpha, beta } => write!(f, ":manual:{alpha:?}:{beta}"),
            ParamMode::TheoremNcvx => f.write_str(":theorem_ncvx"),
            ParamMode::TheoremPl => f.write_str(":theorem_pl"),
        }
    }
}

fn parse_algorithm(entry: &str) -> std::result::Result<AlgorithmSpec, String> {
    let parts: Vec<&str> = entry.split(':').map(str::trim).collect();
    let (name, label) = match parts[0].split_once('@') {
        Some((v, l)) => (v, Some(l.to_string())),
        None => (parts[0], None),
    };
    let variant: Variant = name.parse().map_err(|e: LabError| e.to_string())?;
    if let Some(l) = &label {
        if l.is_empty() || !l.chars().all(|c| c.is_ascii_alphanumeric() || "_-.".contains(c)) {
            return Err(format!("label '{l}' must be nonempty and use [A-Za-z0-9_.-]"));
        }
    }
    let mode = match parts.get(1).copied() {
        Some("manual") => {
            let alpha: f64 = parts
                .get(2)
                .ok_or("manual mode needs an alpha")?
                .parse()
                .map_err(|_| format!("alpha '{}' is not a number", parts[2]))?;
            if !(alpha.is_finite() && alpha > 0.0) {
                return Err(format!("alpha must be positive, got {alpha}"));
            }
            let beta = match parts.get(3) {
                Some(b) => b.parse()?,
                None => BetaSpec::Value(0.0),
            };
            if parts.len() > 4 {
                return Err("too many fields".into());
            }
            ParamMode::Manual { alpha, beta }
        }
        Some("theorem_ncvx") if parts.len() == 2 => ParamMode::TheoremNcvx,
        Some("theorem_pl") if parts.len() == 2 => ParamMode::TheoremPl,
        Some(other) => return Err(format!("unknown parameter mode '{other}'")),
        None => return Err("missing parameter mode".into()),
    };
    Ok(AlgorithmSpec {
        variant,
        label: label.unwrap_or_else(|| variant.name().to_string()),
        mode,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSpec {
    Quadratic {
        dim: usize,
        samples_per_agent: usize,
        heterogeneity: f64,
        noise: f64,
    },
    LogisticL2 {
        rho: f64,
        dim: usize,
        n_samples: usize,
        separation: f64,
        shuffled: bool,
    },
    LogisticNonconvex {
        omega: f64,
        dim: usize,
        n_samples: usize,
        separation: f64,
        shuffled: bool,
    },
}

impl ProblemSpec {
    pub fn dim(&self) -> usize {
        match self {
            ProblemSpec::Quadratic { dim, .. }
            | ProblemSpec::LogisticL2 { dim, .. }
            | ProblemSpec::LogisticNonconvex { dim, .. } => *dim,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    /// Every agent starts from the same random point.
    Common,
    /// Independent random start per agent.
    Random,
}

/// Metric compared against the reference curve by the transient estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransientMetric {
    AvgGap,
    GradNormSq,
    /// Prefix minimum of `grad_norm_sq`.
    GradNormSqMin,
}

impl TransientMetric {
    pub fn name(self) -> &'static str {
        match self {
            TransientMetric::AvgGap => "avg_gap",
            TransientMetric::GradNormSq => "grad_norm_sq",
            TransientMetric::GradNormSqMin => "grad_norm_sq_min",
        }
    }
}

impl FromStr for TransientMetric {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        [TransientMetric::AvgGap, TransientMetric::GradNormSq, TransientMetric::GradNormSqMin]
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown transient metric '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransientSpec {
    /// Label of the algorithm used as the centralized reference.
    pub reference: String,
    pub metric: TransientMetric,
    pub factor: f64,
}

/// User-supplied problem constants; any field left `None` is estimated.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConstantOverrides {
    pub l: Option<f64>,
    pub c: Option<f64>,
    pub sigma: Option<f64>,
    pub sigma_star_f: Option<f64>,
    pub mu: Option<f64>,
    pub delta0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub topology: GraphKind,
    pub n: usize,
    pub scheme: WeightScheme,
    pub lazy: bool,
    pub problem: ProblemSpec,
    pub algorithms: Vec<AlgorithmSpec>,
    pub batch_size: usize,
    pub iterations: usize,
    pub trials: usize,
    pub seed: u64,
    pub record_every: usize,
    pub init: InitMode,
    pub init_scale: f64,
    pub hb_momentum: f64,
    /// Clamp theorem stepsizes to their admissibility bounds.
    pub theorem_clamp: bool,
    pub overrides: ConstantOverrides,
    pub transient: Option<TransientSpec>,
}

struct Fields {
    map: BTreeMap<String, (usize, String)>,
    used: BTreeSet<String>,
    errors: Vec<String>,
}

impl Fields {
    fn raw(&mut self, key: &str) -> Option<String> {
        let (_, v) = self.map.get(key)?;
        self.used.insert(key.to_string());
        Some(v.clone())
    }

    fn parse<T: FromStr>(&mut self, key: &str) -> Option<T>
    where
        T::Err: fmt::Display,
    {
        let v = self.raw(key)?;
        match v.parse::<T>() {
            Ok(t) => Some(t),
            Err(e) => {
                self.errors.push(format!("{key}: cannot parse '{v}': {e}"));
                None
            }
        }
    }

    fn required<T: FromStr>(&mut self, key: &str) -> Option<T>
    where
        T::Err: fmt::Display,
    {
        if !self.map.contains_key(key) {
            self.errors.push(format!("{key}: missing required key"));
            return None;
        }
        self.parse(key)
    }

    fn optional<T: FromStr>(&mut self, key: &str, default: T) -> T
    where
        T::Err: fmt::Display,
    {
        self.parse(key).unwrap_or(default)
    }

    fn check(&mut self, ok: bool, msg: impl Into<String>) {
        if !ok {
            self.errors.push(msg.into());
        }
    }
}

fn parse_edges(text: &str) -> std::result::Result<Vec<(usize, usize)>, String> {
    text.split([',', ' '])
        .filter(|s| !s.trim().is_empty())
        .map(|pair| {
            let (a, b) = pair.trim().split_once('-').ok_or(format!("edge '{pair}' is not 'i-j'"))?;
            let a = a.parse().map_err(|_| format!("bad node '{a}'"))?;
            let b = b.parse().map_err(|_| format!("bad node '{b}'"))?;
            Ok((a, b))
        })
        .collect()
}

fn positive(f: &mut Fields, key: &str, v: f64) {
    f.check(v.is_finite() && v > 0.0, format!("{key}: must be positive, got {v}"));
}

fn nonnegative(f: &mut Fields, key: &str, v: f64) {
    f.check(v.is_finite() && v >= 0.0, format!("{key}: must be nonnegative, got {v}"));
}

/// Parses and validates a config, reporting every violation at once.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut errors = Vec::new();
    let mut map = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            errors.push(format!("line {line_no}: expected 'key = value'"));
            continue;
        };
        let key = key.trim().to_string();
        if let Some((first, _)) = map.get(&key) {
            errors.push(format!("{key}: duplicate key (lines {first} and {line_no})"));
            continue;
        }
        map.insert(key, (line_no, value.trim().to_string()));
    }
    let mut f = Fields {
        map,
        used: BTreeSet::new(),
        errors,
    };

    if let Some(v) = f.required::<u32>("schema_version") {
        f.check(v == SCHEMA_VERSION, format!("schema_version: expected {SCHEMA_VERSION}, got {v}"));
    }
    let n = f.required::<usize>("n");
    if let Some(n) = n {
        f.check(n >= 1, "n: must be at least 1");
    }
    let kind_name = f.required::<String>("topology");
    let topology = match kind_name.as_deref() {
        Some("ring") => Some(GraphKind::Ring),
        Some("complete") => Some(GraphKind::Complete),
        Some("star") => Some(GraphKind::Star),
        Some("grid2d") => {
            let rows = f.required::<usize>("grid_rows");
            let cols = f.required::<usize>("grid_cols");
            match (rows, cols, n) {
                (Some(r), Some(c), Some(n)) => {
                    f.check(r * c == n, format!("grid_rows: {r} x {c} does not equal n = {n}"));
                    Some(GraphKind::Grid2d { rows: r, cols: c })
                }
                _ => None,
            }
        }
        Some("erdos_renyi") => f.required::<f64>("p_edge").map(|p| {
            f.check(p > 0.0 && p <= 1.0, format!("p_edge: must lie in (0, 1], got {p}"));
            GraphKind::ErdosRenyi { p_edge: p }
        }),
        Some("custom") => match f.required::<String>("edges").map(|e| parse_edges(&e)) {
            Some(Ok(edges)) => Some(GraphKind::Custom(edges)),
            Some(Err(e)) => {
                f.errors.push(format!("edges: {e}"));
                None
            }
            None => None,
        },
        Some(other) => {
            f.errors.push(format!("topology: unknown kind '{other}'"));
            None
        }
        None => None,
    };
    let scheme = f.optional("scheme", WeightScheme::UniformNeighbor);
    let lazy = f.optional("lazy", true);

    let problem_name = f.required::<String>("problem");
    let dim = f.optional("dim", 5usize);
    f.check(dim >= 1, "dim: must be at least 1");
    let problem = match problem_name.as_deref() {
        Some("quadratic") => {
            let samples_per_agent = f.optional("samples_per_agent", 20usize);
            f.check(samples_per_agent >= 1, "samples_per_agent: must be at least 1");
            let heterogeneity = f.optional("heterogeneity", 1.0);
            nonnegative(&mut f, "heterogeneity", heterogeneity);
            let noise = f.optional("noise", 0.5);
            nonnegative(&mut f, "noise", noise);
            Some(ProblemSpec::Quadratic {
                dim,
                samples_per_agent,
                heterogeneity,
                noise,
            })
        }
        Some(kind @ ("logistic_l2" | "logistic_nonconvex")) => {
            let n_samples = f.optional("n_samples", 640usize);
            if let Some(n) = n {
                f.check(n_samples >= n, format!("n_samples: {n_samples} is fewer than n = {n}"));
            }
            let separation = f.optional("separation", 2.0);
            nonnegative(&mut f, "separation", separation);
            let shuffled = match f.optional("partition", "heterogeneous".to_string()).as_str() {
                "heterogeneous" => false,
                "shuffled" => true,
                other => {
                    f.errors.push(format!("partition: unknown '{other}'"));
                    false
                }
            };
            if kind == "logistic_l2" {
                let rho = f.optional("rho", 0.2);
                nonnegative(&mut f, "rho", rho);
                Some(ProblemSpec::LogisticL2 {
                    rho,
                    dim,
                    n_samples,
                    separation,
                    shuffled,
                })
            } else {
                let omega = f.optional("omega", 0.05);
                nonnegative(&mut f, "omega", omega);
                Some(ProblemSpec::LogisticNonconvex {
                    omega,
                    dim,
                    n_samples,
                    separation,
                    shuffled,
                })
            }
        }
        Some(other) => {
            f.errors.push(format!("problem: unknown kind '{other}'"));
            None
        }
        None => None,
    };

    let mut algorithms = Vec::new();
    if let Some(list) = f.required::<String>("algorithms") {
        let mut labels = BTreeSet::new();
        for (i, entry) in list.split(',').map(str::trim).enumerate() {
            match parse_algorithm(entry) {
                Ok(a) => {
                    if !labels.insert(a.label.clone()) {
                        f.errors.push(format!("algorithms[{i}]: duplicate label '{}'", a.label));
                    }
                    algorithms.push(a);
                }
                Err(e) => f.errors.push(format!("algorithms[{i}] '{entry}': {e}")),
            }
        }
    }

    let batch_size = f.optional("batch_size", 1usize);
    f.check(batch_size >= 1, "batch_size: must be at least 1");
    let iterations = f.required::<usize>("iterations");
    if let Some(k) = iterations {
        f.check(k >= 1, "iterations: must be at least 1");
    }
    let trials = f.required::<usize>("trials");
    if let Some(t) = trials {
        f.check(t >= 1, "trials: must be at least 1");
    }
    let seed = f.required::<u64>("seed");
    let record_every = f.optional("record_every", 10usize);
    f.check(record_every >= 1, "record_every: must be at least 1");
    let init = match f.optional("init", "common".to_string()).as_str() {
        "common" => InitMode::Common,
        "random" => InitMode::Random,
        other => {
            f.errors.push(format!("init: unknown mode '{other}'"));
            InitMode::Common
        }
    };
    let init_scale = f.optional("init_scale", 1.0);
    nonnegative(&mut f, "init_scale", init_scale);
    let hb_momentum = f.optional("hb_momentum", 0.9);
    f.check(
        (0.0..1.0).contains(&hb_momentum),
        format!("hb_momentum: must lie in [0, 1), got {hb_momentum}"),
    );
    let theorem_clamp = f.optional("theorem_clamp", true);
    let mut overrides = ConstantOverrides::default();
    for (key, slot) in [
        ("const_L", &mut overrides.l),
        ("const_C", &mut overrides.c),
        ("const_sigma", &mut overrides.sigma),
        ("const_sigma_star_f", &mut overrides.sigma_star_f),
        ("const_mu", &mut overrides.mu),
        ("const_delta0", &mut overrides.delta0),
    ] {
        *slot = f.parse::<f64>(key);
    }
    for (key, v) in [
        ("const_L", overrides.l),
        ("const_mu", overrides.mu),
        ("const_delta0", overrides.delta0),
    ] {
        if let Some(v) = v {
            positive(&mut f, key, v);
        }
    }
    for (key, v) in [
        ("const_C", overrides.c),
        ("const_sigma", overrides.sigma),
        ("const_sigma_star_f", overrides.sigma_star_f),
    ] {
        if let Some(v) = v {
            nonnegative(&mut f, key, v);
        }
    }
    let transient = match f.parse::<String>("transient_reference") {
        Some(reference) => {
            if !algorithms.iter().any(|a| a.label == reference) {
                f.errors.push(format!("transient_reference: no algorithm labelled '{reference}'"));
            }
            let metric = f.optional("transient_metric", TransientMetric::AvgGap);
            let factor = f.optional("transient_factor", crate::diagnostics::DEFAULT_TRANSIENT_FACTOR);
            f.check(factor >= 1.0, format!("transient_factor: must be >= 1, got {factor}"));
            Some(TransientSpec {
                reference,
                metric,
                factor,
            })
        }
        None => None,
    };

    let unused: Vec<(usize, String)> = f
        .map
        .iter()
        .filter(|(k, _)| !f.used.contains(*k))
        .map(|(k, (line, _))| (*line, k.clone()))
        .collect();
    for (line, key) in unused {
        f.errors.push(format!("{key}: unknown or inapplicable key (line {line})"));
    }

    if !f.errors.is_empty() {
        return Err(LabError::Config(f.errors));
    }
    Ok(ExperimentConfig {
        topology: topology.expect("validated"),
        n: n.expect("validated"),
        scheme,
        lazy,
        problem: problem.expect("validated"),
        algorithms,
        batch_size,
        iterations: iterations.expect("validated"),
        trials: trials.expect("validated"),
        seed: seed.expect("validated"),
        record_every,
        init,
        init_scale,
        hb_momentum,
        theorem_clamp,
        overrides,
        transient,
    })
}

/// Canonical text form; [`parse_config`] reads it back to an equal config.
pub fn serialize_config(c: &ExperimentConfig) -> String {
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    kv("schema_version", SCHEMA_VERSION.to_string());
    let kind = match &c.topology {
        GraphKind::Ring => "ring",
        GraphKind::Complete => "complete",
        GraphKind::Star => "star",
        GraphKind::Grid2d { .. } => "grid2d",
        GraphKind::ErdosRenyi { .. } => "erdos_renyi",
        GraphKind::Custom(_) => "custom",
    };
    kv("topology", kind.into());
    kv("n", c.n.to_string());
    match &c.topology {
        GraphKind::Grid2d { rows, cols } => {
            kv("grid_rows", rows.to_string());
            kv("grid_cols", cols.to_string());
        }
        GraphKind::ErdosRenyi { p_edge } => kv("p_edge", format!("{p_edge:?}")),
        GraphKind::Custom(edges) => kv(
            "edges",
            edges.iter().map(|(a, b)| format!("{a}-{b}")).collect::<Vec<_>>().join(" "),
        ),
        _ => {}
    }
    kv("scheme", c.scheme.to_string());
    kv("lazy", c.lazy.to_string());
    match &c.problem {
        ProblemSpec::Quadratic {
            dim,
            samples_per_agent,
            heterogeneity,
            noise,
        } => {
            kv("problem", "quadratic".into());
            kv("dim", dim.to_string());
            kv("samples_per_agent", samples_per_agent.to_string());
            kv("heterogeneity", format!("{heterogeneity:?}"));
            kv("noise", format!("{noise:?}"));
        }
        ProblemSpec::LogisticL2 {
            rho,
            dim,
            n_samples,
            separation,
            shuffled,
        }
        | ProblemSpec::LogisticNonconvex {
            omega: rho,
            dim,
            n_samples,
            separation,
            shuffled,
        } => {
            let l2 = matches!(c.problem, ProblemSpec::LogisticL2 { .. });
            kv("problem", if l2 { "logistic_l2" } else { "logistic_nonconvex" }.into());
            kv(if l2 { "rho" } else { "omega" }, format!("{rho:?}"));
            kv("dim", dim.to_string());
            kv("n_samples", n_samples.to_string());
            kv("separation", format!("{separation:?}"));
            kv("partition", if *shuffled { "shuffled" } else { "heterogeneous" }.into());
        }
    }
    kv(
        "algorithms",
        c.algorithms.iter().map(ToString::to_string).collect::<Vec<_>>().join(", "),
    );
    kv("batch_size", c.batch_size.to_string());
    kv("iterations", c.iterations.to_string());
    kv("trials", c.trials.to_string());
    kv("seed", c.seed.to_string());
    kv("record_every", c.record_every.to_string());
    kv(
        "init",
        match c.init {
            InitMode::Common => "common",
            InitMode::Random => "random",
        }
        .into(),
    );
    kv("init_scale", format!("{:?}", c.init_scale));
    kv("hb_momentum", format!("{:?}", c.hb_momentum));
    kv("theorem_clamp", c.theorem_clamp.to_string());
    let o = &c.overrides;
    for (key, v) in [
        ("const_L", o.l),
        ("const_C", o.c),
        ("const_sigma", o.sigma),
        ("const_sigma_star_f", o.sigma_star_f),
        ("const_mu", o.mu),
        ("const_delta0", o.delta0),
    ] {
        if let Some(v) = v {
            kv(key, format!("{v:?}"));
        }
    }
    if let Some(t) = &c.transient {
        kv("transient_reference", t.reference.clone());
        kv("transient_metric", t.metric.name().into());
        kv("transient_factor", format!("{:?}", t.factor));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
schema_version = 1
topology = ring
n = 16
problem = quadratic
algorithms = DSMT:manual:0.01:0.9
iterations = 1000
trials = 3
seed = 42
";

    #[test]
    fn minimal_config_parses() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.n, 16);
        assert_eq!(c.topology, GraphKind::Ring);
        assert_eq!(c.algorithms[0].variant, Variant::Dsmt);
        assert_eq!(
            c.algorithms[0].mode,
            ParamMode::Manual {
                alpha: 0.01,
                beta: BetaSpec::Value(0.9)
            }
        );
        assert_eq!((c.iterations, c.trials, c.seed, c.record_every), (1000, 3, 42, 10));
        assert!(c.lazy && c.theorem_clamp);
    }

    #[test]
    fn beta_one_names_the_field() {
        let text = MINIMAL.replace("0.01:0.9", "0.01:1.0");
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("algorithms[0]") && err.contains("beta"), "{err}");
    }

    #[test]
    fn all_violations_reported() {
        let text = "schema_version = 2\ntopology = torus\nn = 4\nbogus = 1\nalgorithms = SGD:manual:1\n";
        let LabError::Config(errs) = parse_config(text).unwrap_err() else {
            panic!("expected config error");
        };
        let joined = errs.join("\n");
        for needle in ["schema_version", "torus", "bogus", "SGD", "problem: missing", "iterations: missing", "seed: missing"] {
            assert!(joined.contains(needle), "{needle} not in {joined}");
        }
    }

    #[test]
    fn inapplicable_and_duplicate_keys_rejected() {
        let err = parse_config(&format!("{MINIMAL}p_edge = 0.3\n")).unwrap_err().to_string();
        assert!(err.contains("p_edge"));
        let err = parse_config(&format!("{MINIMAL}n = 8\n")).unwrap_err().to_string();
        assert!(err.contains("duplicate"));
    }

    #[test]
    fn serialize_round_trips() {
        let text = "\
schema_version = 1
topology = grid2d
grid_rows = 2
grid_cols = 3
n = 6
problem = logistic_nonconvex
omega = 0.05
algorithms = DSMT@fast:manual:0.1:rho_tilde, CSGD:theorem_ncvx, DSGT_HB:manual:1e-3
iterations = 50
trials = 2
seed = 7
const_L = 2.5
transient_reference = CSGD
transient_metric = grad_norm_sq_min
";
        let c = parse_config(text).unwrap();
        assert_eq!(c.algorithms[0].label, "fast");
        let again = parse_config(&serialize_config(&c)).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn beta_keywords_resolve() {
        let lambda: f64 = 0.96;
        let (_, rho) = lca_params(lambda).unwrap();
        assert_eq!(BetaSpec::RhoTilde.resolve(8, lambda).unwrap(), rho);
        assert_eq!(BetaSpec::Cbrt.resolve(8, lambda).unwrap(), 1.0 - (1.0 - rho) / 2.0);
        assert_eq!(BetaSpec::Sqrtn.resolve(4, lambda).unwrap(), 1.0 - (1.0 - rho) / 2.0);
        assert_eq!(BetaSpec::GapSqrt.resolve(4, lambda).unwrap(), 1.0 - ((1.0 - lambda) / 4.0).sqrt());
    }
}
