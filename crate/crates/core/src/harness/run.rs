//! Trial runner, aggregation and output files.
//!
//! Random streams: the graph, dataset, partition and starting points come
//! from ChaCha8 seeded with the base seed on stream [`SETUP_STREAM`]. Trial
//! `t` gives agent `i` ChaCha8 seeded with `seed + t` on stream `i`, so every
//! algorithm in a config sees the same data, start and sample streams.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::{ExperimentConfig, InitMode, ParamMode, ProblemSpec, TransientMetric};
use crate::diagnostics::{estimate_transient, running_min, MetricsRecorder, MetricsRow};
use crate::error::{LabError, Result};
use crate::matrix_io::fmt_f64;
use crate::optimizers::{
    init_state, select_params_ncvx, select_params_pl, step, AgentStreams, HyperParams, ParamSelection, StepContext,
};
use crate::oracle::{
    estimate_constants, generate_quadratic, generate_synthetic, partition_heterogeneous, partition_shuffled,
    ObjectiveKind, ObjectiveSuite, ProblemConstants, QuadraticSpec, Sampling,
};
use crate::topology::{build_graph, lca_params, mixing_from_graph, Graph, GraphKind, GraphSpec, LcaOperator, MixingMatrix};

pub const SETUP_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spectra {
    pub n: usize,
    pub lambda: f64,
    pub spectral_gap: f64,
    pub eta_w: f64,
    pub rho_tilde_w: f64,
    pub min_eigenvalue: f64,
    pub psd_certified: bool,
}

impl Spectra {
    fn of(mixing: &MixingMatrix) -> Result<Self> {
        let (eta_w, rho_tilde_w) = lca_params(mixing.lambda())?;
        Ok(Self {
            n: mixing.n(),
            lambda: mixing.lambda(),
            spectral_gap: mixing.spectral_gap(),
            eta_w,
            rho_tilde_w,
            min_eigenvalue: mixing.min_eigenvalue(),
            psd_certified: mixing.psd_certified(),
        })
    }
}

/// Everything shared by the algorithms and trials of one config.
#[derive(Debug)]
pub struct Setup {
    pub graph: Graph,
    pub mixing: Arc<MixingMatrix>,
    /// Absent when the mixing matrix has no PSD certificate.
    pub lca: Option<LcaOperator>,
    pub oracle: ObjectiveSuite,
    pub x0: DMatrix<f64>,
    pub spectra: Spectra,
}

fn setup_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SETUP_STREAM);
    rng
}

fn build_mixing(config: &ExperimentConfig, rng: &mut ChaCha8Rng) -> Result<(Graph, MixingMatrix)> {
    let graph = build_graph(&GraphSpec::new(config.topology.clone(), config.n), rng)?;
    let mixing = mixing_from_graph(&graph, config.scheme, config.lazy)?;
    Ok((graph, mixing))
}

/// Spectral quantities of the config's mixing matrix, without building data.
pub fn spectra_for(config: &ExperimentConfig) -> Result<Spectra> {
    let (_, mixing) = build_mixing(config, &mut setup_rng(config.seed))?;
    Spectra::of(&mixing)
}

pub fn prepare(config: &ExperimentConfig) -> Result<Setup> {
    let mut rng = setup_rng(config.seed);
    let (graph, mixing) = build_mixing(config, &mut rng)?;
    let n = config.n;
    let oracle = match &config.problem {
        ProblemSpec::Quadratic {
            dim,
            samples_per_agent,
            heterogeneity,
            noise,
        } => generate_quadratic(
            &QuadraticSpec {
                n_agents: n,
                rows_per_agent: *samples_per_agent,
                dim: *dim,
                heterogeneity: *heterogeneity,
                noise: *noise,
            },
            &mut rng,
        )?,
        ProblemSpec::LogisticL2 {
            dim,
            n_samples,
            separation,
            shuffled,
            ..
        }
        | ProblemSpec::LogisticNonconvex {
            dim,
            n_samples,
            separation,
            shuffled,
            ..
        } => {
            let kind = match config.problem {
                ProblemSpec::LogisticL2 { rho, .. } => ObjectiveKind::LogisticL2 { rho },
                ProblemSpec::LogisticNonconvex { omega, .. } => ObjectiveKind::LogisticNonconvex { omega },
                ProblemSpec::Quadratic { .. } => unreachable!(),
            };
            let data = generate_synthetic(*n_samples, *dim, *separation, &mut rng)?;
            let partition = if *shuffled {
                partition_shuffled(&data, n, &mut rng)?
            } else {
                partition_heterogeneous(&data, n)?
            };
            ObjectiveSuite::logistic(kind, &data, &partition)?
        }
    };
    let p = oracle.dim();
    let scale = config.init_scale;
    let x0 = match config.init {
        InitMode::Common => {
            let v: Vec<f64> = (0..p).map(|_| scale * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect();
            DMatrix::from_fn(n, p, |_, q| v[q])
        }
        InitMode::Random => {
            let vals: Vec<f64> = (0..n * p).map(|_| scale * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect();
            DMatrix::from_row_slice(n, p, &vals)
        }
    };
    let spectra = Spectra::of(&mixing)?;
    let mixing = Arc::new(mixing);
    let lca = mixing.psd_certified().then(|| LcaOperator::new(mixing.clone())).transpose()?;
    Ok(Setup {
        graph,
        mixing,
        lca,
        oracle,
        x0,
        spectra,
    })
}

/// Estimated constants with the config's overrides applied.
pub fn resolve_constants(config: &ExperimentConfig, setup: &Setup) -> Result<ProblemConstants> {
    let x_bar0 = crate::optimizers::mean_row(&setup.x0);
    let mut c = estimate_constants(&setup.oracle, &x_bar0, config.batch_size)?;
    let o = &config.overrides;
    c.l = o.l.unwrap_or(c.l);
    c.c = o.c.unwrap_or(c.c);
    c.sigma = o.sigma.unwrap_or(c.sigma);
    c.sigma_star_f = o.sigma_star_f.unwrap_or(c.sigma_star_f);
    c.mu = o.mu.or(c.mu);
    c.delta0 = o.delta0.unwrap_or(c.delta0);
    Ok(c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedAlgorithm {
    pub spec: super::config::AlgorithmSpec,
    /// Parameters actually used by the runs.
    pub hp: HyperParams,
    pub selection: Option<ParamSelection>,
}

pub fn resolve_algorithms(
    config: &ExperimentConfig,
    setup: &Setup,
    constants: Option<&ProblemConstants>,
) -> Result<Vec<ResolvedAlgorithm>> {
    let rho = setup.spectra.rho_tilde_w;
    config
        .algorithms
        .iter()
        .map(|spec| {
            let (hp, selection) = match spec.mode {
                ParamMode::Manual { alpha, beta } => {
                    let b = beta.resolve(config.n, setup.spectra.lambda)?;
                    (HyperParams::new(alpha, b, config.iterations)?, None)
                }
                ParamMode::TheoremNcvx | ParamMode::TheoremPl => {
                    let c = constants.ok_or_else(|| LabError::Params("theorem modes need problem constants".into()))?;
                    let sel = if spec.mode == ParamMode::TheoremNcvx {
                        select_params_ncvx(c, config.iterations, config.n, rho)?
                    } else {
                        select_params_pl(c, config.iterations, config.n, rho, 2.0 * c.delta0)?
                    };
                    let hp = if config.theorem_clamp { sel.hp } else { sel.unclamped() };
                    (hp, Some(sel))
                }
            };
            if spec.variant.uses_lca() && setup.lca.is_none() {
                return Err(LabError::Mixing(format!(
                    "{} needs a PSD mixing matrix; set lazy = true",
                    spec.label
                )));
            }
            Ok(ResolvedAlgorithm {
                spec: spec.clone(),
                hp,
                selection,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrialStatus {
    Completed,
    Diverged { k: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub rows: Vec<MetricsRow>,
    pub status: TrialStatus,
}

fn is_recorded(k: usize, config: &ExperimentConfig) -> bool {
    k.is_multiple_of(config.record_every) || k == config.iterations
}

/// Runs one trial of one algorithm; divergence ends the trial early.
pub fn run_trial(config: &ExperimentConfig, setup: &Setup, alg: &ResolvedAlgorithm, trial: usize) -> Result<TrialResult> {
    let variant = alg.spec.variant;
    let ctx = StepContext {
        mixing: (!variant.is_centralized()).then_some(setup.mixing.as_ref()),
        lca: if variant.uses_lca() { setup.lca.as_ref() } else { None },
        oracle: &setup.oracle,
        hp: alg.hp,
        sampling: Sampling::with_replacement(config.batch_size),
        hb_momentum: config.hb_momentum,
    };
    let mut streams = AgentStreams::new(config.seed.wrapping_add(trial as u64), config.n);
    let mut recorder = MetricsRecorder::new(variant, &alg.hp, &setup.oracle, None);
    let mut rows = Vec::new();
    let diverged = |rows, k| {
        Ok(TrialResult {
            rows,
            status: TrialStatus::Diverged { k },
        })
    };
    let mut state = match init_state(variant, &setup.x0, &ctx, &mut streams) {
        Ok(s) => s,
        Err(LabError::Divergence { k }) => return diverged(rows, k),
        Err(e) => return Err(e),
    };
    loop {
        recorder.observe(&state)?;
        if is_recorded(state.k, config) {
            let row = recorder.row(&state, &setup.oracle)?;
            if row.values().iter().flatten().any(|v| !v.is_finite()) {
                return diverged(rows, state.k);
            }
            rows.push(row);
        }
        if state.k == config.iterations {
            break;
        }
        state = match step(&state, &ctx, &mut streams) {
            Ok(s) => s,
            Err(LabError::Divergence { k }) => return diverged(rows, k),
            Err(e) => return Err(e),
        };
    }
    Ok(TrialResult {
        rows,
        status: TrialStatus::Completed,
    })
}

/// Pointwise mean and sample standard deviation across completed trials.
#[derive(Debug, Clone, PartialEq)]
pub struct Curves {
    pub label: String,
    pub ks: Vec<usize>,
    pub mean: Vec<[Option<f64>; 8]>,
    pub std: Vec<[Option<f64>; 8]>,
    pub trials_used: usize,
}

impl Curves {
    /// Trial-mean curve of `metric`, absent if any recorded value is.
    pub fn mean_curve(&self, metric: &str) -> Option<Vec<f64>> {
        let idx = MetricsRow::NAMES.iter().position(|n| *n == metric)?;
        self.mean.iter().map(|row| row[idx]).collect()
    }
}

/// Reduces trials in order; `None` when no trial completed.
pub fn aggregate(label: &str, results: &[TrialResult]) -> Option<Curves> {
    let done: Vec<&TrialResult> = results.iter().filter(|r| r.status == TrialStatus::Completed).collect();
    let first = done.first()?;
    let m = done.len() as f64;
    let ks: Vec<usize> = first.rows.iter().map(|r| r.k).collect();
    let mut mean = Vec::with_capacity(ks.len());
    let mut std = Vec::with_capacity(ks.len());
    for (idx, _) in ks.iter().enumerate() {
        let columns: Vec<[Option<f64>; 8]> = done.iter().map(|r| r.rows[idx].values()).collect();
        let mut mu = [None; 8];
        let mut sd = [None; 8];
        for j in 0..8 {
            let vals: Option<Vec<f64>> = columns.iter().map(|c| c[j]).collect();
            if let Some(vals) = vals {
                let avg = vals.iter().sum::<f64>() / m;
                let var = if done.len() > 1 {
                    vals.iter().map(|v| (v - avg).powi(2)).sum::<f64>() / (m - 1.0)
                } else {
                    0.0
                };
                mu[j] = Some(avg);
                sd[j] = Some(var.sqrt());
            }
        }
        mean.push(mu);
        std.push(sd);
    }
    Some(Curves {
        label: label.to_string(),
        ks,
        mean,
        std,
        trials_used: done.len(),
    })
}

/// CSV with `k` then `<metric>_mean,<metric>_std` per metric; `NA` marks absent values.
pub fn write_csv(curves: &Curves, path: &Path) -> Result<()> {
    if curves.ks.is_empty() {
        return Err(LabError::Domain("refusing to write empty curves".into()));
    }
    let mut out = BufWriter::new(fs::File::create(path)?);
    let mut header = vec!["k".to_string()];
    for name in MetricsRow::NAMES {
        header.push(format!("{name}_mean"));
        header.push(format!("{name}_std"));
    }
    writeln!(out, "{}", header.join(","))?;
    let cell = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), fmt_f64);
    for (i, k) in curves.ks.iter().enumerate() {
        let mut line = k.to_string();
        for j in 0..8 {
            line.push(',');
            line.push_str(&cell(curves.mean[i][j]));
            line.push(',');
            line.push_str(&cell(curves.std[i][j]));
        }
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmRun {
    pub resolved: ResolvedAlgorithm,
    pub curves: Option<Curves>,
    pub trials: Vec<TrialResult>,
}

impl AlgorithmRun {
    /// `(trial, k)` for every diverged trial.
    pub fn divergences(&self) -> Vec<(usize, usize)> {
        self.trials
            .iter()
            .enumerate()
            .filter_map(|(t, r)| match r.status {
                TrialStatus::Diverged { k } => Some((t, k)),
                TrialStatus::Completed => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransientRecord {
    pub label: String,
    pub reference: String,
    pub metric: String,
    pub factor: f64,
    /// Iteration at which the suffix condition starts to hold.
    pub k_hat: Option<usize>,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    pub spectra: Spectra,
    pub constants: Option<ProblemConstants>,
    pub runs: Vec<AlgorithmRun>,
    pub transient: Vec<TransientRecord>,
}

impl ExperimentOutput {
    pub fn run(&self, label: &str) -> Option<&AlgorithmRun> {
        self.runs.iter().find(|r| r.resolved.spec.label == label)
    }
}

fn transient_curve(curves: &Curves, metric: TransientMetric) -> Option<Vec<f64>> {
    match metric {
        TransientMetric::AvgGap => curves.mean_curve("avg_gap"),
        TransientMetric::GradNormSq => curves.mean_curve("grad_norm_sq"),
        TransientMetric::GradNormSqMin => curves.mean_curve("grad_norm_sq").map(|c| running_min(&c)),
    }
}

fn transient_records(config: &ExperimentConfig, runs: &[AlgorithmRun]) -> Result<Vec<TransientRecord>> {
    let Some(spec) = &config.transient else {
        return Ok(Vec::new());
    };
    let reference = runs
        .iter()
        .find(|r| r.resolved.spec.label == spec.reference)
        .and_then(|r| r.curves.as_ref());
    let mut out = Vec::new();
    for run in runs.iter().filter(|r| r.resolved.spec.label != spec.reference) {
        let mut record = TransientRecord {
            label: run.resolved.spec.label.clone(),
            reference: spec.reference.clone(),
            metric: spec.metric.name().into(),
            factor: spec.factor,
            k_hat: None,
            valid: false,
        };
        let pair = reference
            .zip(run.curves.as_ref())
            .and_then(|(r, d)| Some((transient_curve(d, spec.metric)?, transient_curve(r, spec.metric)?, d)));
        if let Some((dec, cen, curves)) = pair {
            let est = estimate_transient(&dec, &cen, spec.factor)?;
            record.valid = est.valid;
            record.k_hat = est.valid.then(|| curves.ks[est.k_hat]);
        }
        out.push(record);
    }
    Ok(out)
}

/// Runs every algorithm for every trial; `parallel = false` keeps everything
/// on the calling thread.
pub fn run_experiment(config: &ExperimentConfig, parallel: bool) -> Result<ExperimentOutput> {
    let setup = prepare(config)?;
    let needs_constants = config
        .algorithms
        .iter()
        .any(|a| !matches!(a.mode, ParamMode::Manual { .. }));
    let constants = needs_constants.then(|| resolve_constants(config, &setup)).transpose()?;
    let resolved = resolve_algorithms(config, &setup, constants.as_ref())?;
    let jobs: Vec<(usize, usize)> = (0..resolved.len())
        .flat_map(|a| (0..config.trials).map(move |t| (a, t)))
        .collect();
    let work = |&(a, t): &(usize, usize)| run_trial(config, &setup, &resolved[a], t);
    let results: Vec<Result<TrialResult>> = if parallel {
        jobs.par_iter().map(work).collect()
    } else {
        jobs.iter().map(work).collect()
    };
    let mut results = results.into_iter();
    let mut runs = Vec::with_capacity(resolved.len());
    for alg in resolved {
        let trials: Vec<TrialResult> = results.by_ref().take(config.trials).collect::<Result<_>>()?;
        let curves = aggregate(&alg.spec.label, &trials);
        runs.push(AlgorithmRun {
            resolved: alg,
            curves,
            trials,
        });
    }
    let transient = transient_records(config, &runs)?;
    Ok(ExperimentOutput {
        config: config.clone(),
        spectra: setup.spectra,
        constants,
        runs,
        transient,
    })
}

fn manifest(output: &ExperimentOutput) -> serde_json::Value {
    let c = &output.config;
    let algorithms: Vec<serde_json::Value> = output
        .runs
        .iter()
        .map(|run| {
            let r = &run.resolved;
            let divergences: Vec<serde_json::Value> =
                run.divergences().into_iter().map(|(t, k)| json!({"trial": t, "k": k})).collect();
            json!({
                "label": r.spec.label,
                "variant": r.spec.variant.name(),
                "mode": match r.spec.mode {
                    ParamMode::Manual { .. } => "manual",
                    ParamMode::TheoremNcvx => "theorem_ncvx",
                    ParamMode::TheoremPl => "theorem_pl",
                },
                "alpha": r.hp.alpha,
                "beta": r.hp.beta,
                "formula_alpha": r.selection.as_ref().map(|s| s.formula_alpha),
                "active_bound": r.selection.as_ref().map(|s| s.active_bound.clone()),
                "bounds": r.selection.as_ref().map(|s| s.bounds.clone()),
                "completed_trials": run.curves.as_ref().map_or(0, |cv| cv.trials_used),
                "diverged_trials": divergences.len(),
                "divergences": divergences,
                "csv": run.curves.as_ref().map(|_| format!("{}.csv", r.spec.label)),
            })
        })
        .collect();
    json!({
        "schema_version": super::config::SCHEMA_VERSION,
        "seed": c.seed,
        "trials": c.trials,
        "iterations": c.iterations,
        "record_every": c.record_every,
        "batch_size": c.batch_size,
        "theorem_clamp": c.theorem_clamp,
        "spectra": output.spectra,
        "constants": output.constants,
        "algorithms": algorithms,
        "transient": output.transient,
    })
}

/// Writes `<label>.csv` per algorithm with completed trials, plus `manifest.json`.
pub fn write_outputs(output: &ExperimentOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for run in &output.runs {
        if let Some(curves) = &run.curves {
            let path = dir.join(format!("{}.csv", curves.label));
            write_csv(curves, &path)?;
            written.push(path);
        }
    }
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest(output)).map_err(|e| LabError::Parse(e.to_string()))?;
    fs::write(&path, text + "\n")?;
    written.push(path);
    Ok(written)
}

/// Re-runs the config for each `n`, writing into `<dir>/n_<n>/`.
pub fn sweep(config: &ExperimentConfig, ns: &[usize], dir: &Path, parallel: bool) -> Result<Vec<PathBuf>> {
    if matches!(config.topology, GraphKind::Grid2d { .. } | GraphKind::Custom(_)) {
        return Err(LabError::Config(vec!["sweep: n cannot vary for grid2d or custom topologies".into()]));
    }
    if ns.is_empty() {
        return Err(LabError::Config(vec!["sweep: empty list of n".into()]));
    }
    let mut dirs = Vec::new();
    for &n in ns {
        let mut c = config.clone();
        c.n = n;
        let text = super::config::serialize_config(&c);
        let c = super::config::parse_config(&text)?;
        let sub = dir.join(format!("n_{n}"));
        let output = run_experiment(&c, parallel)?;
        write_outputs(&output, &sub)?;
        dirs.push(sub);
    }
    Ok(dirs)
}
