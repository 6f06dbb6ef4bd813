//! Config-driven experiment runner: parsing, trials, aggregation, CSV and
//! manifest output, sweeps.

mod config;
mod run;

pub use config::{
    parse_config, serialize_config, AlgorithmSpec, BetaSpec, ConstantOverrides, ExperimentConfig, InitMode,
    ParamMode, ProblemSpec, TransientMetric, TransientSpec, SCHEMA_VERSION,
};
pub use run::{
    aggregate, prepare, resolve_algorithms, resolve_constants, run_experiment, run_trial, spectra_for, sweep,
    write_csv, write_outputs, AlgorithmRun, Curves, ExperimentOutput, ResolvedAlgorithm, Setup, Spectra,
    TransientRecord, TrialResult, TrialStatus, SETUP_STREAM,
};
