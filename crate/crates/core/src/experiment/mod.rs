//! Run configuration, built-in scenarios, replica orchestration and output
//! files with content digests.

mod config;
mod presets;
mod run;

pub use config::{validate_config, Cell, Experiment, Grid, OutputSpec, PopulationConfig, RunConfig, SCHEMA_VERSION};
pub use presets::{preset, DEFAULT_DT, DEFAULT_REPLICAS, DEFAULT_T_END, NETWORK_CURRENT, PRESET_NAMES};
pub use run::{
    config_from_document, run_ensemble, run_scenario, verify_outputs, EnsembleOutcome, FileDigest, InjectedFailure,
    RunManifest, RunOptions, RunStatus, CODE_VERSION, DECAY_FLOOR, MANIFEST_FILE,
};
