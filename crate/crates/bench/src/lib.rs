//! Shared fixtures for the benchmarks.

use hhsync_core::experiment::preset;
use hhsync_core::rng::StreamRng;
use hhsync_core::{CouplingSpec, InitialLaw, NetworkModel, NetworkState, PopulationParams};

/// Electrically coupled network at the standard input current.
pub fn standard_model(sigma: f64) -> NetworkModel {
    NetworkModel::single(
        PopulationParams::hodgkin_huxley(25.0, sigma),
        CouplingSpec::single(1.0, 0.0, 0.0),
    )
}

/// Uniform-box draw of `n` neurons for replica 0 of `seed`.
pub fn random_state(model: &NetworkModel, n: usize, seed: u64) -> NetworkState {
    InitialLaw::default()
        .sample(model, &[n], &StreamRng::new(seed), 0)
        .expect("valid layout")
}

/// A short version of a named preset (`t_end` replaced, few replicas).
pub fn short_preset(name: &str, t_end: f64, replicas: u32) -> hhsync_core::experiment::RunConfig {
    let mut cfg = preset(name).expect("known preset");
    cfg.step.t_end = t_end;
    cfg.replicas = replicas;
    cfg
}
