//! Built-in scenarios. Desk-scale defaults: `dt = 0.01 ms`, `T = 400 ms`,
//! 500 replicas wherever replicas are averaged.

use super::config::{Experiment, Grid, OutputSpec, PopulationConfig, RunConfig, SCHEMA_VERSION};
use crate::epes::StepConfig;
use crate::initial::InitialLaw;
use crate::network::{CouplingSpec, PopulationParams};

pub const DEFAULT_DT: f64 = 0.01;
pub const DEFAULT_T_END: f64 = 400.0;
pub const DEFAULT_REPLICAS: u32 = 500;
/// Input current of every network scenario.
pub const NETWORK_CURRENT: f64 = 25.0;

pub const PRESET_NAMES: [&str; 10] = [
    "fig2",
    "fig4",
    "fig5",
    "fig6a",
    "fig6b",
    "fig6c",
    "fig7",
    "fig8",
    "convergence",
    "chaos",
];

fn population(name: &str, size: usize, i_ext: f64, sigma: f64) -> PopulationConfig {
    PopulationConfig {
        name: name.into(),
        size,
        params: PopulationParams::hodgkin_huxley(i_ext, sigma),
    }
}

fn base(scenario: &str, experiment: Experiment, populations: Vec<PopulationConfig>, coupling: CouplingSpec) -> RunConfig {
    RunConfig {
        schema_version: SCHEMA_VERSION,
        scenario: scenario.into(),
        experiment,
        populations,
        coupling,
        step: StepConfig::epes(DEFAULT_DT, DEFAULT_T_END),
        initial: InitialLaw::default(),
        replicas: 1,
        seed: 20_240_601,
        grid: None,
        output: OutputSpec {
            stride: 10,
            ..OutputSpec::default()
        },
    }
}

fn two_populations(scenario: &str, a: (f64, f64), b: (f64, f64), j_e: [[f64; 2]; 2]) -> RunConfig {
    base(
        scenario,
        Experiment::Trajectory,
        vec![population("a", 50, a.0, a.1), population("b", 50, b.0, b.1)],
        CouplingSpec {
            j_e: j_e.iter().map(|r| r.to_vec()).collect(),
            j_ch: vec![vec![0.0; 2]; 2],
            v_rev: vec![vec![0.0; 2]; 2],
        },
    )
}

fn chemical(scenario: &str, v_rev: f64) -> RunConfig {
    let mut cfg = base(
        scenario,
        Experiment::Trajectory,
        vec![population("network", 100, NETWORK_CURRENT, 0.5)],
        CouplingSpec::single(0.0, 1.0, v_rev),
    );
    cfg.step.t_end = 900.0;
    cfg
}

/// Resolved configuration of a named preset.
pub fn preset(name: &str) -> Option<RunConfig> {
    let electrical = || CouplingSpec::single(1.0, 0.0, 0.0);
    let cfg = match name {
        "fig2" => {
            let mut cfg = base(
                name,
                Experiment::SingleNeuron {
                    currents: vec![0.0, 10.0, 100.0, 200.0],
                },
                vec![population("neuron", 1, 0.0, 0.0)],
                CouplingSpec::single(0.0, 0.0, 0.0),
            );
            cfg.initial = InitialLaw::Rest {
                v: crate::initial::REST_VOLTAGE,
            };
            cfg
        }
        "fig4" => {
            let mut cfg = base(
                name,
                Experiment::Trajectory,
                vec![population("network", 10, NETWORK_CURRENT, 0.0)],
                electrical(),
            );
            cfg.grid = Some(Grid {
                sizes: vec![10, 100, 1000, 10_000],
                sigmas: vec![0.0, 0.5, 1.0],
            });
            cfg.output.max_neurons = Some(20);
            cfg
        }
        "fig5" => {
            let mut cfg = base(
                name,
                Experiment::Ensemble,
                vec![population("network", 10, NETWORK_CURRENT, 0.5)],
                electrical(),
            );
            cfg.grid = Some(Grid {
                sizes: vec![10, 100, 1000],
                sigmas: vec![0.1, 0.5, 1.0],
            });
            cfg.replicas = DEFAULT_REPLICAS;
            cfg.step.t_end = 100.0;
            cfg
        }
        "fig6a" => two_populations(name, (25.0, 0.5), (15.0, 1.0), [[1.0, 1.0], [1.0, 1.0]]),
        "fig6b" => two_populations(name, (25.0, 0.5), (25.0, 0.5), [[1.0, 0.1], [0.1, 1.0]]),
        "fig6c" => two_populations(name, (25.0, 0.5), (25.0, 0.5), [[0.1, 0.05], [0.05, 0.1]]),
        "fig7" => chemical(name, -75.0),
        "fig8" => chemical(name, 0.0),
        "convergence" => {
            let mut cfg = base(
                name,
                Experiment::Convergence {
                    coarse_dt: 0.02,
                    levels: 4,
                    reference_ratio: 256,
                },
                vec![population("network", 10, NETWORK_CURRENT, 1.0)],
                electrical(),
            );
            cfg.step = StepConfig::epes(0.02, 20.0);
            cfg.replicas = 200;
            cfg
        }
        "chaos" => {
            let mut cfg = base(
                name,
                Experiment::Chaos {
                    n_ref: 4096,
                    ladder: vec![16, 64, 256, 1024],
                    ladder_replicas: vec![256, 64, 32, 16],
                },
                vec![population("network", 4096, NETWORK_CURRENT, 0.5)],
                electrical(),
            );
            cfg.step.t_end = 50.0;
            cfg
        }
        _ => return None,
    };
    Some(cfg)
}
