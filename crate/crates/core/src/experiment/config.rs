use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::epes::{NetworkModel, StepConfig};
use crate::initial::InitialLaw;
use crate::network::{CouplingSpec, PopulationParams};

/// Version of the configuration and manifest layout.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationConfig {
    pub name: String,
    pub size: usize,
    pub params: PopulationParams,
}

/// What a run computes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    /// Noiseless single-neuron ODE (population 0 parameters), one trajectory
    /// per input current.
    SingleNeuron { currents: Vec<f64> },
    /// Network trajectories per replica, plus replica-averaged statistics.
    Trajectory,
    /// Replica-averaged statistics only.
    Ensemble,
    /// Coupled-path strong-error study; `replicas` is the number of paths.
    Convergence {
        coarse_dt: f64,
        levels: usize,
        reference_ratio: u64,
    },
    /// Propagation-of-chaos ladder against an `n_ref` surrogate.
    Chaos {
        n_ref: usize,
        ladder: Vec<usize>,
        ladder_replicas: Vec<u32>,
    },
}

/// Cartesian sweep over network size and noise level (one population only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub sizes: Vec<usize>,
    pub sigmas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    /// Keep every `stride`-th grid point in stored series.
    #[serde(default = "default_stride")]
    pub stride: u64,
    /// Neurons written to trajectory files (the first ones); all if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_neurons: Option<usize>,
    /// Window for plateau estimates; `[t_end/2, t_end]` if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail: Option<[f64; 2]>,
}

fn default_stride() -> u64 {
    1
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            dir: None,
            stride: 1,
            max_neurons: None,
            tail: None,
        }
    }
}

fn default_replicas() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub scenario: String,
    pub experiment: Experiment,
    pub populations: Vec<PopulationConfig>,
    pub coupling: CouplingSpec,
    pub step: StepConfig,
    #[serde(default)]
    pub initial: InitialLaw,
    #[serde(default = "default_replicas")]
    pub replicas: u32,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Grid>,
    #[serde(default)]
    pub output: OutputSpec,
}

/// One point of a grid sweep (or the configured network when there is no grid).
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub label: String,
    pub model: NetworkModel,
    pub sizes: Vec<usize>,
}

impl RunConfig {
    pub fn model(&self) -> NetworkModel {
        NetworkModel {
            populations: self.populations.iter().map(|p| p.params.clone()).collect(),
            coupling: self.coupling.clone(),
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.populations.iter().map(|p| p.size).collect()
    }

    pub fn tail(&self) -> (f64, f64) {
        match self.output.tail {
            Some([a, b]) => (a, b),
            None => (0.5 * self.step.t_end, self.step.t_end),
        }
    }

    /// Grid cells in sweep order (sizes outer, noise inner).
    pub fn cells(&self) -> Vec<Cell> {
        let base = self.model();
        match &self.grid {
            None => vec![Cell {
                label: "main".into(),
                model: base,
                sizes: self.sizes(),
            }],
            Some(grid) => grid
                .sizes
                .iter()
                .flat_map(|&n| grid.sigmas.iter().map(move |&s| (n, s)))
                .map(|(n, sigma)| {
                    let mut model = base.clone();
                    model.populations[0].noise.sigma = sigma;
                    Cell {
                        label: format!("N{n}_sigma{sigma}"),
                        model,
                        sizes: vec![n],
                    }
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configs always serialize")
    }

    /// Every invariant violation, each prefixed by its path in the document.
    pub fn violations(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            errs.push(format!(
                "schema_version: expected {SCHEMA_VERSION}, got {}",
                self.schema_version
            ));
        }
        if self.scenario.trim().is_empty() {
            errs.push("scenario: must not be empty".into());
        }
        if self.populations.is_empty() {
            errs.push("populations: at least one population is required".into());
        }
        let mut names = HashSet::new();
        for (i, p) in self.populations.iter().enumerate() {
            if p.name.trim().is_empty() {
                errs.push(format!("populations[{i}].name: must not be empty"));
            } else if !names.insert(p.name.as_str()) {
                errs.push(format!("populations[{i}].name: duplicate name {:?}", p.name));
            }
            if p.size == 0 {
                errs.push(format!("populations[{i}].size: must be >= 1"));
            }
        }
        self.model().validate(&mut errs);
        self.step.validate("step", &mut errs);
        if self.replicas == 0 {
            errs.push("replicas: must be >= 1".into());
        }
        if self.output.stride == 0 {
            errs.push("output.stride: must be >= 1".into());
        }
        if self.output.max_neurons == Some(0) {
            errs.push("output.max_neurons: must be >= 1".into());
        }
        if let Some([a, b]) = self.output.tail {
            if !(a.is_finite() && b.is_finite() && 0.0 <= a && a < b && b <= self.step.t_end) {
                errs.push(format!(
                    "output.tail: need 0 <= from < to <= step.t_end = {}, got [{a}, {b}]",
                    self.step.t_end
                ));
            }
        }
        match &self.grid {
            None => self.initial.validate(self.sizes().iter().sum(), "initial", &mut errs),
            Some(grid) => {
                if self.populations.len() != 1 {
                    errs.push("grid: sweeps need exactly one population".into());
                }
                if grid.sizes.is_empty() || grid.sigmas.is_empty() {
                    errs.push("grid: sizes and sigmas must both be non-empty".into());
                }
                for (i, &n) in grid.sizes.iter().enumerate() {
                    if n == 0 {
                        errs.push(format!("grid.sizes[{i}]: must be >= 1"));
                    }
                    self.initial.validate(n, "initial", &mut errs);
                }
                for (i, s) in grid.sigmas.iter().enumerate() {
                    if !(s.is_finite() && *s >= 0.0) {
                        errs.push(format!("grid.sigmas[{i}]: must be finite and >= 0, got {s}"));
                    }
                }
                if !matches!(self.experiment, Experiment::Trajectory | Experiment::Ensemble) {
                    errs.push("grid: only trajectory and ensemble experiments sweep a grid".into());
                }
            }
        }
        self.experiment_violations(&mut errs);
        errs.dedup();
        errs
    }

    fn experiment_violations(&self, errs: &mut Vec<String>) {
        match &self.experiment {
            Experiment::SingleNeuron { currents } => {
                if currents.is_empty() {
                    errs.push("experiment.currents: at least one current is required".into());
                }
                for (i, c) in currents.iter().enumerate() {
                    if !c.is_finite() {
                        errs.push(format!("experiment.currents[{i}]: must be finite, got {c}"));
                    }
                }
            }
            Experiment::Trajectory | Experiment::Ensemble => {}
            Experiment::Convergence {
                coarse_dt,
                levels,
                reference_ratio,
            } => {
                if *levels < 3 {
                    errs.push(format!("experiment.levels: need at least 3 step sizes, got {levels}"));
                } else if *levels < 64 {
                    let finest = 1u64 << (levels - 1);
                    if *reference_ratio <= finest || reference_ratio % finest != 0 {
                        errs.push(format!(
                            "experiment.reference_ratio: must be a multiple of, and larger than, {finest}, got {reference_ratio}"
                        ));
                    } else {
                        let reference = StepConfig::new(
                            coarse_dt / *reference_ratio as f64,
                            self.step.t_end,
                            self.step.scheme,
                        );
                        reference.validate("experiment.coarse_dt / reference_ratio", errs);
                    }
                } else {
                    errs.push(format!("experiment.levels: too many levels ({levels})"));
                }
                StepConfig::new(*coarse_dt, self.step.t_end, self.step.scheme)
                    .validate("experiment.coarse_dt", errs);
            }
            Experiment::Chaos {
                n_ref,
                ladder,
                ladder_replicas,
            } => {
                if self.populations.len() != 1 {
                    errs.push("populations: chaos studies need exactly one population".into());
                }
                if ladder.len() < 3 {
                    errs.push(format!(
                        "experiment.ladder: need at least 3 network sizes, got {}",
                        ladder.len()
                    ));
                }
                if ladder_replicas.len() != ladder.len() {
                    errs.push(format!(
                        "experiment.ladder_replicas: expected {} entries (one per ladder size), got {}",
                        ladder.len(),
                        ladder_replicas.len()
                    ));
                }
                for (i, &n) in ladder.iter().enumerate() {
                    if n == 0 || n > *n_ref {
                        errs.push(format!(
                            "experiment.ladder[{i}]: must lie in [1, n_ref = {n_ref}], got {n}"
                        ));
                    }
                }
                if ladder_replicas.iter().any(|&r| r == 0) {
                    errs.push("experiment.ladder_replicas: every entry must be >= 1".into());
                }
                self.initial.validate(*n_ref, "initial", errs);
            }
        }
    }
}

/// Parses and validates a configuration document. Structural problems
/// (malformed JSON, unknown or missing keys, wrong types) are reported
/// first and alone; otherwise every invariant violation is listed.
pub fn validate_config(raw: &str) -> Result<RunConfig, Vec<String>> {
    let config: RunConfig = serde_json::from_str(raw).map_err(|e| vec![format!("structure: {e}")])?;
    let errs = config.violations();
    if errs.is_empty() {
        Ok(config)
    } else {
        Err(errs)
    }
}
