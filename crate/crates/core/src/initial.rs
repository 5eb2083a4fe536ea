//! Initial laws for network runs.

use serde::{Deserialize, Serialize};

use crate::epes::NetworkModel;
use crate::error::{config, Result};
use crate::network::{NetworkState, NeuronState};
use crate::rng::{StreamRng, LANE_INITIAL};

/// Conventional resting potential (mV) used when none is given.
pub const REST_VOLTAGE: f64 = -65.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialLaw {
    /// I.i.d. uniform on `[v_min, v_max] × [0, 1]⁴`.
    UniformBox {
        #[serde(default = "default_v_min")]
        v_min: f64,
        #[serde(default = "default_v_max")]
        v_max: f64,
    },
    /// Every neuron at `v` with gates at their clamped equilibrium.
    Rest {
        #[serde(default = "default_rest")]
        v: f64,
    },
    /// Explicit states; a single state is broadcast to every neuron.
    Explicit { states: Vec<NeuronState> },
}

fn default_v_min() -> f64 {
    -100.0
}
fn default_v_max() -> f64 {
    100.0
}
fn default_rest() -> f64 {
    REST_VOLTAGE
}

impl Default for InitialLaw {
    fn default() -> Self {
        InitialLaw::UniformBox {
            v_min: default_v_min(),
            v_max: default_v_max(),
        }
    }
}

impl InitialLaw {
    pub fn validate(&self, total: usize, path: &str, errors: &mut Vec<String>) {
        match self {
            InitialLaw::UniformBox { v_min, v_max } => {
                if !(v_min.is_finite() && v_max.is_finite() && v_min <= v_max) {
                    errors.push(format!(
                        "{path}: need finite v_min <= v_max, got [{v_min}, {v_max}]"
                    ));
                }
            }
            InitialLaw::Rest { v } => {
                if !v.is_finite() {
                    errors.push(format!("{path}.v: must be finite, got {v}"));
                }
            }
            InitialLaw::Explicit { states } => {
                if states.len() != 1 && states.len() != total {
                    errors.push(format!(
                        "{path}.states: expected 1 or {total} states, got {}",
                        states.len()
                    ));
                }
                for (i, s) in states.iter().enumerate() {
                    if !s.v.is_finite() || !s.gates_in_unit_interval() {
                        errors.push(format!(
                            "{path}.states[{i}]: voltage must be finite and gates in [0, 1]"
                        ));
                    }
                }
            }
        }
    }

    /// Largest initial `|V|` this law can produce.
    pub fn v0_max(&self) -> f64 {
        match self {
            InitialLaw::UniformBox { v_min, v_max } => v_min.abs().max(v_max.abs()),
            InitialLaw::Rest { v } => v.abs(),
            InitialLaw::Explicit { states } => states.iter().fold(0.0, |m, s| m.max(s.v.abs())),
        }
    }

    /// Draws the initial state of replica `replica`. Neuron `i` only reads
    /// its own stream, so the first `k` neurons do not depend on the total size.
    pub fn sample(
        &self,
        model: &NetworkModel,
        sizes: &[usize],
        rng: &StreamRng,
        replica: u32,
    ) -> Result<NetworkState> {
        if sizes.len() != model.populations.len() {
            return config(format!(
                "{} population sizes given for {} populations",
                sizes.len(),
                model.populations.len()
            ));
        }
        let total: usize = sizes.iter().sum();
        let mut errors = Vec::new();
        self.validate(total, "initial", &mut errors);
        if !errors.is_empty() {
            return config(errors.join("; "));
        }
        let pop_of = crate::network::layout(sizes)?;
        let neurons = pop_of
            .iter()
            .enumerate()
            .map(|(i, &pop)| match self {
                InitialLaw::UniformBox { v_min, v_max } => {
                    uniform_box_draw(rng, replica, i as u32, *v_min, *v_max)
                }
                InitialLaw::Rest { v } => NeuronState::resting(*v, &model.populations[pop].rates),
                InitialLaw::Explicit { states } => states[if states.len() == 1 { 0 } else { i }],
            })
            .collect();
        NetworkState::new(neurons, sizes)
    }
}

/// One uniform draw on `[v_min, v_max] × [0, 1]⁴` from the initial-condition lanes.
pub fn uniform_box_draw(rng: &StreamRng, replica: u32, neuron: u32, v_min: f64, v_max: f64) -> NeuronState {
    let [a, b] = rng.uniform_pair(replica, neuron, 0, LANE_INITIAL);
    let [c, d] = rng.uniform_pair(replica, neuron, 0, LANE_INITIAL + 1);
    let [e, _] = rng.uniform_pair(replica, neuron, 0, LANE_INITIAL + 2);
    // uniforms lie in (0, 1]; reflect to [0, 1) for the voltage so both ends are reachable only in the limit
    NeuronState::new(v_min + (v_max - v_min) * (1.0 - a), b, c, d, e)
}
