//! Stochastic Hodgkin–Huxley networks with mean-field coupling: kinetics,
//! network drift, the exponential projective Euler integrator, reference
//! dynamics, diagnostics, propagation-of-chaos studies and experiment runs.

pub mod chaos;
pub mod convergence;
pub mod diagnostics;
pub mod epes;
pub mod error;
pub mod experiment;
pub mod initial;
pub mod kinetics;
pub mod network;
pub mod numeric;
pub mod reference;
pub mod rng;

pub use epes::{NetworkModel, Scheme, StepConfig, StepReport};
pub use error::{Error, Result};
pub use initial::InitialLaw;
pub use kinetics::{GateKind, NoiseSpec, RateForm, RateSpec};
pub use network::{CouplingSpec, NetworkState, NeuronState, PopulationParams};
pub use rng::{GateNoise, ReplicaNoise, StreamRng};
