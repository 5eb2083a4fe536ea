//! Exponential projective Euler scheme (EPES) and an Euler–Maruyama reference.
//!
//! One EPES step from `t_k` to `t_k + Δt`, with every coefficient frozen at
//! the state at `t_k`:
//!
//! * voltage: exact solution of the linear ODE `dV = (R − A V) dt`, where
//!   `A`, `R` collect the ionic conductances at the frozen gates and the
//!   mean-field coupling at the frozen population means;
//! * gates: exact Gaussian transition of the Ornstein–Uhlenbeck process
//!   `dx = (ρ(1 − x) − ζx) dt + σ_x dW` with `ρ, ζ` at the frozen voltage and
//!   `σ_x` at the frozen `(V, x)`;
//! * projection: the Gaussian sample is clamped to `[0, 1]`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::kinetics::diffusion_from_rates;
use crate::network::{CouplingSpec, CouplingTerms, NetworkState, NeuronState, PopulationParams};
use crate::rng::GateNoise;

/// `A·Δt` below which the voltage step uses its first-order expansion.
const VOLTAGE_TAYLOR_CUTOFF: f64 = 1e-8;

/// Networks at least this large advance their neurons in parallel.
const PARALLEL_NEURONS: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    Epes,
    EulerMaruyama,
}

/// Time grid `t_k = k·dt`, `k = 0..=M`, with `M·dt = t_end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepConfig {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default)]
    pub scheme: Scheme,
}

impl StepConfig {
    pub fn new(dt: f64, t_end: f64, scheme: Scheme) -> Self {
        StepConfig { dt, t_end, scheme }
    }

    pub fn epes(dt: f64, t_end: f64) -> Self {
        StepConfig::new(dt, t_end, Scheme::Epes)
    }

    /// Number of steps `M`; errors unless `t_end` is a positive integer multiple of `dt`.
    pub fn steps(&self) -> Result<u64> {
        let mut errors = Vec::new();
        self.validate("step", &mut errors);
        match errors.is_empty() {
            true => Ok((self.t_end / self.dt).round() as u64),
            false => config(errors.join("; ")),
        }
    }

    #[inline]
    pub fn time(&self, k: u64) -> f64 {
        k as f64 * self.dt
    }

    pub fn validate(&self, path: &str, errors: &mut Vec<String>) {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            errors.push(format!("{path}.dt: must be finite and > 0, got {}", self.dt));
            return;
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            errors.push(format!("{path}.t_end: must be finite and > 0, got {}", self.t_end));
            return;
        }
        let ratio = self.t_end / self.dt;
        let m = ratio.round();
        if m < 1.0 || (m * self.dt - self.t_end).abs() > 1e-9 * self.t_end {
            errors.push(format!(
                "{path}: t_end = {} is not a positive integer multiple of dt = {} (grid t_k = k*dt must end at t_end)",
                self.t_end, self.dt
            ));
        }
    }
}

/// Exact solution at `t + dt` of `dV/dt = R − A·V` from `V(t) = v`.
pub fn exact_voltage_step(v: f64, a: f64, r: f64, dt: f64) -> Result<f64> {
    if a < 0.0 || a.is_nan() {
        return Err(Error::Contract(format!(
            "voltage decay rate must be >= 0, got {a}"
        )));
    }
    Ok(voltage_step(v, a, r, dt))
}

#[inline]
fn voltage_step(v: f64, a: f64, r: f64, dt: f64) -> f64 {
    let ad = a * dt;
    if ad < VOLTAGE_TAYLOR_CUTOFF {
        // (1 − e^{−x})/x = 1 − x/2 + O(x²)
        v + (r - a * v) * dt * (1.0 - 0.5 * ad)
    } else {
        v + (r - a * v) * (-(-ad).exp_m1() / a)
    }
}

/// Conditional mean and variance of a frozen-coefficient OU gate step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuMoments {
    pub mean: f64,
    pub variance: f64,
}

/// Moments of `x(t + dt)` for `dx = (ρ(1 − x) − ζx) dt + σ_x dW`, `x(t) = x`.
#[inline]
pub fn ou_gate_moments(x: f64, rho: f64, zeta: f64, sigma_x: f64, dt: f64) -> OuMoments {
    let kappa = rho + zeta;
    // 1 − e^{−κΔ} and 1 − e^{−2κΔ}
    let relax = -(-kappa * dt).exp_m1();
    let relax2 = relax * (2.0 - relax);
    OuMoments {
        mean: x + (rho / kappa - x) * relax,
        variance: sigma_x * sigma_x * relax2 / (2.0 * kappa),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Projection {
    Inside,
    Low,
    High,
}

/// Samples `x̌ = mean + sqrt(variance)·z` and projects it onto `[0, 1]`.
#[inline]
pub fn ou_gate_step(moments: OuMoments, z: f64) -> (f64, f64, Projection) {
    let check = moments.mean + moments.variance.sqrt() * z;
    let (hat, projection) = project(check);
    (check, hat, projection)
}

#[inline]
fn project(x: f64) -> (f64, Projection) {
    if x < 0.0 {
        (0.0, Projection::Low)
    } else if x > 1.0 {
        (1.0, Projection::High)
    } else {
        (x, Projection::Inside)
    }
}

/// Projection counts, per gate in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StepReport {
    pub low: [u64; 4],
    pub high: [u64; 4],
}

impl StepReport {
    #[inline]
    fn record(&mut self, gate: usize, projection: Projection) {
        match projection {
            Projection::Inside => {}
            Projection::Low => self.low[gate] += 1,
            Projection::High => self.high[gate] += 1,
        }
    }

    pub fn merge(&mut self, other: &StepReport) {
        for g in 0..4 {
            self.low[g] += other.low[g];
            self.high[g] += other.high[g];
        }
    }

    pub fn total_low(&self) -> u64 {
        self.low.iter().sum()
    }

    pub fn total_high(&self) -> u64 {
        self.high.iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.total_low() + self.total_high()
    }
}

/// Population parameters plus the coupling between populations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    pub populations: Vec<PopulationParams>,
    pub coupling: CouplingSpec,
}

impl NetworkModel {
    /// A single population.
    pub fn single(params: PopulationParams, coupling: CouplingSpec) -> Self {
        NetworkModel {
            populations: vec![params],
            coupling,
        }
    }

    pub fn validate(&self, errors: &mut Vec<String>) {
        for (p, params) in self.populations.iter().enumerate() {
            params.validate(&format!("populations[{p}].params"), errors);
        }
        self.coupling
            .validate(self.populations.len(), "coupling", errors);
    }

    fn check_state(&self, state: &NetworkState) -> Result<()> {
        if state.populations() != self.populations.len() {
            return config(format!(
                "state spans {} populations, model defines {}",
                state.populations(),
                self.populations.len()
            ));
        }
        Ok(())
    }
}

/// Advances one neuron by one step given its frozen coupling terms.
#[inline]
fn advance_neuron(
    s: &mut NeuronState,
    params: &PopulationParams,
    coupling: CouplingTerms,
    dt: f64,
    scheme: Scheme,
    z: [f64; 4],
    report: &mut StepReport,
) {
    let (a_ion, r_ion) = params.ionic_linear(s.m, s.n, s.h);
    let a = a_ion + coupling.a;
    let r = r_ion + coupling.r;
    let rates = params.rates.rates(s.v);
    let gates = s.gates();
    let mut next = [0.0; 4];
    let v_next = match scheme {
        Scheme::Epes => voltage_step(s.v, a, r, dt),
        Scheme::EulerMaruyama => s.v + (r - a * s.v) * dt,
    };
    for g in 0..4 {
        let x = gates[g];
        let (rho, zeta) = rates[g];
        let sigma_x = if params.noise.sigma == 0.0 {
            0.0
        } else {
            diffusion_from_rates(rho, zeta, x, &params.noise)
        };
        let check = match scheme {
            Scheme::Epes => ou_gate_step(ou_gate_moments(x, rho, zeta, sigma_x, dt), z[g]).0,
            Scheme::EulerMaruyama => {
                x + (rho * (1.0 - x) - zeta * x) * dt + sigma_x * dt.sqrt() * z[g]
            }
        };
        let (hat, projection) = project(check);
        report.record(g, projection);
        next[g] = hat;
    }
    *s = NeuronState::from_parts(v_next, next);
}

/// Advances `state` in place from grid step `step` to `step + 1`, using the
/// supplied per-population means for the coupling.
pub fn advance_with_means<G: GateNoise>(
    state: &mut NetworkState,
    model: &NetworkModel,
    means: &[NeuronState],
    dt: f64,
    scheme: Scheme,
    step: u64,
    noise: &G,
) -> Result<StepReport> {
    model.check_state(state)?;
    if means.len() != model.populations.len() {
        return config(format!(
            "{} population means supplied for {} populations",
            means.len(),
            model.populations.len()
        ));
    }
    let terms: Vec<CouplingTerms> = (0..model.populations.len())
        .map(|alpha| model.coupling.terms_unchecked(alpha, means))
        .collect();
    let kernel = |(i, (s, &pop)): (usize, (&mut NeuronState, &usize)), report: &mut StepReport| {
        let z = noise.normals(i, step);
        advance_neuron(s, &model.populations[pop], terms[pop], dt, scheme, z, report);
    };
    let report = if state.neurons.len() >= PARALLEL_NEURONS {
        state
            .neurons
            .par_iter_mut()
            .zip(state.pop_of.par_iter())
            .enumerate()
            .fold(StepReport::default, |mut report, item| {
                kernel(item, &mut report);
                report
            })
            .reduce(StepReport::default, |mut a, b| {
                a.merge(&b);
                a
            })
    } else {
        let mut report = StepReport::default();
        for item in state.neurons.iter_mut().zip(state.pop_of.iter()).enumerate() {
            kernel(item, &mut report);
        }
        report
    };
    state.t = (step + 1) as f64 * dt;
    Ok(report)
}

/// Advances `state` in place by one step using its own empirical means.
pub fn advance<G: GateNoise>(
    state: &mut NetworkState,
    model: &NetworkModel,
    dt: f64,
    scheme: Scheme,
    step: u64,
    noise: &G,
) -> Result<StepReport> {
    let means = state.population_means();
    advance_with_means(state, model, &means.per_population, dt, scheme, step, noise)
}

/// One EPES step of the whole network.
pub fn network_step<G: GateNoise>(
    state: &NetworkState,
    model: &NetworkModel,
    dt: f64,
    step: u64,
    noise: &G,
) -> Result<(NetworkState, StepReport)> {
    let mut next = state.clone();
    let report = advance(&mut next, model, dt, Scheme::Epes, step, noise)?;
    Ok((next, report))
}

/// One Euler–Maruyama step with the same draws and the same projection.
pub fn euler_maruyama_step<G: GateNoise>(
    state: &NetworkState,
    model: &NetworkModel,
    dt: f64,
    step: u64,
    noise: &G,
) -> Result<(NetworkState, StepReport)> {
    let mut next = state.clone();
    let report = advance(&mut next, model, dt, Scheme::EulerMaruyama, step, noise)?;
    Ok((next, report))
}

/// Outcome of [`simulate`].
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub final_state: NetworkState,
    pub steps: u64,
    pub projections: StepReport,
}

/// Integrates over the grid of `cfg`, calling `observe(k, state)` at every
/// grid point `k = 0..=M` (including the initial state).
pub fn simulate<G, F>(
    model: &NetworkModel,
    mut state: NetworkState,
    cfg: &StepConfig,
    noise: &G,
    mut observe: F,
) -> Result<RunOutcome>
where
    G: GateNoise,
    F: FnMut(u64, &NetworkState) -> Result<()>,
{
    let steps = cfg.steps()?;
    model.check_state(&state)?;
    state.t = 0.0;
    observe(0, &state)?;
    let mut projections = StepReport::default();
    for k in 0..steps {
        let report = advance(&mut state, model, cfg.dt, cfg.scheme, k, noise)?;
        projections.merge(&report);
        observe(k + 1, &state)?;
    }
    Ok(RunOutcome {
        final_state: state,
        steps,
        projections,
    })
}
