//! Deterministic reference dynamics: the single-neuron ODE and the
//! synchronized ("hat") ODE launched from a network's mean state.
//!
//! The hat ODE has voltage drift `F(V) − J_Ch·y·(V − V_rev)` and the usual gate
//! drift. Electrical coupling is absent because it vanishes on a synchronized
//! state.

use serde::{Deserialize, Serialize};

use crate::epes::{advance, NetworkModel, Scheme};
use crate::error::{input, Error, Result};
use crate::network::{voltage_drift_f, CouplingSpec, NetworkState, NeuronState, PopulationParams};
use crate::rng::FixedNoise;

/// States on a uniform time grid.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub states: Vec<NeuronState>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn voltages(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.v).collect()
    }

    /// Index of the grid point equal to `t` (up to round-off), if any.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let dt = match self.t.len() {
            0 => return None,
            1 => return time_matches(self.t[0], t).then_some(0),
            _ => self.t[1] - self.t[0],
        };
        let k = ((t - self.t[0]) / dt).round();
        if k < 0.0 || k as usize >= self.t.len() {
            return None;
        }
        let k = k as usize;
        time_matches(self.t[k], t).then_some(k)
    }
}

pub(crate) fn time_matches(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Right-hand side of the uncoupled-plus-chemical ODE.
#[inline]
fn field(s: &NeuronState, params: &PopulationParams, j_ch: f64, v_rev: f64) -> NeuronState {
    let dv = voltage_drift_f(s.v, s.m, s.n, s.h, params) - j_ch * s.y * (s.v - v_rev);
    let rates = params.rates.rates(s.v);
    let g = s.gates();
    let mut dg = [0.0; 4];
    for k in 0..4 {
        let (rho, zeta) = rates[k];
        dg[k] = rho * (1.0 - g[k]) - zeta * g[k];
    }
    NeuronState::from_parts(dv, dg)
}

#[inline]
fn axpy(s: &NeuronState, a: f64, d: &NeuronState) -> NeuronState {
    NeuronState::new(s.v + a * d.v, s.m + a * d.m, s.n + a * d.n, s.h + a * d.h, s.y + a * d.y)
}

fn rk4_step(s: &NeuronState, params: &PopulationParams, j_ch: f64, v_rev: f64, dt: f64) -> NeuronState {
    let k1 = field(s, params, j_ch, v_rev);
    let k2 = field(&axpy(s, dt / 2.0, &k1), params, j_ch, v_rev);
    let k3 = field(&axpy(s, dt / 2.0, &k2), params, j_ch, v_rev);
    let k4 = field(&axpy(s, dt, &k3), params, j_ch, v_rev);
    let a = s.to_array();
    let [k1, k2, k3, k4] = [k1, k2, k3, k4].map(|k| k.to_array());
    let mut out = [0.0; 5];
    for c in 0..5 {
        out[c] = a[c] + dt / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
    }
    NeuronState::new(out[0], out[1], out[2], out[3], out[4])
}

fn grid_steps(duration: f64, dt: f64) -> Result<u64> {
    if !(dt.is_finite() && dt > 0.0 && duration.is_finite() && duration >= 0.0) {
        return input(format!("need dt > 0 and duration >= 0, got dt = {dt}, duration = {duration}"));
    }
    let m = (duration / dt).round();
    if (m * dt - duration).abs() > 1e-9 * duration.max(dt) {
        return input(format!("duration {duration} is not an integer multiple of dt {dt}"));
    }
    Ok(m as u64)
}

fn check_start(s: &NeuronState) -> Result<()> {
    if !s.v.is_finite() || !s.gates_in_unit_interval() {
        return input(format!("start state must have finite voltage and gates in [0, 1], got {s:?}"));
    }
    Ok(())
}

fn rk4_run(
    start: NeuronState,
    params: &PopulationParams,
    j_ch: f64,
    v_rev: f64,
    t0: f64,
    duration: f64,
    dt: f64,
) -> Result<Trajectory> {
    check_start(&start)?;
    let steps = grid_steps(duration, dt)?;
    let mut traj = Trajectory {
        t: Vec::with_capacity(steps as usize + 1),
        states: Vec::with_capacity(steps as usize + 1),
    };
    let mut s = start;
    traj.t.push(t0);
    traj.states.push(s);
    for k in 1..=steps {
        s = rk4_step(&s, params, j_ch, v_rev, dt);
        traj.t.push(t0 + k as f64 * dt);
        traj.states.push(s);
    }
    Ok(traj)
}

/// Classical RK4 solution of the uncoupled single-neuron ODE on `[0, t_end]`.
pub fn single_neuron_trajectory(
    params: &PopulationParams,
    start: NeuronState,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    rk4_run(start, params, 0.0, 0.0, 0.0, t_end, dt)
}

/// How the hat ODE is discretized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HatSolver {
    /// Classical fourth-order Runge–Kutta.
    Rk4,
    /// The noiseless network scheme applied to one synchronized neuron of
    /// `model` (population 0). The discrete map then coincides with the one a
    /// perfectly synchronized network follows, so a comparison against a
    /// network run isolates the loss of synchrony from time-step error.
    NetworkScheme { model: NetworkModel, scheme: Scheme },
}

/// Hat trajectory launched at `t1` from `launch`, on `[t1, t1 + duration]`.
pub fn hat_trajectory(
    launch: NeuronState,
    params: &PopulationParams,
    j_ch: f64,
    v_rev: f64,
    t1: f64,
    duration: f64,
    dt: f64,
    solver: &HatSolver,
) -> Result<Trajectory> {
    match solver {
        HatSolver::Rk4 => rk4_run(launch, params, j_ch, v_rev, t1, duration, dt),
        HatSolver::NetworkScheme { model, scheme } => {
            check_start(&launch)?;
            if model.populations.len() != 1 {
                return input("network-scheme hat solver needs a single-population model");
            }
            let mut model = model.clone();
            model.populations[0] = params.clone();
            model.populations[0].noise.sigma = 0.0;
            let j_e = model.coupling.j_e[0][0];
            model.coupling = CouplingSpec::single(j_e, j_ch, v_rev);
            let steps = grid_steps(duration, dt)?;
            let mut state = NetworkState::new(vec![launch], &[1])?;
            let mut traj = Trajectory::default();
            traj.t.push(t1);
            traj.states.push(launch);
            let silent = FixedNoise([0.0; 4]);
            for k in 0..steps {
                advance(&mut state, &model, dt, *scheme, k, &silent)?;
                traj.t.push(t1 + (k + 1) as f64 * dt);
                traj.states.push(state.neurons[0]);
            }
            Ok(traj)
        }
    }
}

/// Network states recorded on a uniform grid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NetworkTrace {
    pub t: Vec<f64>,
    pub frames: Vec<Vec<NeuronState>>,
}

impl NetworkTrace {
    pub fn push(&mut self, t: f64, state: &NetworkState) {
        self.t.push(t);
        self.frames.push(state.neurons.clone());
    }
}

/// `sup_{t ∈ window} (1/N) Σ_i |X_i(t) − X̂(t)|²`, averaged over replicas.
///
/// `runs[r]` is compared with `hats[r]`; every network grid time inside the
/// window must also be a hat grid time.
pub fn hat_deviation(runs: &[NetworkTrace], hats: &[Trajectory], window: (f64, f64)) -> Result<f64> {
    if runs.is_empty() || runs.len() != hats.len() {
        return input(format!(
            "need one hat trajectory per run, got {} runs and {} hats",
            runs.len(),
            hats.len()
        ));
    }
    let (lo, hi) = window;
    let mut total = 0.0;
    for (r, (run, hat)) in runs.iter().zip(hats).enumerate() {
        let mut sup: f64 = 0.0;
        let mut seen = 0usize;
        for (t, frame) in run.t.iter().zip(&run.frames) {
            if *t < lo && !time_matches(*t, lo) || *t > hi && !time_matches(*t, hi) {
                continue;
            }
            let k = hat.index_of(*t).ok_or_else(|| {
                Error::GridMismatch(format!("replica {r}: time {t} is not on the hat grid"))
            })?;
            if frame.is_empty() {
                return input(format!("replica {r}: empty frame at t = {t}"));
            }
            let target = hat.states[k];
            let mean = frame.iter().map(|s| s.distance_sq(&target)).sum::<f64>() / frame.len() as f64;
            sup = sup.max(mean);
            seen += 1;
        }
        if seen == 0 {
            return Err(Error::GridMismatch(format!(
                "replica {r}: no recorded time inside [{lo}, {hi}]"
            )));
        }
        total += sup;
    }
    Ok(total / runs.len() as f64)
}
