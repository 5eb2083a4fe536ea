//! Propagation of chaos: the nonlinear limit process driven by tabulated
//! mean-field curves, particle/limit pairs sharing initial draws and noise,
//! and rate fits in the network size.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::wasserstein2;
use crate::epes::{advance, advance_with_means, simulate, NetworkModel, StepConfig};
use crate::error::{input, Error, Result};
use crate::initial::InitialLaw;
use crate::network::{NetworkState, NeuronState};
use crate::numeric::{fit_log_log, LineFit};
use crate::reference::time_matches;
use crate::rng::{sample_indices, ReplicaNoise, StreamRng, REFERENCE_REPLICA};

/// Tabulated `t ↦ (E[V_t], E[y_t])` per population, linearly interpolated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldCurves {
    pub t: Vec<f64>,
    /// `mean_v[p][k]`: mean voltage of population `p` at `t[k]`.
    pub mean_v: Vec<Vec<f64>>,
    pub mean_y: Vec<Vec<f64>>,
    /// Size of the run the curves were estimated from.
    pub n_ref: usize,
    pub seed: u64,
}

impl MeanFieldCurves {
    pub fn populations(&self) -> usize {
        self.mean_v.len()
    }

    pub fn covers(&self, t_end: f64) -> bool {
        match (self.t.first(), self.t.last()) {
            (Some(&a), Some(&b)) => time_matches(a, 0.0) && (b >= t_end || time_matches(b, t_end)),
            _ => false,
        }
    }

    /// Interpolated means at `t`, as states whose `v` and `y` carry the curve
    /// values (the other gates do not enter the coupling and are zero).
    pub fn at(&self, t: f64) -> Result<Vec<NeuronState>> {
        let n = self.t.len();
        if n == 0 {
            return input("empty mean-field curves");
        }
        let (lo, w) = if n == 1 || time_matches(t, self.t[0]) {
            (0, 0.0)
        } else if time_matches(t, self.t[n - 1]) {
            (n - 1, 0.0)
        } else if t < self.t[0] || t > self.t[n - 1] {
            return Err(Error::GridMismatch(format!(
                "time {t} outside the curve grid [{}, {}]",
                self.t[0],
                self.t[n - 1]
            )));
        } else {
            let k = self.t.partition_point(|&s| s <= t).saturating_sub(1).min(n - 2);
            let span = self.t[k + 1] - self.t[k];
            let w = (t - self.t[k]) / span;
            // snap to a grid point when `t` is one up to round-off
            if time_matches(t, self.t[k]) {
                (k, 0.0)
            } else if time_matches(t, self.t[k + 1]) {
                (k + 1, 0.0)
            } else {
                (k, w)
            }
        };
        let value = |series: &Vec<f64>| {
            if w == 0.0 {
                series[lo]
            } else {
                series[lo] + w * (series[lo + 1] - series[lo])
            }
        };
        Ok(self
            .mean_v
            .iter()
            .zip(&self.mean_y)
            .map(|(v, y)| NeuronState::new(value(v), 0.0, 0.0, 0.0, value(y)))
            .collect())
    }

    /// CSV with columns `t,meanV,meanY` (suffixed `_p` beyond one population).
    pub fn to_csv(&self) -> String {
        let p = self.populations();
        let mut header = vec!["t".to_string()];
        for a in 0..p {
            let suffix = if p == 1 { String::new() } else { format!("_{a}") };
            header.push(format!("meanV{suffix}"));
            header.push(format!("meanY{suffix}"));
        }
        let mut out = header.join(",") + "\n";
        for (k, t) in self.t.iter().enumerate() {
            out.push_str(&t.to_string());
            for a in 0..p {
                out.push_str(&format!(",{},{}", self.mean_v[a][k], self.mean_y[a][k]));
            }
            out.push('\n');
        }
        out
    }
}

/// Reference run used as a surrogate for the limit flow.
#[derive(Debug, Clone)]
pub struct ReferenceRun {
    pub curves: MeanFieldCurves,
    /// Full reference states at the requested snapshot times.
    pub snapshots: Vec<(f64, Vec<NeuronState>)>,
}

/// Runs the network at `sizes_ref` on the reference replica slot of `seed` and
/// tabulates its population means at every grid time.
pub fn build_mean_field(
    model: &NetworkModel,
    sizes_ref: &[usize],
    initial: &InitialLaw,
    cfg: &StepConfig,
    seed: u64,
    snapshot_times: &[f64],
) -> Result<ReferenceRun> {
    let start = initial.sample(model, sizes_ref, &StreamRng::new(seed), REFERENCE_REPLICA)?;
    let noise = ReplicaNoise::new(seed, REFERENCE_REPLICA);
    let p = model.populations.len();
    let mut curves = MeanFieldCurves {
        t: Vec::new(),
        mean_v: vec![Vec::new(); p],
        mean_y: vec![Vec::new(); p],
        n_ref: sizes_ref.iter().sum(),
        seed,
    };
    let mut snapshots = Vec::new();
    simulate(model, start, cfg, &noise, |k, state| {
        let t = cfg.time(k);
        let means = state.population_means();
        curves.t.push(t);
        for (a, m) in means.per_population.iter().enumerate() {
            curves.mean_v[a].push(m.v);
            curves.mean_y[a].push(m.y);
        }
        if snapshot_times.iter().any(|&s| time_matches(s, t)) {
            snapshots.push((t, state.neurons.clone()));
        }
        Ok(())
    })?;
    Ok(ReferenceRun { curves, snapshots })
}

/// Where the limit copies read their coupling means from.
pub trait MeanDriver: Sync {
    fn means(&self, t: f64, particles: &NetworkState) -> Result<Vec<NeuronState>>;

    /// Checks that the driver can supply means over `[0, t_end]`.
    fn check_horizon(&self, _t_end: f64) -> Result<()> {
        Ok(())
    }
}

impl MeanDriver for MeanFieldCurves {
    fn means(&self, t: f64, _particles: &NetworkState) -> Result<Vec<NeuronState>> {
        self.at(t)
    }

    fn check_horizon(&self, t_end: f64) -> Result<()> {
        if self.covers(t_end) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "curves cover [{:?}, {:?}], run needs [0, {t_end}]",
                self.t.first(),
                self.t.last()
            )))
        }
    }
}

/// Drives the copies with the particle system's own empirical means; the
/// copies then reproduce the particle system exactly.
#[derive(Debug, Clone, Copy)]
pub struct ParticleMeans;

impl MeanDriver for ParticleMeans {
    fn means(&self, _t: f64, particles: &NetworkState) -> Result<Vec<NeuronState>> {
        Ok(particles.population_means().per_population)
    }
}

/// Outcome of one particle/limit pair.
#[derive(Debug, Clone)]
pub struct CoupledRun {
    pub particles: NetworkState,
    pub limit: NetworkState,
    /// `sup_t |X_i(t) − X̃_i(t)|²` per neuron.
    pub sup_sq_error: Vec<f64>,
    /// Average of `sup_sq_error` over neurons.
    pub mean_error: f64,
    /// Particle states at the requested snapshot times.
    pub snapshots: Vec<(f64, Vec<NeuronState>)>,
}

/// Simulates the particle system of replica `replica` together with limit
/// copies that share its initial draws and noise but feel `driver`'s means.
#[allow(clippy::too_many_arguments)]
pub fn coupled_copies<D: MeanDriver>(
    model: &NetworkModel,
    sizes: &[usize],
    initial: &InitialLaw,
    cfg: &StepConfig,
    driver: &D,
    seed: u64,
    replica: u32,
    snapshot_times: &[f64],
) -> Result<CoupledRun> {
    let steps = cfg.steps()?;
    driver.check_horizon(cfg.t_end)?;
    let start = initial.sample(model, sizes, &StreamRng::new(seed), replica)?;
    let noise = ReplicaNoise::new(seed, replica);
    let mut particles = start.clone();
    let mut limit = start;
    let mut sup = vec![0.0f64; particles.len()];
    let mut snapshots = Vec::new();
    if snapshot_times.iter().any(|&s| time_matches(s, 0.0)) {
        snapshots.push((0.0, particles.neurons.clone()));
    }
    for k in 0..steps {
        let t = cfg.time(k);
        let means = driver.means(t, &particles)?;
        advance(&mut particles, model, cfg.dt, cfg.scheme, k, &noise)?;
        advance_with_means(&mut limit, model, &means, cfg.dt, cfg.scheme, k, &noise)?;
        for ((s, a), b) in sup.iter_mut().zip(&particles.neurons).zip(&limit.neurons) {
            *s = s.max(a.distance_sq(b));
        }
        let t_next = cfg.time(k + 1);
        if snapshot_times.iter().any(|&s| time_matches(s, t_next)) {
            snapshots.push((t_next, particles.neurons.clone()));
        }
    }
    let mean_error = sup.iter().sum::<f64>() / sup.len() as f64;
    Ok(CoupledRun {
        particles,
        limit,
        sup_sq_error: sup,
        mean_error,
        snapshots,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChaosConfig {
    /// Single-population model.
    pub model: NetworkModel,
    pub initial: InitialLaw,
    pub step: StepConfig,
    pub n_ref: usize,
    pub ladder: Vec<usize>,
    /// Replicas per ladder entry.
    pub replicas: Vec<u32>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChaosLevel {
    pub n: usize,
    pub replicas: u32,
    /// Replica mean of the per-neuron sup-squared coupling error.
    pub coupled_error: f64,
    pub coupled_error_stderr: f64,
    /// Replica mean of `W₂²` to an equal-size reference subsample, per time.
    pub w2_squared: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChaosReport {
    pub times: Vec<f64>,
    pub levels: Vec<ChaosLevel>,
    /// Log-log slope of the coupled error against `N`.
    pub coupled_fit: Option<LineFit>,
    /// Log-log slope of `W₂²` against `N`, per time.
    pub w2_fits: Vec<Option<LineFit>>,
}

/// `W₂` time points `T/4, T/2, T`.
pub fn chaos_times(t_end: f64) -> Vec<f64> {
    vec![t_end / 4.0, t_end / 2.0, t_end]
}

/// Log-log rate fit; `None` for degenerate (non-positive or constant) data.
pub fn fit_rate(ns: &[usize], errors: &[f64]) -> Option<LineFit> {
    if errors.windows(2).all(|w| w[0] == w[1]) {
        return None;
    }
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    fit_log_log(&xs, errors)
}

pub fn chaos_rate_fit(cfg: &ChaosConfig) -> Result<ChaosReport> {
    if cfg.ladder.len() < 3 {
        return Err(Error::Study(format!(
            "need at least 3 network sizes, got {}",
            cfg.ladder.len()
        )));
    }
    if cfg.replicas.len() != cfg.ladder.len() || cfg.replicas.iter().any(|&r| r == 0) {
        return Err(Error::Study("need a positive replica count per ladder entry".into()));
    }
    if cfg.model.populations.len() != 1 {
        return Err(Error::Study("chaos study expects a single population".into()));
    }
    if cfg.ladder.iter().any(|&n| n == 0 || n > cfg.n_ref) {
        return Err(Error::Study(format!(
            "ladder sizes must lie in 1..={} (the reference size)",
            cfg.n_ref
        )));
    }
    let times = chaos_times(cfg.step.t_end);
    let reference = build_mean_field(&cfg.model, &[cfg.n_ref], &cfg.initial, &cfg.step, cfg.seed, &times)?;
    if reference.snapshots.len() != times.len() {
        return Err(Error::GridMismatch(format!(
            "reference grid does not contain all of {times:?}"
        )));
    }
    let aux = StreamRng::new(cfg.seed);
    let mut levels = Vec::with_capacity(cfg.ladder.len());
    for (&n, &reps) in cfg.ladder.iter().zip(&cfg.replicas) {
        let per_replica: Vec<(f64, Vec<f64>)> = (0..reps)
            .into_par_iter()
            .map(|r| -> Result<(f64, Vec<f64>)> {
                let run = coupled_copies(
                    &cfg.model,
                    &[n],
                    &cfg.initial,
                    &cfg.step,
                    &reference.curves,
                    cfg.seed,
                    r,
                    &times,
                )?;
                let mut w2 = Vec::with_capacity(times.len());
                for (j, ((_, particles), (_, ref_states))) in
                    run.snapshots.iter().zip(&reference.snapshots).enumerate()
                {
                    let tag = (n as u32).wrapping_mul(8).wrapping_add(j as u32);
                    let idx = sample_indices(&aux, r, tag, ref_states.len(), n);
                    let sub: Vec<NeuronState> = idx.iter().map(|&i| ref_states[i]).collect();
                    w2.push(wasserstein2(particles, &sub)?.squared);
                }
                Ok((run.mean_error, w2))
            })
            .collect::<Result<_>>()?;
        let rf = f64::from(reps);
        let mean = per_replica.iter().map(|(e, _)| e).sum::<f64>() / rf;
        let var = per_replica.iter().map(|(e, _)| (e - mean).powi(2)).sum::<f64>() / (rf - 1.0).max(1.0);
        let w2_squared = (0..times.len())
            .map(|j| per_replica.iter().map(|(_, w)| w[j]).sum::<f64>() / rf)
            .collect();
        levels.push(ChaosLevel {
            n,
            replicas: reps,
            coupled_error: mean,
            coupled_error_stderr: (var / rf).sqrt(),
            w2_squared,
        });
    }
    let coupled: Vec<f64> = levels.iter().map(|l| l.coupled_error).collect();
    let coupled_fit = fit_rate(&cfg.ladder, &coupled);
    let w2_fits = (0..times.len())
        .map(|j| {
            let w: Vec<f64> = levels.iter().map(|l| l.w2_squared[j]).collect();
            fit_rate(&cfg.ladder, &w)
        })
        .collect();
    Ok(ChaosReport {
        times,
        levels,
        coupled_fit,
        w2_fits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{CouplingSpec, PopulationParams};

    fn model(j_e: f64, sigma: f64) -> NetworkModel {
        NetworkModel::single(
            PopulationParams::hodgkin_huxley(25.0, sigma),
            CouplingSpec::single(j_e, 0.0, 0.0),
        )
    }

    #[test]
    fn curve_interpolation() {
        let curves = MeanFieldCurves {
            t: vec![0.0, 1.0, 2.0],
            mean_v: vec![vec![0.0, 10.0, 30.0]],
            mean_y: vec![vec![0.0, 0.5, 1.0]],
            n_ref: 1,
            seed: 0,
        };
        assert_eq!(curves.at(1.5).unwrap()[0].v, 20.0);
        assert_eq!(curves.at(2.0).unwrap()[0].y, 1.0);
        assert_eq!(curves.at(0.0).unwrap()[0].v, 0.0);
        assert!(matches!(curves.at(2.5), Err(Error::GridMismatch(_))));
        assert!(curves.covers(2.0) && !curves.covers(3.0));
        assert_eq!(curves.to_csv().lines().next(), Some("t,meanV,meanY"));
    }

    #[test]
    fn uncoupled_copies_are_identical() {
        let m = model(0.0, 0.5);
        let cfg = StepConfig::epes(0.01, 5.0);
        let reference = build_mean_field(&m, &[64], &InitialLaw::default(), &cfg, 4, &[]).unwrap();
        let run = coupled_copies(&m, &[16], &InitialLaw::default(), &cfg, &reference.curves, 4, 0, &[]).unwrap();
        assert_eq!(run.mean_error, 0.0);
    }

    #[test]
    fn particle_means_reproduce_the_particle_system() {
        let m = model(1.0, 1.0);
        let cfg = StepConfig::epes(0.01, 5.0);
        let run = coupled_copies(&m, &[12], &InitialLaw::default(), &cfg, &ParticleMeans, 9, 2, &[]).unwrap();
        assert_eq!(run.particles.neurons, run.limit.neurons);
        assert_eq!(run.mean_error, 0.0);
    }

    #[test]
    fn short_curves_are_rejected() {
        let m = model(1.0, 0.5);
        let reference = build_mean_field(&m, &[8], &InitialLaw::default(), &StepConfig::epes(0.01, 1.0), 1, &[]).unwrap();
        let err = coupled_copies(&m, &[4], &InitialLaw::default(), &StepConfig::epes(0.01, 2.0), &reference.curves, 1, 0, &[]);
        assert!(matches!(err, Err(Error::GridMismatch(_))));
    }

    #[test]
    fn rate_fit_oracles() {
        let ns = [16usize, 64, 256, 1024];
        let inv: Vec<f64> = ns.iter().map(|&n| 3.0 / n as f64).collect();
        assert!((fit_rate(&ns, &inv).unwrap().slope + 1.0).abs() < 0.01);
        let two_fifths: Vec<f64> = ns.iter().map(|&n| (n as f64).powf(-0.4)).collect();
        assert!((fit_rate(&ns, &two_fifths).unwrap().slope + 0.4).abs() < 0.01);
        assert!(fit_rate(&ns, &[1.0; 4]).is_none());
    }

    #[test]
    fn short_ladder_is_a_study_error() {
        let cfg = ChaosConfig {
            model: model(1.0, 0.5),
            initial: InitialLaw::default(),
            step: StepConfig::epes(0.01, 1.0),
            n_ref: 64,
            ladder: vec![4, 8],
            replicas: vec![1, 1],
            seed: 0,
        };
        assert!(matches!(chaos_rate_fit(&cfg), Err(Error::Study(_))));
    }
}
