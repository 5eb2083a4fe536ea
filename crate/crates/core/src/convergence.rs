//! Strong-error self-convergence study with coupled Brownian paths, and the
//! projection-frequency summary it produces along the way.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::epes::{simulate, NetworkModel, Scheme, StepConfig};
use crate::error::{Error, Result};
use crate::initial::InitialLaw;
use crate::numeric::{fit_line, LineFit};
use crate::rng::{AggregatedNoise, ReplicaNoise, StreamRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrongErrorConfig {
    pub model: NetworkModel,
    pub sizes: Vec<usize>,
    pub initial: InitialLaw,
    pub t_end: f64,
    /// Coarsest step; level `l` uses `coarse_dt / 2^l`.
    pub coarse_dt: f64,
    pub levels: usize,
    /// Reference step is `coarse_dt / reference_ratio`.
    pub reference_ratio: u64,
    pub paths: u32,
    pub seed: u64,
    #[serde(default)]
    pub scheme: Scheme,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelResult {
    pub dt: f64,
    /// `sqrt(E[|X − X_ref|²])` at `t_end`, per neuron.
    pub rms_error: f64,
    pub mean_sq_error: f64,
    /// Standard error of `mean_sq_error` across paths.
    pub mean_sq_stderr: f64,
    pub projections: u64,
    pub gate_steps: u64,
}

impl LevelResult {
    pub fn projection_frequency(&self) -> f64 {
        self.projections as f64 / self.gate_steps as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrongErrorReport {
    pub levels: Vec<LevelResult>,
    pub reference_dt: f64,
    pub reference_projections: u64,
    pub reference_gate_steps: u64,
    /// Least-squares slope of `log2(rms_error)` against `log2(dt)`;
    /// absent for noiseless models or degenerate errors.
    pub order_fit: Option<LineFit>,
}

impl StrongErrorReport {
    pub fn order(&self) -> Option<f64> {
        self.order_fit.map(|f| f.slope)
    }

    /// Largest `c` with `frequency ≤ exp(−c/dt)` at every level; `None` if
    /// some level projects at every gate-step (no positive `c` exists).
    pub fn projection_rate_constant(&self) -> Option<f64> {
        projection_rate_constant(&self.levels)
    }
}

/// Largest `c` such that every level satisfies `frequency ≤ exp(−c/dt)`.
/// Levels without projections constrain nothing; with none at all, the
/// result is infinite.
pub fn projection_rate_constant(levels: &[LevelResult]) -> Option<f64> {
    let mut c = f64::INFINITY;
    for level in levels {
        let freq = level.projection_frequency();
        if freq >= 1.0 {
            return None;
        }
        if freq > 0.0 {
            c = c.min(-level.dt * freq.ln());
        }
    }
    Some(c)
}

struct PathResult {
    sq_errors: Vec<f64>,
    projections: Vec<u64>,
    reference_projections: u64,
}

pub fn strong_error_study(cfg: &StrongErrorConfig) -> Result<StrongErrorReport> {
    if cfg.levels < 3 {
        return Err(Error::Study(format!(
            "need at least 3 step sizes for an order fit, got {}",
            cfg.levels
        )));
    }
    if cfg.paths == 0 {
        return Err(Error::Study("need at least one path".into()));
    }
    let finest_ratio = 1u64 << (cfg.levels - 1);
    if cfg.reference_ratio <= finest_ratio || cfg.reference_ratio % finest_ratio != 0 {
        return Err(Error::Study(format!(
            "reference ratio {} must be a multiple of, and larger than, {finest_ratio}",
            cfg.reference_ratio
        )));
    }
    let mut errors = Vec::new();
    cfg.model.validate(&mut errors);
    if !errors.is_empty() {
        return Err(Error::Config(errors.join("; ")));
    }
    let reference_dt = cfg.coarse_dt / cfg.reference_ratio as f64;
    let reference_cfg = StepConfig::new(reference_dt, cfg.t_end, cfg.scheme);
    let level_cfgs: Vec<StepConfig> = (0..cfg.levels)
        .map(|l| StepConfig::new(cfg.coarse_dt / (1u64 << l) as f64, cfg.t_end, cfg.scheme))
        .collect();
    for c in level_cfgs.iter().chain(std::iter::once(&reference_cfg)) {
        c.steps()?;
    }
    let rng = StreamRng::new(cfg.seed);
    let run_path = |p: u32| -> Result<PathResult> {
        let start = cfg.initial.sample(&cfg.model, &cfg.sizes, &rng, p)?;
        let fine = ReplicaNoise::new(cfg.seed, p);
        let reference = simulate(&cfg.model, start.clone(), &reference_cfg, &fine, |_, _| Ok(()))?;
        let mut sq_errors = Vec::with_capacity(cfg.levels);
        let mut projections = Vec::with_capacity(cfg.levels);
        for (l, level_cfg) in level_cfgs.iter().enumerate() {
            let noise = AggregatedNoise {
                fine: &fine,
                ratio: cfg.reference_ratio >> l,
            };
            let out = simulate(&cfg.model, start.clone(), level_cfg, &noise, |_, _| Ok(()))?;
            let n = out.final_state.len() as f64;
            let sq = out
                .final_state
                .neurons
                .iter()
                .zip(&reference.final_state.neurons)
                .map(|(a, b)| a.distance_sq(b))
                .sum::<f64>()
                / n;
            sq_errors.push(sq);
            projections.push(out.projections.total());
        }
        Ok(PathResult {
            sq_errors,
            projections,
            reference_projections: reference.projections.total(),
        })
    };
    let paths: Vec<PathResult> = (0..cfg.paths)
        .into_par_iter()
        .map(run_path)
        .collect::<Result<_>>()?;

    let neurons: u64 = cfg.sizes.iter().sum::<usize>() as u64;
    let pf = cfg.paths as f64;
    let levels: Vec<LevelResult> = level_cfgs
        .iter()
        .enumerate()
        .map(|(l, c)| {
            let values: Vec<f64> = paths.iter().map(|p| p.sq_errors[l]).collect();
            let mean = values.iter().sum::<f64>() / pf;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (pf - 1.0).max(1.0);
            LevelResult {
                dt: c.dt,
                rms_error: mean.sqrt(),
                mean_sq_error: mean,
                mean_sq_stderr: (var / pf).sqrt(),
                projections: paths.iter().map(|p| p.projections[l]).sum(),
                gate_steps: 4 * neurons * c.steps().unwrap_or(0) * u64::from(cfg.paths),
            }
        })
        .collect();
    let noiseless = cfg.model.populations.iter().all(|p| p.noise.sigma == 0.0);
    let order_fit = if noiseless || levels.iter().any(|l| !(l.rms_error > 0.0)) {
        None
    } else {
        let xs: Vec<f64> = levels.iter().map(|l| l.dt.log2()).collect();
        let ys: Vec<f64> = levels.iter().map(|l| l.rms_error.log2()).collect();
        fit_line(&xs, &ys)
    };
    Ok(StrongErrorReport {
        levels,
        reference_dt,
        reference_projections: paths.iter().map(|p| p.reference_projections).sum(),
        reference_gate_steps: 4 * neurons * reference_cfg.steps()? * u64::from(cfg.paths),
        order_fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{CouplingSpec, PopulationParams};

    fn cfg(sigma: f64, levels: usize) -> StrongErrorConfig {
        StrongErrorConfig {
            model: NetworkModel::single(
                PopulationParams::hodgkin_huxley(25.0, sigma),
                CouplingSpec::single(1.0, 0.0, 0.0),
            ),
            sizes: vec![3],
            initial: InitialLaw::default(),
            t_end: 1.0,
            coarse_dt: 0.02,
            levels,
            reference_ratio: 32,
            paths: 4,
            seed: 1,
            scheme: Scheme::Epes,
        }
    }

    #[test]
    fn too_few_levels() {
        assert!(matches!(strong_error_study(&cfg(1.0, 2)), Err(Error::Study(_))));
    }

    #[test]
    fn noiseless_study_skips_the_fit() {
        let report = strong_error_study(&cfg(0.0, 3)).unwrap();
        assert!(report.order_fit.is_none());
        assert_eq!(report.levels.len(), 3);
        assert!(report.levels.iter().all(|l| l.projections == 0));
    }

    #[test]
    fn rate_constant_from_frequencies() {
        let level = |dt: f64, projections: u64| LevelResult {
            dt,
            rms_error: 1.0,
            mean_sq_error: 1.0,
            mean_sq_stderr: 0.0,
            projections,
            gate_steps: 1000,
        };
        let c = projection_rate_constant(&[level(0.02, 10), level(0.01, 1), level(0.005, 0)]).unwrap();
        assert!((c - (0.02 * (100.0f64).ln()).min(0.01 * (1000.0f64).ln())).abs() < 1e-15);
        assert_eq!(projection_rate_constant(&[level(0.01, 0)]), Some(f64::INFINITY));
        assert_eq!(projection_rate_constant(&[level(0.01, 1000)]), None);
    }
}
