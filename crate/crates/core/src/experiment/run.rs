use std::fmt::Write as _;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::config::{validate_config, Cell, Experiment, RunConfig, SCHEMA_VERSION};
use crate::chaos::{chaos_rate_fit, ChaosConfig};
use crate::convergence::{strong_error_study, StrongErrorConfig};
use crate::diagnostics::{
    detect_spikes, dissipation_curves, isi_cv, log_decay_fit, plateau_and_rate, EnsembleStats,
    ReplicaSeries, SpikeDetector, SpikeTrain, REFRACTORY_MS, SPIKE_THRESHOLD_MV,
};
use crate::epes::{simulate, StepReport};
use crate::error::{Error, Result};
use crate::reference::single_neuron_trajectory;
use crate::rng::{ReplicaNoise, StreamRng};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// Relative floor that ends the segment used for the log-variance fit.
pub const DECAY_FLOOR: f64 = 1e-20;

/// Makes a replica panic on its first `attempts` attempts (testing hook for
/// the retry path).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InjectedFailure {
    pub replica: u32,
    pub attempts: u32,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    pub overwrite: bool,
    pub inject_failure: Option<InjectedFailure>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub code_version: String,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub config: RunConfig,
    /// Output files relative to the run directory, sorted by path.
    pub files: Vec<FileDigest>,
    pub wall_clock_seconds: f64,
    /// Grid steps per trajectory.
    pub steps: u64,
    /// Single-neuron updates performed over the whole run.
    pub neuron_steps: u64,
    /// Gate projections onto `[0, 1]` over the whole run.
    pub projections: u64,
    pub workers: usize,
}

impl RunManifest {
    pub fn from_json(raw: &str) -> Result<Self> {
        serde_json::from_str(raw).map_err(|e| Error::Input(format!("manifest: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifests always serialize")
    }
}

/// Accepts either a configuration or a manifest (whose embedded
/// configuration is returned), validated in full.
pub fn config_from_document(raw: &str) -> std::result::Result<RunConfig, Vec<String>> {
    let value: Value = serde_json::from_str(raw).map_err(|e| vec![format!("structure: {e}")])?;
    match value.as_object() {
        Some(obj) if obj.contains_key("files") && obj.contains_key("config") => {
            validate_config(&obj["config"].to_string())
        }
        _ => validate_config(raw),
    }
}

/// Digest problems of the files listed in `manifest` under `dir`; empty when
/// every file is present with matching content.
pub fn verify_outputs(manifest: &RunManifest, dir: &Path) -> Vec<String> {
    let mut problems = Vec::new();
    for f in &manifest.files {
        match fs::read(dir.join(&f.path)) {
            Err(e) => problems.push(format!("{}: {e}", f.path)),
            Ok(bytes) => {
                let digest = hex::encode(Sha256::digest(&bytes));
                if digest != f.sha256 || bytes.len() as u64 != f.bytes {
                    problems.push(format!(
                        "{}: digest {digest} ({} bytes) differs from recorded {} ({} bytes)",
                        f.path,
                        bytes.len(),
                        f.sha256,
                        f.bytes
                    ));
                }
            }
        }
    }
    problems
}

struct OutputDir {
    root: PathBuf,
    files: Vec<FileDigest>,
}

impl OutputDir {
    fn write(&mut self, rel: &str, contents: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
        }
        fs::write(&path, contents).map_err(|e| io_error(&path, e))?;
        self.files.push(FileDigest {
            path: rel.to_string(),
            sha256: hex::encode(Sha256::digest(contents)),
            bytes: contents.len() as u64,
        });
        Ok(())
    }
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Run(format!("{}: {e}", path.display()))
}

#[derive(Default)]
struct Totals {
    steps: u64,
    neuron_steps: u64,
    projections: u64,
}

/// Replica-averaged statistics of one cell: the whole network first, then
/// each population when there are several.
#[derive(Debug, Clone)]
pub struct EnsembleOutcome {
    pub stats: Vec<EnsembleStats>,
    pub projections: StepReport,
}

struct ReplicaOutput {
    series: Vec<ReplicaSeries>,
    projections: StepReport,
    trajectory: Option<(String, SpikeTrain)>,
}

fn panic_text(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "panic".into()
    }
}

/// Runs `work` for `replica`, retrying once on error or panic. The retry
/// replays the identical stream, so a successful retry is indistinguishable
/// from a first-time success.
fn with_retry<T>(replica: u32, opts: &RunOptions, work: impl Fn() -> Result<T>) -> Result<T> {
    let mut last = String::new();
    for attempt in 0..2 {
        let outcome = catch_unwind(AssertUnwindSafe(|| {
            if let Some(f) = opts.inject_failure {
                if f.replica == replica && attempt < f.attempts {
                    panic!("injected failure (replica {replica}, attempt {attempt})");
                }
            }
            work()
        }));
        match outcome {
            Ok(Ok(value)) => return Ok(value),
            Ok(Err(e)) => last = e.to_string(),
            Err(payload) => last = panic_text(payload),
        }
    }
    Err(Error::Run(format!("replica {replica} failed twice: {last}")))
}

fn simulate_replica(cfg: &RunConfig, cell: &Cell, replica: u32, keep_trajectory: bool) -> Result<ReplicaOutput> {
    let rng = StreamRng::new(cfg.seed);
    let start = cfg.initial.sample(&cell.model, &cell.sizes, &rng, replica)?;
    let noise = ReplicaNoise::new(cfg.seed, replica);
    let ranges = start.population_ranges();
    let split = ranges.len() > 1;
    let mut series = vec![ReplicaSeries::default(); 1 + if split { ranges.len() } else { 0 }];
    let recorded = if keep_trajectory {
        cfg.output.max_neurons.unwrap_or(start.len()).min(start.len())
    } else {
        0
    };
    let mut detectors = vec![SpikeDetector::new(SPIKE_THRESHOLD_MV, REFRACTORY_MS); recorded];
    let mut csv = String::new();
    if keep_trajectory {
        csv.push_str("t,neuron_id,V,m,n,h,y\n");
    }
    let stride = cfg.output.stride;
    let step = cfg.step;
    let outcome = simulate(&cell.model, start, &step, &noise, |k, state| {
        let t = step.time(k);
        for (d, s) in detectors.iter_mut().zip(&state.neurons) {
            d.observe(t, s.v);
        }
        if k % stride == 0 {
            series[0].push(t, &state.neurons)?;
            if split {
                for (p, r) in ranges.iter().enumerate() {
                    series[p + 1].push(t, &state.neurons[r.clone()])?;
                }
            }
            for (i, s) in state.neurons.iter().take(recorded).enumerate() {
                let _ = writeln!(csv, "{t},{i},{},{},{},{},{}", s.v, s.m, s.n, s.h, s.y);
            }
        }
        Ok(())
    })?;
    let trajectory = keep_trajectory.then(|| {
        let spikes = SpikeTrain {
            per_neuron: detectors.into_iter().map(|d| d.spikes).collect(),
        };
        (csv, spikes)
    });
    Ok(ReplicaOutput {
        series,
        projections: outcome.projections,
        trajectory,
    })
}

fn aggregate(outputs: &[&ReplicaOutput]) -> Result<Vec<EnsembleStats>> {
    let parts = outputs.first().map_or(0, |o| o.series.len());
    (0..parts)
        .map(|p| {
            let runs: Vec<ReplicaSeries> = outputs.iter().map(|o| o.series[p].clone()).collect();
            dissipation_curves(&runs)
        })
        .collect()
}

/// Dispatches the replicas of `cell` over the current worker pool and
/// aggregates them in replica order. A replica that fails twice aborts the
/// cell; the statistics of the replicas that did finish come back with the
/// error so callers can preserve them.
fn run_cell_replicas(
    cfg: &RunConfig,
    cell: &Cell,
    opts: &RunOptions,
    keep_trajectory: bool,
) -> std::result::Result<Vec<ReplicaOutput>, (Error, Vec<ReplicaOutput>)> {
    let results: Vec<Result<ReplicaOutput>> = (0..cfg.replicas)
        .into_par_iter()
        .map(|r| with_retry(r, opts, || simulate_replica(cfg, cell, r, keep_trajectory)))
        .collect();
    let mut done = Vec::with_capacity(results.len());
    let mut first_error = None;
    for result in results {
        match result {
            Ok(out) => done.push(out),
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    match first_error {
        None => Ok(done),
        Some(e) => Err((e, done)),
    }
}

/// Replica-averaged statistics of `cell` under `cfg`, computed on the
/// current rayon pool. Independent of the pool size and completion order.
pub fn run_ensemble(cfg: &RunConfig, cell: &Cell, opts: &RunOptions) -> Result<EnsembleOutcome> {
    let outputs = run_cell_replicas(cfg, cell, opts, false).map_err(|(e, _)| e)?;
    let mut projections = StepReport::default();
    for o in &outputs {
        projections.merge(&o.projections);
    }
    Ok(EnsembleOutcome {
        stats: aggregate(&outputs.iter().collect::<Vec<_>>())?,
        projections,
    })
}

fn stats_file_names(cfg: &RunConfig, parts: usize) -> Vec<String> {
    let mut names = vec!["stats.csv".to_string()];
    if parts > 1 {
        names.extend(cfg.populations.iter().map(|p| format!("stats_{}.csv", p.name)));
    }
    names
}

fn cell_summary(cfg: &RunConfig, cell: &Cell, stats: &[EnsembleStats], projections: &StepReport) -> Result<Value> {
    let tail = cfg.tail();
    let mut per_part = Vec::new();
    for (name, s) in stats_file_names(cfg, stats.len()).iter().zip(stats) {
        let var_v = s.variance_v();
        let plateau = plateau_and_rate(&s.t, &var_v, tail)?;
        let fit = log_decay_fit(&s.t, &var_v, DECAY_FLOOR, tail.0);
        per_part.push(json!({
            "file": name,
            "var_v_initial": var_v.first().copied(),
            "var_v_plateau": plateau.plateau,
            "var_v_half_time": plateau.half_time,
            "log_var_v_fit": fit.map(|f| json!({
                "decay_rate": -f.slope,
                "r_squared": f.r_squared,
            })),
        }));
    }
    Ok(json!({
        "cell": cell.label,
        "sizes": cell.sizes,
        "sigmas": cell.model.populations.iter().map(|p| p.noise.sigma).collect::<Vec<_>>(),
        "replicas": cfg.replicas,
        "tail": [tail.0, tail.1],
        "projections": projections.total(),
        "statistics": per_part,
    }))
}

fn network_scenario(
    cfg: &RunConfig,
    opts: &RunOptions,
    out: &mut OutputDir,
    totals: &mut Totals,
    keep_trajectory: bool,
) -> Result<Value> {
    let steps = cfg.step.steps()?;
    totals.steps = steps;
    let mut cells = Vec::new();
    for cell in cfg.cells() {
        let outputs = match run_cell_replicas(cfg, &cell, opts, keep_trajectory) {
            Ok(outputs) => outputs,
            Err((e, partial)) => {
                if !partial.is_empty() {
                    let stats = aggregate(&partial.iter().collect::<Vec<_>>())?;
                    out.write(&format!("{}/stats.partial.csv", cell.label), stats[0].to_csv().as_bytes())?;
                }
                return Err(e);
            }
        };
        let n: usize = cell.sizes.iter().sum();
        totals.neuron_steps += steps * n as u64 * u64::from(cfg.replicas);
        let mut projections = StepReport::default();
        for (r, o) in outputs.iter().enumerate() {
            projections.merge(&o.projections);
            if let Some((csv, spikes)) = &o.trajectory {
                out.write(&format!("{}/r{r}_trajectory.csv", cell.label), csv.as_bytes())?;
                out.write(&format!("{}/r{r}_spikes.csv", cell.label), spikes.to_csv().as_bytes())?;
            }
        }
        totals.projections += projections.total();
        let stats = aggregate(&outputs.iter().collect::<Vec<_>>())?;
        for (name, s) in stats_file_names(cfg, stats.len()).iter().zip(&stats) {
            out.write(&format!("{}/{name}", cell.label), s.to_csv().as_bytes())?;
        }
        cells.push(cell_summary(cfg, &cell, &stats, &projections)?);
    }
    Ok(json!({ "cells": cells }))
}

fn single_neuron_scenario(cfg: &RunConfig, currents: &[f64], out: &mut OutputDir, totals: &mut Totals) -> Result<Value> {
    let steps = cfg.step.steps()?;
    totals.steps = steps;
    let model = cfg.model();
    let start = cfg.initial.sample(&model, &[1], &StreamRng::new(cfg.seed), 0)?.neurons[0];
    let stride = cfg.output.stride as usize;
    let t_end = cfg.step.t_end;
    let mut runs = Vec::new();
    for &current in currents {
        let mut params = model.populations[0].clone();
        params.i_ext = current;
        let traj = single_neuron_trajectory(&params, start, t_end, cfg.step.dt)?;
        totals.neuron_steps += steps;
        let mut csv = String::from("t,neuron_id,V,m,n,h,y\n");
        for (t, s) in traj.t.iter().zip(&traj.states).step_by(stride) {
            let _ = writeln!(csv, "{t},0,{},{},{},{},{}", s.v, s.m, s.n, s.h, s.y);
        }
        let spikes = detect_spikes(&traj.t, &traj.voltages(), SPIKE_THRESHOLD_MV, REFRACTORY_MS)?;
        let label = format!("I{current}");
        out.write(&format!("{label}/trajectory.csv"), csv.as_bytes())?;
        let train = SpikeTrain {
            per_neuron: vec![spikes.clone()],
        };
        out.write(&format!("{label}/spikes.csv"), train.to_csv().as_bytes())?;
        runs.push(json!({
            "current": current,
            "spikes": spikes.len(),
            "first_spike": spikes.first(),
            "isi_cv_late": isi_cv(&spikes, 0.25 * t_end, t_end),
        }));
    }
    Ok(json!({ "currents": runs }))
}

fn convergence_scenario(
    cfg: &RunConfig,
    coarse_dt: f64,
    levels: usize,
    reference_ratio: u64,
    out: &mut OutputDir,
    totals: &mut Totals,
) -> Result<Value> {
    let study = StrongErrorConfig {
        model: cfg.model(),
        sizes: cfg.sizes(),
        initial: cfg.initial.clone(),
        t_end: cfg.step.t_end,
        coarse_dt,
        levels,
        reference_ratio,
        paths: cfg.replicas,
        seed: cfg.seed,
        scheme: cfg.step.scheme,
    };
    let report = strong_error_study(&study)?;
    let mut csv = String::from("dt,rms_error,mean_sq_error,mean_sq_stderr,projections,gate_steps,projection_frequency\n");
    for l in &report.levels {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            l.dt,
            l.rms_error,
            l.mean_sq_error,
            l.mean_sq_stderr,
            l.projections,
            l.gate_steps,
            l.projection_frequency()
        );
    }
    out.write("convergence.csv", csv.as_bytes())?;
    totals.steps = (cfg.step.t_end / report.reference_dt).round() as u64;
    let gate_steps: u64 = report.levels.iter().map(|l| l.gate_steps).sum::<u64>() + report.reference_gate_steps;
    totals.neuron_steps = gate_steps / 4;
    let projections: u64 = report.levels.iter().map(|l| l.projections).sum::<u64>() + report.reference_projections;
    totals.projections = projections;
    Ok(json!({
        "reference_dt": report.reference_dt,
        "order_fit": report.order_fit,
        "projection_rate_constant": report.projection_rate_constant(),
        "projections": projections,
    }))
}

fn chaos_scenario(
    cfg: &RunConfig,
    n_ref: usize,
    ladder: &[usize],
    ladder_replicas: &[u32],
    out: &mut OutputDir,
    totals: &mut Totals,
) -> Result<Value> {
    let study = ChaosConfig {
        model: cfg.model(),
        initial: cfg.initial.clone(),
        step: cfg.step,
        n_ref,
        ladder: ladder.to_vec(),
        replicas: ladder_replicas.to_vec(),
        seed: cfg.seed,
    };
    let report = chaos_rate_fit(&study)?;
    let mut csv = String::from("n,replicas,coupled_error,coupled_error_stderr");
    for t in &report.times {
        let _ = write!(csv, ",w2_squared_t{t}");
    }
    csv.push('\n');
    for level in &report.levels {
        let _ = write!(
            csv,
            "{},{},{},{}",
            level.n, level.replicas, level.coupled_error, level.coupled_error_stderr
        );
        for w in &level.w2_squared {
            let _ = write!(csv, ",{w}");
        }
        csv.push('\n');
    }
    out.write("chaos.csv", csv.as_bytes())?;
    let steps = cfg.step.steps()?;
    totals.steps = steps;
    let pairs: u64 = ladder
        .iter()
        .zip(ladder_replicas)
        .map(|(&n, &r)| 2 * n as u64 * u64::from(r))
        .sum();
    totals.neuron_steps = steps * (n_ref as u64 + pairs);
    Ok(json!({
        "times": report.times,
        "coupled_fit": report.coupled_fit,
        "w2_fits": report.w2_fits,
    }))
}

fn prepare_dir(dir: &Path, overwrite: bool) -> Result<()> {
    if dir.exists() {
        let mut entries = fs::read_dir(dir).map_err(|e| io_error(dir, e))?;
        if entries.next().is_some() && !overwrite {
            return Err(Error::Run(format!(
                "output directory {} is not empty; pass the overwrite flag to replace its files",
                dir.display()
            )));
        }
    }
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

/// Executes `config` into `out_dir` and writes the manifest there. On a
/// replica failure the outputs written so far, partial statistics and an
/// aborted manifest are kept and the error is returned.
pub fn run_scenario(config: &RunConfig, out_dir: &Path, opts: &RunOptions) -> Result<RunManifest> {
    let violations = config.violations();
    if !violations.is_empty() {
        return Err(Error::Config(violations.join("\n")));
    }
    prepare_dir(out_dir, opts.overwrite)?;
    let workers = match opts.workers {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        k => k,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Run(format!("worker pool: {e}")))?;
    let clock = Instant::now();
    let mut out = OutputDir {
        root: out_dir.to_path_buf(),
        files: Vec::new(),
    };
    let mut totals = Totals::default();
    let result = pool.install(|| match &config.experiment {
        Experiment::SingleNeuron { currents } => single_neuron_scenario(config, currents, &mut out, &mut totals),
        Experiment::Trajectory => network_scenario(config, opts, &mut out, &mut totals, true),
        Experiment::Ensemble => network_scenario(config, opts, &mut out, &mut totals, false),
        Experiment::Convergence {
            coarse_dt,
            levels,
            reference_ratio,
        } => convergence_scenario(config, *coarse_dt, *levels, *reference_ratio, &mut out, &mut totals),
        Experiment::Chaos {
            n_ref,
            ladder,
            ladder_replicas,
        } => chaos_scenario(config, *n_ref, ladder, ladder_replicas, &mut out, &mut totals),
    });
    let (status, error) = match &result {
        Ok(summary) => {
            let mut summary = summary.clone();
            summary["scenario"] = json!(config.scenario);
            let text = serde_json::to_string_pretty(&summary).expect("summaries always serialize");
            out.write("summary.json", text.as_bytes())?;
            (RunStatus::Complete, None)
        }
        Err(e) => (RunStatus::Aborted, Some(e.to_string())),
    };
    let mut files = out.files;
    files.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = RunManifest {
        schema_version: SCHEMA_VERSION,
        code_version: CODE_VERSION.into(),
        status,
        error,
        config: config.clone(),
        files,
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
        steps: totals.steps,
        neuron_steps: totals.neuron_steps,
        projections: totals.projections,
        workers,
    };
    let path = out_dir.join(MANIFEST_FILE);
    fs::write(&path, manifest.to_json()).map_err(|e| io_error(&path, e))?;
    result.map(|_| manifest)
}
