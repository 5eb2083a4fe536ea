//! Measurements on simulated ensembles: variances across neurons,
//! replica-averaged dissipation curves, plateau summaries, spike detection
//! and the Wasserstein-2 distance between empirical measures.

mod spikes;
mod wasserstein;

pub use spikes::{detect_spikes, isi_cv, SpikeDetector, SpikeTrain, REFRACTORY_MS, SPIKE_THRESHOLD_MV};
pub use wasserstein::{wasserstein2, wasserstein2_capped, Wasserstein, DEFAULT_ASSIGNMENT_CAP};

use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::network::NeuronState;
use crate::numeric::{exact_sum, fit_line, ExactSum, LineFit};
use crate::reference::time_matches;

/// Population-normalized variance (`1/N`) by the corrected two-pass algorithm.
pub fn empirical_variance(values: &[f64]) -> Result<f64> {
    let Some(&first) = values.first() else {
        return input("variance of an empty sample");
    };
    if values.iter().all(|&v| v == first) {
        return Ok(0.0);
    }
    let n = values.len() as f64;
    let mean = exact_sum(values.iter().copied()) / n;
    let mut sum_sq = 0.0;
    let mut sum = 0.0;
    for &v in values {
        let d = v - mean;
        sum_sq += d * d;
        sum += d;
    }
    Ok(((sum_sq - sum * sum / n) / n).max(0.0))
}

/// Component means and variances of one snapshot, in `(V, m, n, h, y)` order.
pub fn snapshot_moments(neurons: &[NeuronState]) -> Result<([f64; 5], [f64; 5])> {
    if neurons.is_empty() {
        return input("moments of an empty snapshot");
    }
    let mut means = [0.0; 5];
    let mut vars = [0.0; 5];
    let mut column = Vec::with_capacity(neurons.len());
    for c in 0..5 {
        column.clear();
        column.extend(neurons.iter().map(|s| s.to_array()[c]));
        means[c] = exact_sum(column.iter().copied()) / column.len() as f64;
        vars[c] = empirical_variance(&column)?;
    }
    Ok((means, vars))
}

/// Per-time moments of a single replica.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReplicaSeries {
    pub t: Vec<f64>,
    pub means: Vec<[f64; 5]>,
    pub vars: Vec<[f64; 5]>,
}

impl ReplicaSeries {
    pub fn push(&mut self, t: f64, neurons: &[NeuronState]) -> Result<()> {
        let (m, v) = snapshot_moments(neurons)?;
        self.t.push(t);
        self.means.push(m);
        self.vars.push(v);
        Ok(())
    }

    pub fn variance_v(&self) -> Vec<f64> {
        self.vars.iter().map(|v| v[0]).collect()
    }
}

/// Replica-averaged component means and variances on a common grid.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub t: Vec<f64>,
    pub mean: Vec<[f64; 5]>,
    pub var: Vec<[f64; 5]>,
    pub replicas: usize,
}

impl EnsembleStats {
    pub fn variance_v(&self) -> Vec<f64> {
        self.var.iter().map(|v| v[0]).collect()
    }

    /// CSV with columns `t,meanV,varV,varM,varN,varH,varY`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,meanV,varV,varM,varN,varH,varY\n");
        for ((t, m), v) in self.t.iter().zip(&self.mean).zip(&self.var) {
            out.push_str(&format!(
                "{t},{},{},{},{},{},{}\n",
                m[0], v[0], v[1], v[2], v[3], v[4]
            ));
        }
        out
    }
}

/// Replica average of per-replica moment series. Sums are exactly rounded,
/// so the result does not depend on the order of `runs`.
pub fn dissipation_curves(runs: &[ReplicaSeries]) -> Result<EnsembleStats> {
    let Some(first) = runs.first() else {
        return input("no replicas to aggregate");
    };
    for (r, run) in runs.iter().enumerate() {
        let same = run.t.len() == first.t.len()
            && run.means.len() == run.t.len()
            && run.vars.len() == run.t.len()
            && run.t.iter().zip(&first.t).all(|(a, b)| time_matches(*a, *b));
        if !same {
            return Err(Error::GridMismatch(format!(
                "replica {r} does not share the grid of replica 0"
            )));
        }
    }
    let count = runs.len() as f64;
    let average = |pick: &dyn Fn(&ReplicaSeries, usize) -> [f64; 5], k: usize| {
        let mut acc: [ExactSum; 5] = Default::default();
        for run in runs {
            for (a, x) in acc.iter_mut().zip(pick(run, k)) {
                a.add(x);
            }
        }
        acc.map(|a| a.value() / count)
    };
    let n = first.t.len();
    Ok(EnsembleStats {
        t: first.t.clone(),
        mean: (0..n).map(|k| average(&|r, k| r.means[k], k)).collect(),
        var: (0..n).map(|k| average(&|r, k| r.vars[k], k)).collect(),
        replicas: runs.len(),
    })
}

/// Late-time level and half-dissipation time of a decaying series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauSummary {
    pub plateau: f64,
    /// First grid time with `S_t ≤ (S_0 + plateau)/2`; absent when the series
    /// starts below its plateau or never reaches the threshold.
    pub half_time: Option<f64>,
}

/// Plateau = time average of `series` over `tail = [from, to]`.
pub fn plateau_and_rate(t: &[f64], series: &[f64], tail: (f64, f64)) -> Result<PlateauSummary> {
    if t.len() != series.len() || t.is_empty() {
        return input(format!(
            "series of length {} does not match grid of length {}",
            series.len(),
            t.len()
        ));
    }
    let window: Vec<f64> = t
        .iter()
        .zip(series)
        .filter(|(ti, _)| **ti >= tail.0 && **ti <= tail.1)
        .map(|(_, s)| *s)
        .collect();
    if window.is_empty() {
        return input(format!(
            "tail window [{}, {}] holds no grid points (series covers [{}, {}])",
            tail.0,
            tail.1,
            t[0],
            t[t.len() - 1]
        ));
    }
    let plateau = exact_sum(window.iter().copied()) / window.len() as f64;
    let start = series[0];
    let half_time = if start < plateau {
        None
    } else {
        let threshold = 0.5 * (start + plateau);
        t.iter().zip(series).find(|(_, s)| **s <= threshold).map(|(ti, _)| *ti)
    };
    Ok(PlateauSummary { plateau, half_time })
}

/// Exponential fit of a decaying series: a line through `ln S_t` over the
/// segment that starts at the first grid point and ends just before `S`
/// first drops to `floor_ratio · S_0` (or at `until`). The slope is minus the
/// decay rate. `None` when the segment has fewer than two positive points.
pub fn log_decay_fit(t: &[f64], series: &[f64], floor_ratio: f64, until: f64) -> Option<LineFit> {
    let start = *series.first()?;
    if !(start > 0.0) {
        return None;
    }
    let floor = floor_ratio * start;
    let (xs, ys): (Vec<f64>, Vec<f64>) = t
        .iter()
        .zip(series)
        .take_while(|(ti, s)| **ti <= until && **s > floor)
        .map(|(ti, s)| (*ti, s.ln()))
        .unzip();
    fit_line(&xs, &ys)
}
