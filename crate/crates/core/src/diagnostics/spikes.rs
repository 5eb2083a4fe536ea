use serde::{Deserialize, Serialize};

use crate::error::{input, Result};

pub const SPIKE_THRESHOLD_MV: f64 = 0.0;
pub const REFRACTORY_MS: f64 = 2.0;

/// Spike times of each neuron, in increasing order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SpikeTrain {
    pub per_neuron: Vec<Vec<f64>>,
}

impl SpikeTrain {
    /// CSV with columns `neuron_id,t`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("neuron_id,t\n");
        for (i, times) in self.per_neuron.iter().enumerate() {
            for t in times {
                out.push_str(&format!("{i},{t}\n"));
            }
        }
        out
    }
}

/// Upward threshold crossings of `v`, with crossing times interpolated
/// linearly between grid points. A crossing closer than `refractory` to the
/// previous accepted spike is dropped.
pub fn detect_spikes(t: &[f64], v: &[f64], threshold: f64, refractory: f64) -> Result<Vec<f64>> {
    if t.len() != v.len() {
        return input(format!("{} times for {} voltages", t.len(), v.len()));
    }
    let mut detector = SpikeDetector::new(threshold, refractory);
    for (ti, vi) in t.iter().zip(v) {
        detector.observe(*ti, *vi);
    }
    Ok(detector.spikes)
}

/// Streaming form of [`detect_spikes`] for one neuron.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeDetector {
    threshold: f64,
    refractory: f64,
    last: Option<(f64, f64)>,
    pub spikes: Vec<f64>,
}

impl SpikeDetector {
    pub fn new(threshold: f64, refractory: f64) -> Self {
        SpikeDetector {
            threshold,
            refractory,
            last: None,
            spikes: Vec::new(),
        }
    }

    pub fn observe(&mut self, t: f64, v: f64) {
        if let Some((t0, v0)) = self.last {
            if v0 < self.threshold && v >= self.threshold {
                let tc = t0 + (self.threshold - v0) / (v - v0) * (t - t0);
                if self.spikes.last().map_or(true, |&s| tc - s >= self.refractory) {
                    self.spikes.push(tc);
                }
            }
        }
        self.last = Some((t, v));
    }
}

/// Coefficient of variation of the inter-spike intervals whose both ends lie
/// in `[from, to]`; `None` with fewer than two intervals.
pub fn isi_cv(spikes: &[f64], from: f64, to: f64) -> Option<f64> {
    let inside: Vec<f64> = spikes.iter().copied().filter(|s| *s >= from && *s <= to).collect();
    if inside.len() < 3 {
        return None;
    }
    let isi: Vec<f64> = inside.windows(2).map(|w| w[1] - w[0]).collect();
    let n = isi.len() as f64;
    let mean = isi.iter().sum::<f64>() / n;
    let var = isi.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
    Some(var.sqrt() / mean)
}
