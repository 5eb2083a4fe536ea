//! Network state, population parameters and mean-field coupling.
//!
//! A neuron `i` in population `α` feels every population `γ` through its
//! empirical means only:
//!
//! ```text
//! coupling drift = −Σ_γ J_E^{αγ} (V_i − V̄_γ) − Σ_γ J_Ch^{αγ} ȳ_γ (V_i − V_rev^{αγ})
//!                = R_coup − A_coup · V_i
//! ```
//!
//! so a single O(N) reduction per step is enough for the whole network. The
//! sums include `j = i`.

use serde::{Deserialize, Serialize};

use crate::error::{config, input, Error, Result};
use crate::kinetics::{NoiseSpec, RateSpec};
use crate::numeric::ExactSum;

/// One neuron: membrane voltage (mV) and gate fractions.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeuronState {
    pub v: f64,
    pub m: f64,
    pub n: f64,
    pub h: f64,
    pub y: f64,
}

impl NeuronState {
    pub fn new(v: f64, m: f64, n: f64, h: f64, y: f64) -> Self {
        NeuronState { v, m, n, h, y }
    }

    pub fn from_parts(v: f64, gates: [f64; 4]) -> Self {
        NeuronState::new(v, gates[0], gates[1], gates[2], gates[3])
    }

    /// Components in the order `(V, m, n, h, y)`.
    #[inline]
    pub fn to_array(&self) -> [f64; 5] {
        [self.v, self.m, self.n, self.h, self.y]
    }

    #[inline]
    pub fn gates(&self) -> [f64; 4] {
        [self.m, self.n, self.h, self.y]
    }

    /// Squared Euclidean distance in R⁵.
    #[inline]
    pub fn distance_sq(&self, other: &NeuronState) -> f64 {
        let a = self.to_array();
        let b = other.to_array();
        a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
    }

    pub fn gates_in_unit_interval(&self) -> bool {
        self.gates().iter().all(|g| (0.0..=1.0).contains(g))
    }

    /// Voltage `v` with every gate at its voltage-clamped equilibrium.
    pub fn resting(v: f64, rates: &RateSpec) -> Self {
        NeuronState::from_parts(v, rates.equilibrium(v))
    }
}

/// Membrane constants, input current and kinetics of one population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationParams {
    pub g_na: f64,
    pub g_k: f64,
    pub g_l: f64,
    pub v_na: f64,
    pub v_k: f64,
    pub v_l: f64,
    /// Constant input current.
    #[serde(rename = "i")]
    pub i_ext: f64,
    #[serde(default)]
    pub rates: RateSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
}

impl PopulationParams {
    /// Classical squid-axon membrane (conductances in mS/cm³, potentials in mV).
    pub fn hodgkin_huxley(i_ext: f64, sigma: f64) -> Self {
        PopulationParams {
            g_na: 120.0,
            g_k: 36.0,
            g_l: 0.3,
            v_na: 50.0,
            v_k: -77.0,
            v_l: -54.4,
            i_ext,
            rates: RateSpec::hodgkin_huxley(),
            noise: NoiseSpec::new(sigma),
        }
    }

    /// Ionic part of the voltage drift written as `R − A·V`; returns `(A, R)`.
    #[inline]
    pub fn ionic_linear(&self, m: f64, n: f64, h: f64) -> (f64, f64) {
        let n2 = n * n;
        let gk = self.g_k * n2 * n2;
        let gna = self.g_na * m * m * m * h;
        let a = gk + gna + self.g_l;
        let r = self.i_ext + gk * self.v_k + gna * self.v_na + self.g_l * self.v_l;
        (a, r)
    }

    pub fn validate(&self, path: &str, errors: &mut Vec<String>) {
        for (name, value) in [
            ("g_na", self.g_na),
            ("g_k", self.g_k),
            ("g_l", self.g_l),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                errors.push(format!("{path}.{name}: must be finite and >= 0, got {value}"));
            }
        }
        for (name, value) in [
            ("v_na", self.v_na),
            ("v_k", self.v_k),
            ("v_l", self.v_l),
            ("i", self.i_ext),
        ] {
            if !value.is_finite() {
                errors.push(format!("{path}.{name}: must be finite, got {value}"));
            }
        }
        self.rates.validate(&format!("{path}.rates"), errors);
        self.noise.validate(&format!("{path}.noise"), errors);
    }
}

/// `F(V, m, n, h) = I − g_K n⁴(V − V_K) − g_Na m³h(V − V_Na) − g_L(V − V_L)`.
#[inline]
pub fn voltage_drift_f(v: f64, m: f64, n: f64, h: f64, params: &PopulationParams) -> f64 {
    params.i_ext
        - params.g_k * n.powi(4) * (v - params.v_k)
        - params.g_na * m.powi(3) * h * (v - params.v_na)
        - params.g_l * (v - params.v_l)
}

/// Interaction strengths between ordered pairs of populations
/// (`[receiving α][emitting γ]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSpec {
    pub j_e: Vec<Vec<f64>>,
    pub j_ch: Vec<Vec<f64>>,
    pub v_rev: Vec<Vec<f64>>,
}

impl CouplingSpec {
    /// One population.
    pub fn single(j_e: f64, j_ch: f64, v_rev: f64) -> Self {
        CouplingSpec {
            j_e: vec![vec![j_e]],
            j_ch: vec![vec![j_ch]],
            v_rev: vec![vec![v_rev]],
        }
    }

    /// `p` populations with identical entries everywhere.
    pub fn uniform(p: usize, j_e: f64, j_ch: f64, v_rev: f64) -> Self {
        CouplingSpec {
            j_e: vec![vec![j_e; p]; p],
            j_ch: vec![vec![j_ch; p]; p],
            v_rev: vec![vec![v_rev; p]; p],
        }
    }

    pub fn populations(&self) -> usize {
        self.j_e.len()
    }

    /// True when no population feels any other (nor itself).
    pub fn is_uncoupled(&self) -> bool {
        self.j_e.iter().chain(&self.j_ch).flatten().all(|&j| j == 0.0)
    }

    pub fn validate(&self, populations: usize, path: &str, errors: &mut Vec<String>) {
        for (name, matrix, nonneg) in [
            ("j_e", &self.j_e, true),
            ("j_ch", &self.j_ch, true),
            ("v_rev", &self.v_rev, false),
        ] {
            if matrix.len() != populations {
                errors.push(format!(
                    "{path}.{name}: expected {populations} rows (one per population), got {}",
                    matrix.len()
                ));
            }
            for (a, row) in matrix.iter().enumerate() {
                if row.len() != populations {
                    errors.push(format!(
                        "{path}.{name}[{a}]: expected {populations} columns, got {}",
                        row.len()
                    ));
                }
                for (g, &value) in row.iter().enumerate() {
                    if !value.is_finite() || (nonneg && value < 0.0) {
                        let rule = if nonneg { "finite and >= 0" } else { "finite" };
                        errors.push(format!("{path}.{name}[{a}][{g}]: must be {rule}, got {value}"));
                    }
                }
            }
        }
    }

    /// Coupling drift on a neuron of population `alpha` as `(A_coup, R_coup)`.
    pub fn terms(&self, alpha: usize, means: &PopulationMeans) -> Result<CouplingTerms> {
        let p = means.per_population.len();
        if alpha >= self.populations() || self.populations() != p {
            return config(format!(
                "population {alpha} is not defined (coupling covers {}, means cover {p})",
                self.populations()
            ));
        }
        Ok(self.terms_unchecked(alpha, &means.per_population))
    }

    #[inline]
    pub(crate) fn terms_unchecked(&self, alpha: usize, means: &[NeuronState]) -> CouplingTerms {
        let mut a = 0.0;
        let mut r = 0.0;
        for (gamma, mean) in means.iter().enumerate() {
            let je = self.j_e[alpha][gamma];
            let jch = self.j_ch[alpha][gamma];
            a += je + jch * mean.y;
            r += je * mean.v + jch * mean.y * self.v_rev[alpha][gamma];
        }
        CouplingTerms { a, r }
    }
}

/// Linear-in-voltage coupling drift `r − a·V`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CouplingTerms {
    pub a: f64,
    pub r: f64,
}

/// Per-population component means `(V̄, m̄, n̄, h̄, ȳ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationMeans {
    pub per_population: Vec<NeuronState>,
}

/// Neurons of every population, stored contiguously by population.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub neurons: Vec<NeuronState>,
    pub pop_of: Vec<usize>,
    pub t: f64,
}

impl NetworkState {
    /// Builds a state for the given population sizes, validating the layout.
    pub fn new(neurons: Vec<NeuronState>, sizes: &[usize]) -> Result<Self> {
        let pop_of = layout(sizes)?;
        if pop_of.len() != neurons.len() {
            return input(format!(
                "layout holds {} neurons but {} states were supplied",
                pop_of.len(),
                neurons.len()
            ));
        }
        Ok(NetworkState {
            neurons,
            pop_of,
            t: 0.0,
        })
    }

    pub fn len(&self) -> usize {
        self.neurons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neurons.is_empty()
    }

    pub fn populations(&self) -> usize {
        self.pop_of.last().map_or(0, |p| p + 1)
    }

    /// Index range of each population.
    pub fn population_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut ranges: Vec<std::ops::Range<usize>> = Vec::new();
        for (i, &p) in self.pop_of.iter().enumerate() {
            if p == ranges.len() {
                ranges.push(i..i + 1);
            } else {
                ranges[p].end = i + 1;
            }
        }
        ranges
    }

    /// Per-population means from exactly rounded sums, hence independent of
    /// storage order and of thread count.
    pub fn population_means(&self) -> PopulationMeans {
        let p = self.populations();
        let mut acc: Vec<[ExactSum; 5]> = (0..p).map(|_| Default::default()).collect();
        let mut counts = vec![0usize; p];
        for (neuron, &pop) in self.neurons.iter().zip(&self.pop_of) {
            for (slot, x) in acc[pop].iter_mut().zip(neuron.to_array()) {
                slot.add(x);
            }
            counts[pop] += 1;
        }
        let per_population = acc
            .iter()
            .zip(&counts)
            .map(|(sums, &count)| {
                let c = count as f64;
                NeuronState::new(
                    sums[0].value() / c,
                    sums[1].value() / c,
                    sums[2].value() / c,
                    sums[3].value() / c,
                    sums[4].value() / c,
                )
            })
            .collect();
        PopulationMeans { per_population }
    }

    /// Coupling terms acting on neuron `i`.
    pub fn coupling_terms(
        &self,
        i: usize,
        means: &PopulationMeans,
        spec: &CouplingSpec,
    ) -> Result<CouplingTerms> {
        let alpha = *self
            .pop_of
            .get(i)
            .ok_or_else(|| Error::Input(format!("neuron {i} out of range")))?;
        spec.terms(alpha, means)
    }

    pub fn max_abs_voltage(&self) -> f64 {
        self.neurons.iter().fold(0.0, |m, n| m.max(n.v.abs()))
    }
}

/// Population label of every neuron for contiguous blocks of the given sizes.
pub fn layout(sizes: &[usize]) -> Result<Vec<usize>> {
    if sizes.is_empty() {
        return config("network needs at least one population");
    }
    if let Some(p) = sizes.iter().position(|&s| s == 0) {
        return config(format!("population {p} is empty"));
    }
    Ok(sizes
        .iter()
        .enumerate()
        .flat_map(|(p, &s)| std::iter::repeat(p).take(s))
        .collect())
}

/// Largest `|R|` the uncoupled-plus-chemical voltage drift can reach for
/// population `alpha`, over all gate values in `[0, 1]`.
///
/// The expression is affine in the gate-like variables, so the extremes are
/// the constant plus all positive (resp. all negative) coefficients.
pub fn r_max(params: &PopulationParams, spec: &CouplingSpec, alpha: usize) -> f64 {
    let constant = params.i_ext + params.g_l * params.v_l;
    let mut coefficients = vec![params.g_na * params.v_na, params.g_k * params.v_k];
    if let (Some(jch), Some(vrev)) = (spec.j_ch.get(alpha), spec.v_rev.get(alpha)) {
        coefficients.extend(jch.iter().zip(vrev).map(|(j, v)| j * v));
    }
    let high = constant + coefficients.iter().filter(|c| **c > 0.0).sum::<f64>();
    let low = constant + coefficients.iter().filter(|c| **c < 0.0).sum::<f64>();
    high.abs().max(low.abs())
}

/// A-priori voltage bound `4 R_max / g_L + 2 V0max e^{−g_L t}`.
pub fn v_star(
    t: f64,
    v0_max: f64,
    params: &PopulationParams,
    spec: &CouplingSpec,
    alpha: usize,
) -> Result<f64> {
    if !(params.g_l > 0.0) {
        return Err(Error::BoundUnavailable(params.g_l));
    }
    Ok(4.0 * r_max(params, spec, alpha) / params.g_l + 2.0 * v0_max * (-params.g_l * t).exp())
}
