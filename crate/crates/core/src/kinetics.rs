//! Channel gating kinetics.
//!
//! Every gate `x ∈ {m, n, h, y}` opens at rate `ρ_x(V)` and closes at rate
//! `ζ_x(V)`, so its deterministic drift is `ρ_x(V)(1 − u) − ζ_x(V)u`. The
//! channel noise has amplitude
//!
//! ```text
//! σ_x(V, u) = σ · sqrt(ρ_x(V)(1 − u) + ζ_x(V)u) · χ(u)
//! ```
//!
//! where `χ` is a smooth bump supported on `(0, 1)`, which keeps the gate
//! fractions inside the unit interval.
//!
//! Three functional forms are supported (see [`RateForm`]); the classical
//! squid-axon values ship as [`RateSpec::hodgkin_huxley`].

use serde::{Deserialize, Serialize};

use crate::error::{input, Result};

/// Below this `|λ(V − V_r)|` the linoid rate switches to its Taylor expansion.
const LINOID_TAYLOR_CUTOFF: f64 = 1e-6;

/// Peak value of the default cut-off function.
pub const DEFAULT_CHI_AMPLITUDE: f64 = 0.1;

/// The four gating variables, in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateKind {
    M,
    N,
    H,
    Y,
}

impl GateKind {
    pub const ALL: [GateKind; 4] = [GateKind::M, GateKind::N, GateKind::H, GateKind::Y];

    #[inline]
    pub fn index(self) -> usize {
        match self {
            GateKind::M => 0,
            GateKind::N => 1,
            GateKind::H => 2,
            GateKind::Y => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GateKind::M => "m",
            GateKind::N => "n",
            GateKind::H => "h",
            GateKind::Y => "y",
        }
    }
}

/// Functional form of one gate's opening and closing rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum RateForm {
    /// `ρ = a_r (V − V_r) / (1 − exp(−λ_r (V − V_r)))`,
    /// `ζ = a_d exp(−λ_d (V − V_d))`. Used for the m and n gates.
    Linoid {
        a_r: f64,
        lambda_r: f64,
        v_r: f64,
        a_d: f64,
        lambda_d: f64,
        v_d: f64,
    },
    /// `ρ = a_r exp(−λ_r (V − V_r))`,
    /// `ζ = a_d / (1 + exp(−λ_d (V − V_d)))`. Used for the h gate.
    ExpSigmoid {
        a_r: f64,
        lambda_r: f64,
        v_r: f64,
        a_d: f64,
        lambda_d: f64,
        v_d: f64,
    },
    /// `ρ = a_r T_max / (1 + exp(−λ (V − V_T)))`, `ζ = a_d`.
    /// Neurotransmitter (synaptic) channels.
    Synaptic {
        a_r: f64,
        t_max: f64,
        lambda: f64,
        v_t: f64,
        a_d: f64,
    },
}

impl RateForm {
    /// Opening rate. Assumes a validated form and finite `v`.
    #[inline]
    pub fn rho(&self, v: f64) -> f64 {
        match *self {
            RateForm::Linoid {
                a_r, lambda_r, v_r, ..
            } => a_r * linoid(v - v_r, lambda_r),
            RateForm::ExpSigmoid {
                a_r, lambda_r, v_r, ..
            } => a_r * (-lambda_r * (v - v_r)).exp(),
            RateForm::Synaptic {
                a_r,
                t_max,
                lambda,
                v_t,
                ..
            } => a_r * t_max / (1.0 + (-lambda * (v - v_t)).exp()),
        }
    }

    /// Closing rate. Assumes a validated form and finite `v`.
    #[inline]
    pub fn zeta(&self, v: f64) -> f64 {
        match *self {
            RateForm::Linoid {
                a_d, lambda_d, v_d, ..
            } => a_d * (-lambda_d * (v - v_d)).exp(),
            RateForm::ExpSigmoid {
                a_d, lambda_d, v_d, ..
            } => a_d / (1.0 + (-lambda_d * (v - v_d)).exp()),
            RateForm::Synaptic { a_d, .. } => a_d,
        }
    }

    fn validate(&self, path: &str, errors: &mut Vec<String>) {
        let mut positive = |name: &str, value: f64| {
            if !(value.is_finite() && value > 0.0) {
                errors.push(format!("{path}.{name}: must be finite and > 0, got {value}"));
            }
        };
        match *self {
            RateForm::Linoid {
                a_r,
                lambda_r,
                v_r,
                a_d,
                lambda_d,
                v_d,
            }
            | RateForm::ExpSigmoid {
                a_r,
                lambda_r,
                v_r,
                a_d,
                lambda_d,
                v_d,
            } => {
                positive("a_r", a_r);
                positive("a_d", a_d);
                if matches!(self, RateForm::Linoid { .. }) {
                    // the linoid is only positive for a positive slope
                    positive("lambda_r", lambda_r);
                }
                for (name, value) in [
                    ("lambda_r", lambda_r),
                    ("v_r", v_r),
                    ("lambda_d", lambda_d),
                    ("v_d", v_d),
                ] {
                    if !value.is_finite() {
                        errors.push(format!("{path}.{name}: must be finite, got {value}"));
                    }
                }
            }
            RateForm::Synaptic {
                a_r,
                t_max,
                lambda,
                v_t,
                a_d,
            } => {
                positive("a_r", a_r);
                positive("t_max", t_max);
                positive("a_d", a_d);
                for (name, value) in [("lambda", lambda), ("v_t", v_t)] {
                    if !value.is_finite() {
                        errors.push(format!("{path}.{name}: must be finite, got {value}"));
                    }
                }
            }
        }
    }
}

/// `x / (1 − exp(−λx))`, continuous through `x = 0` where it equals `1/λ`.
#[inline]
fn linoid(x: f64, lambda: f64) -> f64 {
    let z = lambda * x;
    if z.abs() < LINOID_TAYLOR_CUTOFF {
        (1.0 + 0.5 * z) / lambda
    } else {
        x / -(-z).exp_m1()
    }
}

/// Rate functions for the four gates of one population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSpec {
    pub m: RateForm,
    pub n: RateForm,
    pub h: RateForm,
    pub y: RateForm,
}

impl RateSpec {
    /// Squid-axon sodium/potassium kinetics with a GABA-like neurotransmitter
    /// channel (V in mV, rates in 1/ms).
    pub fn hodgkin_huxley() -> Self {
        RateSpec {
            m: RateForm::Linoid {
                a_r: 0.1,
                lambda_r: 0.1,
                v_r: -40.0,
                a_d: 4.0,
                lambda_d: 1.0 / 18.0,
                v_d: -65.0,
            },
            n: RateForm::Linoid {
                a_r: 0.01,
                lambda_r: 0.1,
                v_r: -55.0,
                a_d: 0.125,
                lambda_d: 1.0 / 80.0,
                v_d: -65.0,
            },
            h: RateForm::ExpSigmoid {
                a_r: 0.07,
                lambda_r: 1.0 / 20.0,
                v_r: -65.0,
                a_d: 1.0,
                lambda_d: 0.1,
                v_d: -35.0,
            },
            y: RateForm::Synaptic {
                a_r: 5.0,
                t_max: 1.0,
                lambda: 0.2,
                v_t: 2.0,
                a_d: 0.18,
            },
        }
    }

    #[inline]
    pub fn form(&self, gate: GateKind) -> &RateForm {
        match gate {
            GateKind::M => &self.m,
            GateKind::N => &self.n,
            GateKind::H => &self.h,
            GateKind::Y => &self.y,
        }
    }

    /// `(ρ_x(v), ζ_x(v))` for all four gates in storage order.
    #[inline]
    pub fn rates(&self, v: f64) -> [(f64, f64); 4] {
        [
            (self.m.rho(v), self.m.zeta(v)),
            (self.n.rho(v), self.n.zeta(v)),
            (self.h.rho(v), self.h.zeta(v)),
            (self.y.rho(v), self.y.zeta(v)),
        ]
    }

    /// Gate fractions at which every drift vanishes for a clamped voltage.
    pub fn equilibrium(&self, v: f64) -> [f64; 4] {
        self.rates(v).map(|(rho, zeta)| rho / (rho + zeta))
    }

    pub fn validate(&self, path: &str, errors: &mut Vec<String>) {
        for gate in GateKind::ALL {
            self.form(gate)
                .validate(&format!("{path}.{}", gate.name()), errors);
        }
    }
}

impl Default for RateSpec {
    fn default() -> Self {
        Self::hodgkin_huxley()
    }
}

/// Channel-noise level and cut-off shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub sigma: f64,
    #[serde(default = "default_chi_amplitude")]
    pub chi_amplitude: f64,
}

fn default_chi_amplitude() -> f64 {
    DEFAULT_CHI_AMPLITUDE
}

impl NoiseSpec {
    pub fn new(sigma: f64) -> Self {
        NoiseSpec {
            sigma,
            chi_amplitude: DEFAULT_CHI_AMPLITUDE,
        }
    }

    /// Cut-off `χ(u)` scaled to this spec's amplitude.
    #[inline]
    pub fn chi(&self, u: f64) -> f64 {
        self.chi_amplitude * chi_shape(u)
    }

    pub fn validate(&self, path: &str, errors: &mut Vec<String>) {
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            errors.push(format!("{path}.sigma: must be finite and >= 0, got {}", self.sigma));
        }
        if !(self.chi_amplitude.is_finite() && self.chi_amplitude >= 0.0) {
            errors.push(format!(
                "{path}.chi_amplitude: must be finite and >= 0, got {}",
                self.chi_amplitude
            ));
        }
    }
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec::new(0.0)
    }
}

#[inline]
fn chi_shape(u: f64) -> f64 {
    if u > 0.0 && u < 1.0 {
        let s = 2.0 * u - 1.0;
        (-0.5 / (1.0 - s * s)).exp()
    } else {
        0.0
    }
}

/// The default cut-off: `0.1 · exp(−0.5 / (1 − (2u − 1)²))` on `(0, 1)`, zero elsewhere.
pub fn chi(u: f64) -> f64 {
    DEFAULT_CHI_AMPLITUDE * chi_shape(u)
}

fn check_voltage(v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        input(format!("voltage must be finite, got {v}"))
    }
}

fn check_fraction(u: f64) -> Result<()> {
    if (0.0..=1.0).contains(&u) {
        Ok(())
    } else {
        input(format!("gate fraction must lie in [0, 1], got {u}"))
    }
}

/// Opening rate `ρ_x(v)`.
pub fn rho(gate: GateKind, v: f64, spec: &RateSpec) -> Result<f64> {
    check_voltage(v)?;
    Ok(spec.form(gate).rho(v))
}

/// Closing rate `ζ_x(v)`.
pub fn zeta(gate: GateKind, v: f64, spec: &RateSpec) -> Result<f64> {
    check_voltage(v)?;
    Ok(spec.form(gate).zeta(v))
}

/// `b_x(v, u) = ρ_x(v)(1 − u) − ζ_x(v)u`.
pub fn gate_drift(gate: GateKind, v: f64, u: f64, spec: &RateSpec) -> Result<f64> {
    check_voltage(v)?;
    check_fraction(u)?;
    let form = spec.form(gate);
    Ok(form.rho(v) * (1.0 - u) - form.zeta(v) * u)
}

/// `σ_x(v, u) = σ · sqrt(ρ_x(v)(1 − u) + ζ_x(v)u) · χ(u)`.
pub fn gate_diffusion(
    gate: GateKind,
    v: f64,
    u: f64,
    spec: &RateSpec,
    noise: &NoiseSpec,
) -> Result<f64> {
    check_voltage(v)?;
    check_fraction(u)?;
    let form = spec.form(gate);
    Ok(diffusion_from_rates(form.rho(v), form.zeta(v), u, noise))
}

/// Diffusion amplitude given precomputed rates; `u` must lie in `[0, 1]`.
#[inline]
pub(crate) fn diffusion_from_rates(rho: f64, zeta: f64, u: f64, noise: &NoiseSpec) -> f64 {
    if noise.sigma == 0.0 {
        return 0.0;
    }
    let chi = noise.chi(u);
    if chi == 0.0 {
        return 0.0;
    }
    noise.sigma * (rho * (1.0 - u) + zeta * u).sqrt() * chi
}
