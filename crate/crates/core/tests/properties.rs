//! Invariants of the kinetics, the network layer, the integrator, the
//! reference solvers and the limit copies.

use proptest::prelude::*;

use hhsync_core::chaos::{build_mean_field, coupled_copies};
use hhsync_core::epes::{advance, advance_with_means, exact_voltage_step, simulate};
use hhsync_core::kinetics::{gate_diffusion, gate_drift, rho, zeta};
use hhsync_core::network::{r_max, v_star};
use hhsync_core::reference::{hat_trajectory, HatSolver};
use hhsync_core::rng::PermutedNoise;
use hhsync_core::{
    CouplingSpec, GateKind, InitialLaw, NetworkModel, NetworkState, NeuronState, NoiseSpec, PopulationParams,
    RateSpec, ReplicaNoise, Scheme, StepConfig, StreamRng,
};

fn gate() -> impl Strategy<Value = GateKind> {
    prop::sample::select(GateKind::ALL.to_vec())
}

fn neuron() -> impl Strategy<Value = NeuronState> {
    (-100.0..100.0f64, 0.0..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64)
        .prop_map(|(v, m, n, h, y)| NeuronState::new(v, m, n, h, y))
}

fn network_model(sigma: f64, j_e: f64, j_ch: f64, v_rev: f64) -> NetworkModel {
    NetworkModel::single(
        PopulationParams::hodgkin_huxley(25.0, sigma),
        CouplingSpec::single(j_e, j_ch, v_rev),
    )
}

#[test]
fn rates_are_continuous_at_removable_singularities() {
    let spec = RateSpec::hodgkin_huxley();
    for (g, v0) in [(GateKind::M, -40.0), (GateKind::N, -55.0)] {
        let at = rho(g, v0, &spec).unwrap();
        for v in [v0 - 1e-6, v0 + 1e-6] {
            let near = rho(g, v, &spec).unwrap();
            assert!(((at - near) / at).abs() < 1e-4, "{g:?} at {v}: {at} vs {near}");
        }
    }
}

#[test]
fn diffusion_is_lipschitz_in_the_gate() {
    let spec = RateSpec::hodgkin_huxley();
    let noise = NoiseSpec::new(1.0);
    for g in GateKind::ALL {
        for v in [-90.0, -65.0, -40.0, -10.0, 30.0] {
            let quotient = |h: f64| {
                let k = (1.0 / h) as usize;
                (0..k)
                    .map(|i| {
                        let (a, b) = (i as f64 * h, ((i + 1) as f64 * h).min(1.0));
                        let sa = gate_diffusion(g, v, a, &spec, &noise).unwrap();
                        let sb = gate_diffusion(g, v, b, &spec, &noise).unwrap();
                        (sb - sa).abs() / (b - a)
                    })
                    .fold(0.0f64, f64::max)
            };
            let coarse = quotient(1e-3);
            let fine = quotient(1e-5);
            assert!(fine.is_finite() && fine <= 1.5 * coarse + 1e-9, "{g:?} v={v}: {coarse} -> {fine}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn rates_are_finite_and_positive(g in gate(), v in -200.0..=200.0f64) {
        let spec = RateSpec::hodgkin_huxley();
        let (r, z) = (rho(g, v, &spec).unwrap(), zeta(g, v, &spec).unwrap());
        prop_assert!(r.is_finite() && r > 0.0);
        prop_assert!(z.is_finite() && z > 0.0);
    }

    #[test]
    fn drift_points_toward_equilibrium(g in gate(), v in -200.0..=200.0f64, u in 0.0..=1.0f64) {
        let spec = RateSpec::hodgkin_huxley();
        let (r, z) = (rho(g, v, &spec).unwrap(), zeta(g, v, &spec).unwrap());
        let target = r / (r + z);
        let b = gate_drift(g, v, u, &spec).unwrap();
        if (u - target).abs() > 1e-12 {
            prop_assert_eq!(b > 0.0, target > u);
        }
    }

    #[test]
    fn diffusion_squared_is_sigma_squared_times_rate_mix(
        g in gate(), v in -200.0..=200.0f64, u in 0.0..=1.0f64, sigma in 0.0..3.0f64,
    ) {
        let spec = RateSpec::hodgkin_huxley();
        let noise = NoiseSpec::new(sigma);
        let s = gate_diffusion(g, v, u, &spec, &noise).unwrap();
        let (r, z) = (rho(g, v, &spec).unwrap(), zeta(g, v, &spec).unwrap());
        let chi = noise.chi(u);
        let expected = sigma * sigma * (r * (1.0 - u) + z * u) * chi * chi;
        prop_assert!((s * s - expected).abs() <= 1e-12 * expected.max(1e-300));
    }

    #[test]
    fn voltage_drift_decomposes_linearly(
        s in neuron(), vbar in -80.0..40.0f64, ybar in 0.0..=1.0f64,
        j_e in 0.0..3.0f64, j_ch in 0.0..3.0f64, v_rev in -90.0..10.0f64,
    ) {
        let params = PopulationParams::hodgkin_huxley(25.0, 0.0);
        let spec = CouplingSpec::single(j_e, j_ch, v_rev);
        let means = NetworkState::new(vec![NeuronState::new(vbar, 0.5, 0.5, 0.5, ybar)], &[1])
            .unwrap()
            .population_means();
        let state = NetworkState::new(vec![s], &[1]).unwrap();
        let c = state.coupling_terms(0, &means, &spec).unwrap();
        let (a, r) = params.ionic_linear(s.m, s.n, s.h);
        prop_assert!(a + c.a >= params.g_l);
        let direct = hhsync_core::network::voltage_drift_f(s.v, s.m, s.n, s.h, &params)
            - j_e * (s.v - vbar)
            - j_ch * ybar * (s.v - v_rev);
        let linear = (r + c.r) - (a + c.a) * s.v;
        prop_assert!((direct - linear).abs() <= 1e-9 * (1.0 + direct.abs()));
        prop_assert!(r.abs() <= r_max(&params, &spec, 0) + 1e-9);
    }

    #[test]
    fn single_neuron_feels_no_electrical_drift(s in neuron(), j_e in 0.0..5.0f64) {
        let state = NetworkState::new(vec![s], &[1]).unwrap();
        let spec = CouplingSpec::single(j_e, 0.0, 0.0);
        let c = state.coupling_terms(0, &state.population_means(), &spec).unwrap();
        prop_assert!((c.r - c.a * s.v).abs() <= 1e-12 * (1.0 + s.v.abs() * j_e));
    }

    #[test]
    fn voltage_step_composes(v in -150.0..150.0f64, a in 0.0..200.0f64, r in -5000.0..5000.0f64, dt in 1e-4..0.1f64) {
        let one = exact_voltage_step(v, a, r, dt).unwrap();
        let half = exact_voltage_step(v, a, r, 0.5 * dt).unwrap();
        let two = exact_voltage_step(half, a, r, 0.5 * dt).unwrap();
        let scale = v.abs().max(one.abs()).max((r / a.max(1e-12)).abs().min(1e6)).max(1.0);
        prop_assert!((one - two).abs() <= 64.0 * f64::EPSILON * scale, "{one} vs {two}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gates_stay_in_unit_interval(
        seed in any::<u64>(), n in 1usize..12, sigma in 0.0..3.0f64,
        dt in prop::sample::select(vec![0.005f64, 0.01, 0.02, 0.05]),
        scheme in prop::sample::select(vec![Scheme::Epes, Scheme::EulerMaruyama]),
    ) {
        // explicit Euler on the stiff voltage equation diverges above ~0.01 ms
        let dt = if scheme == Scheme::EulerMaruyama { dt.min(0.01) } else { dt };
        let model = network_model(sigma, 1.0, 0.5, -70.0);
        let start = InitialLaw::default().sample(&model, &[n], &StreamRng::new(seed), 0).unwrap();
        let noise = ReplicaNoise::new(seed, 0);
        let cfg = StepConfig::new(dt, 5.0, scheme);
        simulate(&model, start, &cfg, &noise, |_, s| {
            assert!(s.neurons.iter().all(|x| x.gates_in_unit_interval()));
            Ok(())
        }).unwrap();
    }

    #[test]
    fn voltages_respect_the_a_priori_bound(
        seed in any::<u64>(), n in 1usize..12, sigma in 0.0..2.0f64,
        j_e in 0.0..2.0f64, j_ch in 0.0..2.0f64, v_rev in -80.0..10.0f64,
    ) {
        let model = network_model(sigma, j_e, j_ch, v_rev);
        let law = InitialLaw::default();
        let start = law.sample(&model, &[n], &StreamRng::new(seed), 1).unwrap();
        let cfg = StepConfig::epes(0.01, 20.0);
        let params = &model.populations[0];
        simulate(&model, start, &cfg, &ReplicaNoise::new(seed, 1), |k, s| {
            let bound = v_star(cfg.time(k), law.v0_max(), params, &model.coupling, 0).unwrap();
            assert!(s.max_abs_voltage() <= bound, "t={} |V|={} > {bound}", cfg.time(k), s.max_abs_voltage());
            Ok(())
        }).unwrap();
    }

    #[test]
    fn relabeling_neurons_and_streams_relabels_the_trajectory(
        seed in any::<u64>(), perm in Just((0..7usize).collect::<Vec<_>>()).prop_shuffle(), sigma in 0.0..2.0f64,
    ) {
        let model = network_model(sigma, 1.0, 0.3, -60.0);
        let start = InitialLaw::default().sample(&model, &[7], &StreamRng::new(seed), 0).unwrap();
        let permuted = NetworkState::new(perm.iter().map(|&p| start.neurons[p]).collect(), &[7]).unwrap();
        let base = ReplicaNoise::new(seed, 0);
        let relabeled = PermutedNoise { base: &base, perm: perm.clone() };
        let (mut a, mut b) = (start, permuted);
        let (mut c, mut d) = (a.clone(), b.clone());
        for k in 0..200 {
            advance(&mut a, &model, 0.01, Scheme::Epes, k, &base).unwrap();
            advance(&mut b, &model, 0.01, Scheme::Epes, k, &relabeled).unwrap();
            let means = vec![NeuronState::new(-60.0 + 0.1 * k as f64, 0.2, 0.4, 0.5, 0.1)];
            advance_with_means(&mut c, &model, &means, 0.01, Scheme::Epes, k, &base).unwrap();
            advance_with_means(&mut d, &model, &means, 0.01, Scheme::Epes, k, &relabeled).unwrap();
        }
        for (i, &p) in perm.iter().enumerate() {
            prop_assert_eq!(b.neurons[i].to_array().map(f64::to_bits), a.neurons[p].to_array().map(f64::to_bits));
            prop_assert_eq!(d.neurons[i].to_array().map(f64::to_bits), c.neurons[p].to_array().map(f64::to_bits));
        }
    }

    #[test]
    fn hat_trajectory_is_bounded(
        launch in neuron(), j_ch in 0.0..2.0f64, v_rev in -80.0..10.0f64, i_ext in 0.0..50.0f64,
    ) {
        let params = PopulationParams::hodgkin_huxley(i_ext, 0.0);
        let spec = CouplingSpec::single(0.0, j_ch, v_rev);
        let traj = hat_trajectory(launch, &params, j_ch, v_rev, 0.0, 30.0, 0.01, &HatSolver::Rk4).unwrap();
        let bound = launch.v.abs() + 2.0 * r_max(&params, &spec, 0) / params.g_l;
        for s in &traj.states {
            prop_assert!(s.gates_in_unit_interval());
            prop_assert!(s.v.abs() <= bound);
        }
    }
}

#[test]
fn limit_copies_are_confined_and_bounded() {
    let model = network_model(1.0, 1.0, 0.0, 0.0);
    let law = InitialLaw::default();
    let params = &model.populations[0];
    let reference = build_mean_field(&model, &[256], &law, &StepConfig::epes(0.01, 20.0), 5, &[]).unwrap();
    for t_end in [0.5, 2.0, 7.5, 20.0] {
        let cfg = StepConfig::epes(0.01, t_end);
        for replica in 0..4 {
            let run = coupled_copies(&model, &[16], &law, &cfg, &reference.curves, 5, replica, &[]).unwrap();
            let bound = v_star(t_end, law.v0_max(), params, &model.coupling, 0).unwrap();
            for s in &run.limit.neurons {
                assert!(s.gates_in_unit_interval());
                assert!(s.v.abs() <= bound, "t={t_end}: {} > {bound}", s.v);
            }
        }
    }
}
